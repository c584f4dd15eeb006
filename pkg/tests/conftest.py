import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def handshake_lines() -> list[str]:
    return (FIXTURES / "handshake.log").read_text().splitlines()


@pytest.fixture
def roe_text() -> str:
    return (FIXTURES / "roe.jsonl").read_text()


@pytest.fixture
def frontend_config() -> dict:
    return json.loads((FIXTURES / "frontend_config.json").read_text())


@pytest.fixture
def ob_topology() -> dict:
    return json.loads((FIXTURES / "ob_topology.json").read_text())
