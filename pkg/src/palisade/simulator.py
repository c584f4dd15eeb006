"""
Online-boutique style enterprise simulator: a fixed microservice
topology whose allowed flows emit TCP handshake log lines each step,
with breach injection and containment commands (block, restart). The
simulator doubles as the enforcement point the response loop drives.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from .ingest import TCP_FLAGS, LogEvent, render_log_line

DEFAULT_START_TIME = "2023-10-25 11:10:45"
HOST_BASE_PREFIX = "192.168.1."
HOST_BASE_OFFSET = 100
STEP_SECONDS = 10


class UnknownService(KeyError):
    """A command referenced a service not present in the topology."""


class UnknownComponent(KeyError):
    """A command or breach script referenced a missing component."""


@dataclass
class Component:
    name: str
    host_ip: str
    compromised: bool = False


@dataclass
class Service:
    name: str
    partition: str
    components: list[Component]


@dataclass
class Topology:
    services: list[Service]
    allowed_flows: list[tuple[str, str]]
    seed: int = 0
    start_time: str = DEFAULT_START_TIME

    @classmethod
    def from_dict(cls, raw: dict) -> "Topology":
        """Build a topology; host addresses are assigned sequentially from
        192.168.1.100 per component in declaration order."""
        services = []
        next_host = HOST_BASE_OFFSET
        for svc in raw["services"]:
            components = []
            for comp in svc["components"]:
                name = comp if isinstance(comp, str) else comp["name"]
                components.append(Component(name, f"{HOST_BASE_PREFIX}{next_host}"))
                next_host += 1
            services.append(Service(svc["name"], svc["partition"], components))
        names = {s.name for s in services}
        flows = []
        for src, dst in raw.get("allowed_flows", []):
            if src not in names or dst not in names:
                raise UnknownService(f"allowed flow references {src!r} -> {dst!r}")
            flows.append((src, dst))
        return cls(
            services=services,
            allowed_flows=flows,
            seed=int(raw.get("seed", 0)),
            start_time=str(raw.get("start_time", DEFAULT_START_TIME)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def service(self, name: str) -> Service:
        for svc in self.services:
            if svc.name == name:
                return svc
        raise UnknownService(name)

    def component(self, name: str) -> tuple[Service, Component]:
        for svc in self.services:
            for comp in svc.components:
                if comp.name == name:
                    return svc, comp
        raise UnknownComponent(name)


@dataclass
class BreachFlow:
    dst_service: str
    flag: str
    rate: int = 1


@dataclass
class BreachScript:
    component: str
    flows: list[BreachFlow]
    start_step: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "BreachScript":
        flows = [BreachFlow(f["dst"], f.get("flag", "SYN"), int(f.get("rate", 1)))
                 for f in raw["flows"]]
        for flow in flows:
            if flow.flag not in TCP_FLAGS:
                raise ValueError(f"breach flow flag {flow.flag!r} is not a TCP flag")
        return cls(component=raw["component"], flows=flows,
                   start_step=int(raw.get("start_step", 1)))

    @classmethod
    def load(cls, path: str | Path) -> "BreachScript":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jitter(seed: int, step: int, src: str, dst: str) -> int:
    digest = zlib.crc32(f"{seed}:{step}:{src}:{dst}".encode())
    return digest % 2


@dataclass
class _EmittedFlow:
    src_ip: str
    dst_ip: str
    # (flag, reversed) per line; reversed lines run dst -> src
    lines: list[tuple[str, bool]]


class EnterpriseSimulator:
    """Steps the topology, emitting one 4-line handshake per allowed flow
    per step plus any active breach traffic. Commands apply between steps.

    Output is fully determined by (topology, scripts, seed, command
    schedule): timestamp jitter is derived per (step, flow), so blocking
    one pair never perturbs another pair's lines.
    """

    # handshake as observed in the reference capture: the closing ACK is
    # answered by a second ACK from the responder
    HANDSHAKE = (("SYN", False), ("SYN-ACK", True), ("ACK", False), ("ACK", True))

    def __init__(self, topology: Topology):
        self.topology = topology
        self.step = 0
        self.scripts: list[BreachScript] = []
        self._blocked_host_pairs: set[tuple[str, str]] = set()
        self._base_time = datetime.strptime(topology.start_time, "%Y-%m-%d %H:%M:%S")

    # -- commands (the enterprise control interface) ----------------------

    def inject_breach(self, script: BreachScript) -> None:
        service, component = self.topology.component(script.component)
        for flow in script.flows:
            self.topology.service(flow.dst_service)
        component.compromised = True
        self.scripts.append(script)

    def block(self, subject_service: str, object_service: str) -> bool:
        """Suppress every future line from the subject's hosts to the object's."""
        subject = self.topology.service(subject_service)
        objekt = self.topology.service(object_service)
        for src_comp in subject.components:
            for dst_comp in objekt.components:
                self._blocked_host_pairs.add((src_comp.host_ip, dst_comp.host_ip))
        return True

    def restart(self, component_name: str) -> bool:
        """Restore a component to its intended state: breach flows cease."""
        _, component = self.topology.component(component_name)
        component.compromised = False
        return True

    # -- stepping ----------------------------------------------------------

    def _flow_events(self, step: int) -> list[LogEvent]:
        events: list[LogEvent] = []
        flows: list[_EmittedFlow] = []
        for src_service, dst_service in self.topology.allowed_flows:
            src = self.topology.service(src_service).components[0]
            dst = self.topology.service(dst_service).components[0]
            flows.append(_EmittedFlow(src.host_ip, dst.host_ip, list(self.HANDSHAKE)))
        for script in self.scripts:
            if step < script.start_step:
                continue
            _, component = self.topology.component(script.component)
            if not component.compromised:
                continue
            for flow in script.flows:
                dst = self.topology.service(flow.dst_service).components[0]
                flows.append(_EmittedFlow(component.host_ip, dst.host_ip,
                                          [(flow.flag, False)] * flow.rate))
        for emitted in flows:
            start = self._base_time + timedelta(
                seconds=(step - 1) * STEP_SECONDS
                + _jitter(self.topology.seed, step, emitted.src_ip, emitted.dst_ip))
            for offset, (flag, reverse) in enumerate(emitted.lines):
                src, dst = (emitted.dst_ip, emitted.src_ip) if reverse \
                    else (emitted.src_ip, emitted.dst_ip)
                # a block is directional: only matching src -> dst lines drop
                if (src, dst) in self._blocked_host_pairs:
                    continue
                events.append(LogEvent(start + timedelta(seconds=offset),
                                       src, dst, "TCP", flag))
        return events

    def run_steps(self, n: int) -> list[str]:
        """Advance n steps and return every emitted log line."""
        lines: list[str] = []
        for _ in range(n):
            self.step += 1
            lines.extend(render_log_line(e) for e in self._flow_events(self.step))
        return lines
