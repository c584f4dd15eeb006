"""
HTTP tier: sessions, queries, ingestion, verdict/audit inspection and
graph export over JSON. One gateway owns one graph and one orchestrator;
a scenario file can pre-seed both at startup.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime

import httpx
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .config import GatewayConfig, load_registry
from .graph import MalformedRecord, PropertyGraph
from .ingest import (
    MalformedRule,
    ParseError,
    SchemaError,
    export_model_input,
    ingest_config,
    ingest_log_events,
    ingest_roe,
    load_config_document,
    parse_log_text,
)
from .llm import RemoteLlm, StubLlm
from .orchestrator import Orchestrator, SessionState
from .retrieval import (
    BackendUnavailable,
    HashedBagEmbedder,
    RemoteEmbedder,
    RetrievalService,
)
from .scenario import ScenarioRunner, load_scenario


class GatewayState:
    """Everything one gateway instance owns."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.sessions: dict[str, SessionState] = {}
        self._session_lock = threading.Lock()

        registry = load_registry(config.resolve(config.template_registry))
        if config.llm_backend == "stub":
            adapter = StubLlm()
        else:
            adapter = RemoteLlm(config.llm_backend)
        if config.embedding_backend == "stub":
            embedder = HashedBagEmbedder(config.embedding_dim)
        else:
            embedder = RemoteEmbedder(config.embedding_backend, config.embedding_dim)

        self.runner: ScenarioRunner | None = None
        if config.scenario:
            spec = load_scenario(config.resolve(config.scenario))
            self.runner = ScenarioRunner(
                spec, registry=registry, adapter=adapter,
                retrieval_k=config.retrieval_k,
                embedding_dim=config.embedding_dim,
                audit_sink=str(config.resolve(config.audit_sink)) if config.audit_sink else None,
            )
            self.runner.retrieval.embedder = embedder
            self.runner.retrieval.index.embedder = embedder
            self.scenario_result = self.runner.run()
            self.graph = self.runner.graph
            self.orchestrator = self.runner.orchestrator
        else:
            self.scenario_result = None
            self.graph = PropertyGraph()
            retrieval = RetrievalService(self.graph, embedder=embedder,
                                         dimensions=config.embedding_dim)
            self.orchestrator = Orchestrator(
                self.graph, retrieval, registry, adapter,
                retrieval_k=config.retrieval_k,
                audit_sink=str(config.resolve(config.audit_sink)) if config.audit_sink else None,
            )
        self.adapter = adapter

    def new_session(self) -> SessionState:
        with self._session_lock:
            session = self.orchestrator.create_session()
            self.sessions[session.session_id] = session
            return session

    def session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}") from None

    def backend_reachable(self) -> bool | None:
        url = self.config.llm_backend
        if url == "stub":
            return True
        try:
            httpx.get(url, timeout=2.0)
            return True
        except httpx.HTTPError:
            return False


def create_app(config: GatewayConfig | None = None) -> FastAPI:
    state = GatewayState(config or GatewayConfig())
    app = FastAPI(title="palisade gateway")
    app.state.gateway = state
    # desk-scale scope: the chat client may be served from any origin
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(ParseError)
    @app.exception_handler(SchemaError)
    @app.exception_handler(MalformedRule)
    @app.exception_handler(MalformedRecord)
    def bad_ingest(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.post("/sessions", status_code=201)
    def create_session() -> dict:
        return {"session_id": state.new_session().session_id}

    @app.get("/sessions/{session_id}/history")
    def session_history(session_id: str) -> dict:
        session = state.session(session_id)
        return {
            "session_id": session.session_id,
            "history": [{"query": q, **answers.to_payload()}
                        for q, answers in session.history],
        }

    @app.post("/sessions/{session_id}/query")
    def post_query(session_id: str, body: dict) -> dict:
        session = state.session(session_id)
        text = (body or {}).get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(status_code=422, detail="query text is required")
        try:
            answer_set = state.orchestrator.dispatch_query(session, text)
        except BackendUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return answer_set.to_payload()

    @app.post("/ingest/logs")
    async def ingest_logs(request: Request) -> dict:
        text = (await request.body()).decode("utf-8")
        events = parse_log_text(text)
        with state.graph.lock.write():
            report = ingest_log_events(events, state.graph)
        state.orchestrator.refresh()
        return report.to_dict()

    @app.post("/ingest/config")
    async def ingest_config_doc(request: Request) -> dict:
        doc = load_config_document((await request.body()).decode("utf-8"))
        with state.graph.lock.write():
            report = ingest_config(doc, state.graph)
        state.orchestrator.refresh()
        return report.to_dict()

    @app.post("/ingest/roe")
    async def ingest_roe_text(request: Request) -> dict:
        text = (await request.body()).decode("utf-8")
        with state.graph.lock.write():
            count = ingest_roe(text, state.graph)
        state.orchestrator.refresh()
        return {"rules": count}

    @app.get("/verdicts")
    def verdicts(since: str | None = None) -> Response:
        cutoff = None
        if since:
            try:
                cutoff = datetime.strptime(since, "%Y-%m-%d %H:%M:%S")
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail="since must be YYYY-MM-DD HH:MM:SS") from None
        lines = []
        for verdict in state.orchestrator.verdict_log:
            if cutoff is not None and verdict.event.timestamp < cutoff:
                continue
            lines.append(json.dumps(verdict.to_dict()))
        return PlainTextResponse("".join(line + "\n" for line in lines),
                                 media_type="application/x-ndjson")

    @app.get("/graph/export")
    def graph_export() -> Response:
        with state.graph.lock.read():
            text = state.graph.export_jsonl()
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.get("/model-input/export")
    def model_input_export() -> Response:
        with state.graph.lock.read():
            text = export_model_input(state.graph)
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "llm_backend": state.config.llm_backend,
            "llm_reachable": state.backend_reachable(),
            "embedding_backend": state.config.embedding_backend,
            "logging": "degraded" if state.orchestrator.audit.degraded else "ok",
            "vertices": state.graph.vertex_count(),
            "edges": state.graph.edge_count(),
            "rules": len(state.orchestrator.rules),
            "sessions": len(state.sessions),
            "scenario_loaded": state.runner is not None,
        }

    return app
