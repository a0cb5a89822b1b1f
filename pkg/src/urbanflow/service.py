"""REST surface over the workspace hub (bearer-token auth, long-poll events).

All bodies are the same canonical JSON documents the rest of the package
uses; the service adds nothing but transport.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from fastapi import FastAPI, Header, Query, Request, Response

from . import model
from .annotations import AnnotationError
from .canonical import canonical_bytes
from .engine import EngineError
from .interaction import InteractionError
from .layers import LayerError
from .model import ModelError
from .ops import TemplateError, template_to_doc
from .provenance import ProvenanceError
from .views import ViewError
from .workspace import Hub, WorkspaceError

_STATUS = {
    "unauthenticated": 401,
    "forbidden": 403,
    "unknown_id": 404,
    "unknown_version": 404,
    "unknown_template": 404,
    "duplicate_id": 409,
    "duplicate_template_id": 409,
    "would_create_cycle": 409,
    "port_conflict": 409,
    "layer_kind_mismatch": 409,
    "missing_data_dep": 409,
    "node_not_run": 409,
    "empty_comment": 400,
    "invalid_request": 400,
    "malformed_annotation": 400,
    "value_out_of_constraints": 400,
    "invalid_annotation_syntax": 400,
}


def _error(code: str, detail: str) -> Response:
    return Response(
        content=canonical_bytes({"error": code, "detail": detail}),
        status_code=_STATUS.get(code, 400),
        media_type="application/json",
    )


def _json(payload: Any, status: int = 200) -> Response:
    return Response(content=canonical_bytes(payload), status_code=status,
                    media_type="application/json")


def create_app(hub: Hub) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="urbanflow", docs_url=None, redoc_url=None)
    app.state.hub = hub
    # the canvas UI is served separately; auth is bearer-token, not cookies
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    _ERRORS = (WorkspaceError, ModelError, TemplateError, ProvenanceError,
               EngineError, InteractionError, ViewError, LayerError, AnnotationError)

    async def _domain_error(request: Request, exc: Exception):
        return _error(exc.code, exc.detail)  # type: ignore[attr-defined]

    for _cls in _ERRORS:
        app.add_exception_handler(_cls, _domain_error)

    def auth(authorization: Optional[str]) -> str:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:]
        return hub.authenticate(token)

    async def body_of(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as e:
            raise WorkspaceError("invalid_request", f"bad JSON body: {e}")
        if not isinstance(doc, dict):
            raise WorkspaceError("invalid_request", "body must be an object")
        return doc

    # -- identity -----------------------------------------------------------

    @app.post("/users")
    async def register_user(request: Request):
        doc = await body_of(request)
        return _json(hub.register_user(doc.get("display_name", "")), 201)

    @app.post("/sessions")
    async def create_session(request: Request):
        doc = await body_of(request)
        token = hub.create_session(doc.get("user_id", ""), doc.get("api_key", ""))
        return _json({"token": token}, 201)

    # -- templates -----------------------------------------------------------

    @app.get("/templates")
    async def list_templates(kind: Optional[str] = None,
                             authorization: Optional[str] = Header(None)):
        auth(authorization)
        return _json({"templates": [template_to_doc(t) for t in hub.registry.list(kind)]})

    @app.post("/templates")
    async def register_template(request: Request,
                                authorization: Optional[str] = Header(None)):
        auth(authorization)
        doc = await body_of(request)
        tid = hub.register_template(doc)
        return _json({"template_id": tid}, 201)

    @app.get("/templates/{tid}")
    async def get_template(tid: str, authorization: Optional[str] = Header(None)):
        auth(authorization)
        return _json(template_to_doc(hub.registry.get(tid)))

    # -- workspaces -----------------------------------------------------------

    @app.post("/workspaces")
    async def create_workspace(request: Request,
                               authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.create_workspace(user, doc.get("name", "untitled"))
        return _json({"workspace_id": ws.id, "version": ws.version}, 201)

    @app.get("/workspaces/{ws_id}")
    async def get_workspace(ws_id: str, mode: Optional[str] = None,
                            authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        ws.require_member(user)
        return _json(ws.describe(mode))

    @app.post("/workspaces/{ws_id}/members")
    async def add_member(ws_id: str, request: Request,
                         authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.workspace(ws_id)
        ws.add_member(user, doc.get("user_id", ""))
        return _json({"members": ws.members()})

    @app.get("/workspaces/{ws_id}/events")
    async def poll_events(ws_id: str, after: int = Query(0), timeout: int = Query(0),
                          authorization: Optional[str] = Header(None)):
        import anyio
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        ws.require_member(user)
        events = await anyio.to_thread.run_sync(ws.events_since, after, timeout)
        return _json({"events": [e.to_doc() for e in events]})

    @app.post("/workspaces/{ws_id}/mutations")
    async def post_mutation(ws_id: str, request: Request,
                            authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        if "mutation" not in doc:
            raise WorkspaceError("invalid_request", "missing mutation")
        ws = hub.workspace(ws_id)
        m = model.mutation_from_doc(doc["mutation"])
        txn = ws.apply(user, m)
        return _json({"version": txn["dataflow_version"], "seq": txn["seq"],
                      "txn_id": txn["txn_id"]}, 201)

    @app.post("/workspaces/{ws_id}/run")
    async def run_all(ws_id: str, request: Request,
                      authorization: Optional[str] = Header(None)):
        import anyio
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.workspace(ws_id)
        results = await anyio.to_thread.run_sync(
            lambda: ws.run(user, parallel=bool(doc.get("parallel", False))))
        return _json({"results": [r.to_doc() for r in results]})

    @app.post("/workspaces/{ws_id}/nodes/{nid}/run")
    async def run_one(ws_id: str, nid: str,
                      authorization: Optional[str] = Header(None)):
        import anyio
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        results = await anyio.to_thread.run_sync(lambda: ws.run(user, node_id=nid))
        return _json({"results": [r.to_doc() for r in results]})

    @app.get("/workspaces/{ws_id}/nodes/{nid}/output")
    async def node_output(ws_id: str, nid: str, format: str = Query("envelope"),
                          authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        if format == "view":
            return _json(ws.view(user, nid))
        if format != "envelope":
            raise WorkspaceError("invalid_request", f"unknown format {format!r}")
        return Response(content=ws.output_envelope(user, nid),
                        media_type="application/json")

    @app.get("/workspaces/{ws_id}/nodes/{nid}/widgets")
    async def node_widgets(ws_id: str, nid: str,
                           authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        return _json({"widgets": ws.widgets(user, nid)})

    @app.get("/workspaces/{ws_id}/nodes/{nid}/provenance/tree")
    async def provenance_tree(ws_id: str, nid: str,
                              authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        ws.require_member(user)
        return _json({"node": nid, "versions": hub.prov.version_tree(ws_id, nid)})

    @app.post("/workspaces/{ws_id}/nodes/{nid}/provenance/rollback")
    async def rollback(ws_id: str, nid: str, request: Request,
                       authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.workspace(ws_id)
        txn = ws.rollback(user, nid, doc.get("version", ""))
        return _json({"version": txn["dataflow_version"], "seq": txn["seq"],
                      "code": txn["code"]})

    @app.get("/workspaces/{ws_id}/nodes/{nid}/comments")
    async def get_comments(ws_id: str, nid: str,
                           authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        ws.require_member(user)
        node = ws.spec.node(nid)
        return _json({"comments": [
            {"id": c.id, "user": c.user, "created_at": c.created_at, "text": c.text}
            for c in node.comments
        ]})

    @app.post("/workspaces/{ws_id}/nodes/{nid}/comments")
    async def post_comment(ws_id: str, nid: str, request: Request,
                           authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.workspace(ws_id)
        cid = ws.comment(user, nid, doc.get("text", ""))
        return _json({"comment_id": cid}, 201)

    @app.post("/workspaces/{ws_id}/interactions/{inid}/selection")
    async def post_selection(ws_id: str, inid: str, request: Request,
                             authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        doc = await body_of(request)
        ws = hub.workspace(ws_id)
        states = ws.post_selection(user, inid, doc.get("ids", []),
                                   doc.get("mode", "replace"))
        return _json({"states": {
            n: {"selected": sorted(s.selected), "revision": s.revision}
            for n, s in sorted(states.items())
        }})

    @app.get("/workspaces/{ws_id}/prov/export")
    async def prov_export(ws_id: str, authorization: Optional[str] = Header(None)):
        user = auth(authorization)
        ws = hub.workspace(ws_id)
        ws.require_member(user)
        return _json(hub.prov.export_prov(ws_id))

    return app
