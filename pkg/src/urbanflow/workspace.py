"""Workspaces: shared dataflows with members, events, runs, and provenance.

The Hub owns users, templates, and workspaces on one embedded database; a
Workspace serializes mutations under a single-writer lock, records every
accepted edit as a provenance transaction plus one gapless event, and runs
the execution engine against spec snapshots. This module is fully usable
headless; the HTTP service is a thin wrapper around it.
"""

from __future__ import annotations

import hashlib
import threading
import time
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional

from . import model
from .annotations import AnnotationError
from .canonical import canonical_bytes, content_hash, from_canonical
from .engine import BuiltinExecutor, ExecutionContext, NodeRunResult, invalidate, \
    run_dataflow, run_node
from .interaction import InteractionError, LinkSpec, SelectionState, apply_selection, \
    augment, propagate, strip_augmentation
from .layers import DataLayer, deserialize_layer
from .model import Comment, DataflowSpec, ModelError, Mutation, mutation_to_doc
from .ops import TemplateError, TemplateRegistry, default_registry, template_from_doc, \
    template_to_doc
from .provenance import Database, ProvenanceError, ProvenanceStore
from .views import ViewError, table_view, view_descriptor


class WorkspaceError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _hash_token(token: str) -> str:
    return hashlib.sha256(token.encode()).hexdigest()


_SERVICE_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    key_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    token_hash TEXT PRIMARY KEY,
    user TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS workspaces (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS members (
    workspace TEXT NOT NULL,
    user TEXT NOT NULL,
    PRIMARY KEY (workspace, user)
);
CREATE TABLE IF NOT EXISTS events (
    workspace TEXT NOT NULL,
    seq INTEGER NOT NULL,
    kind TEXT NOT NULL,
    payload TEXT NOT NULL,
    actor TEXT NOT NULL,
    ts TEXT NOT NULL,
    PRIMARY KEY (workspace, seq)
);
CREATE TABLE IF NOT EXISTS templates (
    template_id TEXT PRIMARY KEY,
    doc TEXT NOT NULL
);
"""


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str  # mutation | run_result | selection | comment | rollback
    payload: dict
    actor: str
    ts: str

    def to_doc(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload,
                "actor": self.actor, "ts": self.ts}


class Hub:
    """Service root: users, sessions, templates, and workspace registry."""

    def __init__(self, db_path: str = ":memory:", data_dir: Optional[Path] = None,
                 capture_row_limit: int = 10_000, exec_timeout_ms: int = 60_000,
                 worker_argv: Optional[list[str]] = None):
        self.db = Database(db_path)
        self.db.executescript(_SERVICE_SCHEMA)
        self.prov = ProvenanceStore(self.db, capture_row_limit=capture_row_limit)
        self.data_dir = data_dir
        self.exec_timeout_ms = exec_timeout_ms
        # analysis nodes run out-of-process when a worker command is configured
        self.worker_argv = worker_argv
        self.registry = default_registry()
        self._workspaces: dict[str, Workspace] = {}
        self._lock = threading.Lock()
        for (doc,) in self.db.query("SELECT doc FROM templates"):
            t = template_from_doc(from_canonical(doc))
            if t.template_id not in self.registry:
                self.registry.register(t)

    # -- identity ------------------------------------------------------------

    def register_user(self, display_name: str) -> dict:
        if not display_name:
            raise WorkspaceError("invalid_request", "display_name required")
        user_id = "u" + uuid.uuid4().hex[:12]
        api_key = uuid.uuid4().hex
        self.db.execute("INSERT INTO users (id, display_name, key_hash) VALUES (?, ?, ?)",
                        (user_id, display_name, _hash_token(api_key)))
        return {"user_id": user_id, "api_key": api_key}

    def create_session(self, user_id: str, api_key: str) -> str:
        rows = self.db.query("SELECT key_hash FROM users WHERE id = ?", (user_id,))
        if not rows or rows[0][0] != _hash_token(api_key):
            raise WorkspaceError("unauthenticated", "bad credentials")
        token = uuid.uuid4().hex
        self.db.execute("INSERT INTO sessions (token_hash, user) VALUES (?, ?)",
                        (_hash_token(token), user_id))
        return token

    def authenticate(self, token: Optional[str]) -> str:
        if not token:
            raise WorkspaceError("unauthenticated", "missing bearer token")
        rows = self.db.query("SELECT user FROM sessions WHERE token_hash = ?",
                             (_hash_token(token),))
        if not rows:
            raise WorkspaceError("unauthenticated", "unknown token")
        return rows[0][0]

    def user_exists(self, user_id: str) -> bool:
        return bool(self.db.query("SELECT 1 FROM users WHERE id = ?", (user_id,)))

    # -- templates -------------------------------------------------------------

    def register_template(self, doc: dict) -> str:
        t = template_from_doc(doc)
        tid = self.registry.register(t)
        self.db.execute("INSERT INTO templates (template_id, doc) VALUES (?, ?)",
                        (tid, canonical_bytes(template_to_doc(t)).decode()))
        return tid

    # -- workspaces ------------------------------------------------------------

    def create_workspace(self, user: str, name: str) -> "Workspace":
        ws_id = "w" + uuid.uuid4().hex[:12]
        self.db.execute("INSERT INTO workspaces (id, name) VALUES (?, ?)", (ws_id, name))
        self.db.execute("INSERT INTO members (workspace, user) VALUES (?, ?)", (ws_id, user))
        ws = Workspace(self, ws_id, name)
        with self._lock:
            self._workspaces[ws_id] = ws
        spec = model.empty_spec(ws_id, name)
        ws._record(user, {"kind": "create", "name": name, "workspace": ws_id}, spec,
                   event_kind="mutation")
        return ws

    def workspace(self, ws_id: str) -> "Workspace":
        with self._lock:
            ws = self._workspaces.get(ws_id)
            if ws is not None:
                return ws
        rows = self.db.query("SELECT name FROM workspaces WHERE id = ?", (ws_id,))
        if not rows:
            raise WorkspaceError("unknown_id", ws_id)
        ws = Workspace(self, ws_id, rows[0][0])
        ws._load()
        with self._lock:
            return self._workspaces.setdefault(ws_id, ws)


class Workspace:
    def __init__(self, hub: Hub, ws_id: str, name: str):
        self.hub = hub
        self.id = ws_id
        self.name = name
        self.lock = threading.RLock()
        self.spec: DataflowSpec = model.empty_spec(ws_id, name)
        self.version: str = content_hash(model.spec_bytes(self.spec))
        self.selections: dict[str, SelectionState] = {}
        self.stale: set[str] = set()
        self.last_outputs: dict[str, list[str]] = {}
        self._events_cond = threading.Condition()
        self._executor = BuiltinExecutor()

    # -- persistence ----------------------------------------------------------

    def _load(self) -> None:
        txns = self.hub.prov.transactions(self.id)
        if txns:
            spec_bytes = self.hub.prov.spec_for_version(txns[-1]["dataflow_version"])
            self.spec = model.spec_from_doc(from_canonical(spec_bytes))
            self.version = txns[-1]["dataflow_version"]

    # -- membership -------------------------------------------------------------

    def members(self) -> list[str]:
        return [r[0] for r in self.hub.db.query(
            "SELECT user FROM members WHERE workspace = ? ORDER BY user", (self.id,))]

    def is_member(self, user: str) -> bool:
        return bool(self.hub.db.query(
            "SELECT 1 FROM members WHERE workspace = ? AND user = ?", (self.id, user)))

    def require_member(self, user: str) -> None:
        if not self.is_member(user):
            raise WorkspaceError("forbidden", f"{user} is not a member")

    def add_member(self, actor: str, user: str) -> None:
        self.require_member(actor)
        if not self.hub.user_exists(user):
            raise WorkspaceError("unknown_id", user)
        self.hub.db.execute("INSERT OR IGNORE INTO members (workspace, user) VALUES (?, ?)",
                            (self.id, user))

    # -- events -----------------------------------------------------------------

    def _emit(self, kind: str, payload: dict, actor: str) -> int:
        with self.hub.db.lock:
            row = self.hub.db.conn.execute(
                "SELECT COALESCE(MAX(seq), 0) FROM events WHERE workspace = ?",
                (self.id,)).fetchone()
            seq = row[0] + 1
            self.hub.db.conn.execute(
                "INSERT INTO events (workspace, seq, kind, payload, actor, ts) "
                "VALUES (?, ?, ?, ?, ?, ?)",
                (self.id, seq, kind, canonical_bytes(payload).decode(), actor, _now()))
            self.hub.db.conn.commit()
        with self._events_cond:
            self._events_cond.notify_all()
        return seq

    def events_since(self, after: int, timeout_ms: int = 0) -> list[Event]:
        """Long-poll: events with seq > after, or [] once the timeout passes."""
        deadline = time.monotonic() + min(timeout_ms, 60_000) / 1000.0
        while True:
            rows = self.hub.db.query(
                "SELECT seq, kind, payload, actor, ts FROM events "
                "WHERE workspace = ? AND seq > ? ORDER BY seq", (self.id, after))
            if rows or time.monotonic() >= deadline:
                return [Event(r[0], r[1], from_canonical(r[2]), r[3], r[4]) for r in rows]
            with self._events_cond:
                self._events_cond.wait(min(0.05, max(0.0, deadline - time.monotonic())))

    def latest_seq(self) -> int:
        rows = self.hub.db.query(
            "SELECT COALESCE(MAX(seq), 0) FROM events WHERE workspace = ?", (self.id,))
        return rows[0][0]

    # -- transactions ---------------------------------------------------------

    def _record(self, user: str, payload: dict, new_spec: DataflowSpec,
                event_kind: str) -> dict:
        spec_bytes = model.spec_bytes(new_spec)
        txn = self.hub.prov.record_transaction(self.id, user, _now(), payload, spec_bytes)
        self.spec = new_spec
        self.version = txn["dataflow_version"]
        seq = self._emit(event_kind,
                         {"mutation": payload, "dataflow_version": self.version}, user)
        txn["seq"] = seq
        return txn

    def apply(self, user: str, m: Mutation) -> dict:
        """Apply one mutation under the workspace lock; one txn + one event."""
        self.require_member(user)
        with self.lock:
            if m.kind == "add_node" and m.node is not None:
                if m.node.template_id not in self.hub.registry:
                    raise WorkspaceError("unknown_id", f"template {m.node.template_id}")
            new_spec = model.apply_mutation(self.spec, m, self.hub.registry.as_mapping())
            stale_nodes = self._stale_targets(self.spec, m)
            event_kind = "comment" if m.kind == "add_comment" else "mutation"
            txn = self._record(user, mutation_to_doc(m), new_spec, event_kind)
            self.stale |= {n for n in stale_nodes if new_spec.has_node(n)}
            if m.kind == "remove_node":
                self.selections.pop(m.node_id, None)
                self.last_outputs.pop(m.node_id, None)
            return txn

    @staticmethod
    def _stale_targets(spec: DataflowSpec, m: Mutation) -> set[str]:
        try:
            if m.kind in ("update_code", "set_widget_values"):
                return model.downstream_closure(spec, m.node_id)
            if m.kind == "add_node":
                return {m.node.id}
            if m.kind == "remove_node":
                return model.downstream_closure(spec, m.node_id) - {m.node_id}
            if m.kind == "add_edge" and m.data_dep is not None:
                return model.downstream_closure(spec, m.data_dep.target)
            if m.kind == "remove_edge" and m.edge_kind == "data":
                return model.downstream_closure(spec, m.edge[1])
        except ModelError:
            pass
        return set()

    def comment(self, user: str, node_id: str, text: str) -> str:
        if not text:
            raise WorkspaceError("empty_comment", node_id)
        c = Comment(id="c" + uuid.uuid4().hex[:12], user=user, created_at=_now(), text=text)
        self.apply(user, Mutation.add_comment(node_id, c))
        return c.id

    def rollback(self, user: str, node_id: str, version: str) -> dict:
        """Restore a node's code to an earlier version, as a new transaction."""
        self.require_member(user)
        with self.lock:
            if not self.spec.has_node(node_id):
                raise WorkspaceError("unknown_id", node_id)
            v = self.hub.prov.get_version(self.id, node_id, version)
            payload = {"kind": "rollback", "node_id": node_id, "version": version,
                       "code": v["code"]}
            new_spec = apply_rollback_payload(self.spec, payload)
            txn = self._record(user, payload, new_spec, event_kind="rollback")
            self.stale |= model.downstream_closure(new_spec, node_id)
            return {**txn, "code": v["code"]}

    # -- execution --------------------------------------------------------------

    def _context(self, user: str) -> ExecutionContext:
        executors: dict = {"_default": self._executor}
        if self.hub.worker_argv:
            from .engine import ExternalProcessExecutor
            executors["analysis"] = ExternalProcessExecutor(
                self.hub.worker_argv, timeout_ms=self.hub.exec_timeout_ms)
        return ExecutionContext(
            workspace=self.id, user=user, store=self.hub.prov,
            registry=self.hub.registry,
            executors=executors,
            data_dir=self.hub.data_dir, selections=self.selections,
            stale=self.stale, recorder=self.hub.prov,
            dataflow_version=self.version,
        )

    def run(self, user: str, node_id: Optional[str] = None,
            parallel: bool = False) -> list[NodeRunResult]:
        self.require_member(user)
        with self.lock:
            spec = self.spec
            ctx = self._context(user)
        if node_id is not None:
            if not spec.has_node(node_id):
                raise WorkspaceError("unknown_id", node_id)
            results = [run_node(spec, node_id, ctx)]
        else:
            results = run_dataflow(spec, ctx, parallel=parallel)
        with self.lock:
            for r in results:
                if r.status != "error":
                    self.last_outputs[r.node] = list(r.outputs)
        self._emit("run_result", {"results": [r.to_doc() for r in results]}, user)
        return results

    # -- selections --------------------------------------------------------------

    def _interaction_links(self) -> list[LinkSpec]:
        links = []
        for e in self.spec.interaction_deps:
            if e.link is None:
                continue
            links.append(LinkSpec(e.endpoint_a, e.endpoint_b, e.link[0], e.link[1]))
        return links

    def _interaction_input_layer(self, node_id: str) -> DataLayer:
        """The layer an interaction node selects over: its port-0 input."""
        for d in self.spec.data_deps:
            if d.target != node_id:
                continue
            for out_port, in_port in d.layer_slots:
                if in_port == 0:
                    outputs = self.last_outputs.get(d.source)
                    if not outputs or out_port >= len(outputs):
                        raise WorkspaceError("node_not_run", d.source)
                    body = self.hub.prov.get_layer(outputs[out_port])
                    if body is None:
                        raise WorkspaceError("node_not_run", d.source)
                    return strip_augmentation(deserialize_layer(body))
        raise WorkspaceError("node_not_run", f"{node_id} has no bound input")

    def post_selection(self, user: str, node_id: str, ids: Iterable[int],
                       mode: str) -> dict[str, SelectionState]:
        self.require_member(user)
        with self.lock:
            node = self.spec.node(node_id)  # raises unknown_id
            if node.kind != "interaction":
                raise WorkspaceError("unknown_id", f"{node_id} is not an interaction node")
            layer = self._interaction_input_layer(node_id)
            state = self.selections.get(node_id) or SelectionState(node_id)
            try:
                state = apply_selection(state, frozenset(ids), mode, len(layer.records))
            except InteractionError as e:
                raise WorkspaceError(e.code, e.detail)
            links = self._interaction_links()
            involved = {node_id}
            for l in links:
                involved |= {l.from_node, l.to_node}
            states = {}
            layers = {}
            for n in involved:
                if n == node_id:
                    states[n] = state
                else:
                    states[n] = self.selections.get(n) or SelectionState(n)
                layers[n] = self._interaction_input_layer(n)
            try:
                updated = propagate(node_id, states, links, layers)
            except InteractionError as e:
                raise WorkspaceError(e.code, e.detail)
            self.selections.update(updated)
            payload = {
                "origin": node_id, "mode": mode, "ids": sorted(frozenset(ids)),
                "states": {
                    n: {"selected": sorted(s.selected), "revision": s.revision}
                    for n, s in sorted(updated.items())
                },
            }
        self._emit("selection", payload, user)
        return updated

    # -- views and output ----------------------------------------------------------

    def _node_layer(self, node_id: str) -> DataLayer:
        outputs = self.last_outputs.get(node_id)
        if not outputs:
            raise WorkspaceError("node_not_run", node_id)
        body = self.hub.prov.get_layer(outputs[0])
        if body is None:
            raise WorkspaceError("node_not_run", node_id)
        return deserialize_layer(body)

    def _selection_for_view(self, node_id: str) -> Optional[SelectionState]:
        node = self.spec.node(node_id)
        if node.kind == "interaction":
            return self.selections.get(node_id) or SelectionState(node_id)
        for e in sorted(self.spec.interaction_deps,
                        key=lambda e: (e.endpoint_a, e.endpoint_b)):
            other = None
            if e.endpoint_a == node_id:
                other = e.endpoint_b
            elif e.endpoint_b == node_id:
                other = e.endpoint_a
            if other is not None and self.spec.has_node(other) \
                    and self.spec.node(other).kind == "interaction":
                return self.selections.get(other) or SelectionState(other)
        return None

    def output_envelope(self, user: str, node_id: str) -> bytes:
        from .layers import serialize_layer
        self.require_member(user)
        node = self.spec.node(node_id)
        layer = self._node_layer(node_id)
        if node.kind == "interaction":
            state = self.selections.get(node_id) or SelectionState(node_id)
            layer = augment(strip_augmentation(layer), state)
        return serialize_layer(layer)

    def widgets(self, user: str, node_id: str) -> list[dict]:
        """GUI-facet descriptors for a node (parse errors surface as-is)."""
        from .annotations import parse_annotations, widget_descriptors
        self.require_member(user)
        node = self.spec.node(node_id)
        sites = parse_annotations(node.canonical_code)
        descs = widget_descriptors(sites, node.widget_values)
        return [
            {"ordinal": d.ordinal, "widget": d.widget, "label": d.label,
             "constraints": d.constraints, "current": d.current}
            for d in descs
        ]

    def view(self, user: str, node_id: str) -> dict:
        """Current ViewDescriptor: live selection re-applied on demand."""
        self.require_member(user)
        node = self.spec.node(node_id)
        layer = strip_augmentation(self._node_layer(node_id))
        selection = self._selection_for_view(node_id)
        if selection is not None and selection.selected - set(range(len(layer.records))):
            selection = replace(selection, selected=frozenset(
                i for i in selection.selected if i < len(layer.records)))
        if node.kind != "visualization":
            return table_view(layer, limit=50)
        try:
            code = _resolved_code(node)
            doc = from_canonical(code)
        except (AnnotationError, ValueError) as e:
            raise WorkspaceError("malformed_annotation", str(e))
        try:
            return view_descriptor(layer, doc, selection)
        except ViewError as e:
            raise WorkspaceError(e.code, e.detail)

    # -- documents -------------------------------------------------------------

    def describe(self, mode: Optional[str] = None) -> dict:
        with self.lock:
            spec = self.spec
            if mode == "visualization":
                pinned = tuple(n for n in spec.nodes if n.pinned)
                spec = replace(spec, nodes=pinned, data_deps=(), interaction_deps=(),
                               canvas={k: v for k, v in spec.canvas.items()
                                       if any(n.id == k for n in pinned)})
            return {
                "id": self.id, "name": self.name,
                "spec": model.spec_to_doc(spec),
                "members": self.members(),
                "latest_seq": self.latest_seq(),
                "version": self.version,
                "stale": sorted(self.stale),
                "selections": {
                    n: {"selected": sorted(s.selected), "revision": s.revision}
                    for n, s in sorted(self.selections.items())
                },
                "mode": mode or "workspace",
            }


def _resolved_code(node: model.NodeSpec) -> str:
    from .engine import resolve_code
    return resolve_code(node)


def apply_rollback_payload(spec: DataflowSpec, payload: dict) -> DataflowSpec:
    """Rollback = restore code bytes exactly and reset widget values."""
    node_id = payload["node_id"]
    nodes = tuple(
        replace(n, canonical_code=payload["code"], widget_values={})
        if n.id == node_id else n
        for n in spec.nodes
    )
    if not any(n.id == node_id for n in spec.nodes):
        raise ModelError("unknown_id", node_id)
    return replace(spec, nodes=nodes)


def replay_payloads(payloads: Iterable[dict], ws_id: str, name: str) -> DataflowSpec:
    """Rebuild a spec from recorded transaction (or event-mutation) payloads."""
    spec = model.empty_spec(ws_id, name)
    for p in payloads:
        kind = p.get("kind")
        if kind == "create":
            spec = model.empty_spec(p.get("workspace", ws_id), p.get("name", name))
        elif kind == "rollback":
            spec = apply_rollback_payload(spec, p)
        else:
            spec = model.apply_mutation(spec, model.mutation_from_doc(p))
    return spec


def replay_transactions(hub: Hub, ws_id: str, name: str) -> DataflowSpec:
    payloads = [t["payload"] for t in hub.prov.transactions(ws_id)]
    return replay_payloads(payloads, ws_id, name)


def replay_events(events: Iterable[Event], ws_id: str, name: str) -> DataflowSpec:
    payloads = []
    for e in events:
        if e.kind in ("mutation", "comment", "rollback"):
            payloads.append(e.payload["mutation"])
    return replay_payloads(payloads, ws_id, name)
