"""Provenance: transactions, per-node version trees, executions, PROV export.

Backed by an embedded SQLite database (":memory:" for tests). The same
database doubles as the content-addressed layer store and execution cache,
so every hash a provenance record references is resolvable in-place.
Node-version identity is the content hash of (template id, code): editing a
node back to an ancestor's exact bytes re-points to that ancestor instead of
minting a duplicate, and rollback+edit branches the tree.
"""

from __future__ import annotations

import sqlite3
import threading
import uuid
from dataclasses import dataclass
from typing import Any, Optional

from .canonical import canonical_bytes, content_hash, from_canonical, hash_obj
from .layers import deserialize_layer


class ProvenanceError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


_SCHEMA = """
CREATE TABLE IF NOT EXISTS layers (
    hash TEXT PRIMARY KEY,
    body BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS run_cache (
    key TEXT PRIMARY KEY,
    outputs TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS transactions (
    workspace TEXT NOT NULL,
    seq INTEGER NOT NULL,
    txn_id TEXT NOT NULL,
    user TEXT NOT NULL,
    ts TEXT NOT NULL,
    payload TEXT NOT NULL,
    dataflow_version TEXT NOT NULL,
    PRIMARY KEY (workspace, seq)
);
CREATE TABLE IF NOT EXISTS dataflow_versions (
    id TEXT PRIMARY KEY,
    spec BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS node_versions (
    workspace TEXT NOT NULL,
    node TEXT NOT NULL,
    id TEXT NOT NULL,
    parent TEXT,
    template TEXT NOT NULL,
    code TEXT NOT NULL,
    created_by TEXT NOT NULL,
    ts TEXT NOT NULL,
    PRIMARY KEY (workspace, node, id)
);
CREATE TABLE IF NOT EXISTS node_current (
    workspace TEXT NOT NULL,
    node TEXT NOT NULL,
    version TEXT NOT NULL,
    PRIMARY KEY (workspace, node)
);
CREATE TABLE IF NOT EXISTS executions (
    id TEXT PRIMARY KEY,
    workspace TEXT NOT NULL,
    kind TEXT NOT NULL,
    dataflow_version TEXT,
    node TEXT,
    node_version TEXT,
    cached INTEGER NOT NULL,
    status TEXT NOT NULL,
    started TEXT NOT NULL,
    ended TEXT NOT NULL,
    user TEXT NOT NULL,
    log TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS execution_layers (
    execution TEXT NOT NULL,
    direction TEXT NOT NULL,
    position INTEGER NOT NULL,
    hash TEXT NOT NULL,
    capture TEXT NOT NULL,
    row_count INTEGER NOT NULL,
    schema TEXT NOT NULL,
    stats TEXT NOT NULL
);
"""


class Database:
    """One serialized SQLite connection shared by provenance + service state."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self.conn = sqlite3.connect(path, check_same_thread=False)
        self.conn.execute("PRAGMA journal_mode=WAL")
        self.lock = threading.RLock()

    def execute(self, sql: str, params: tuple = ()) -> sqlite3.Cursor:
        with self.lock:
            cur = self.conn.execute(sql, params)
            self.conn.commit()
            return cur

    def query(self, sql: str, params: tuple = ()) -> list[tuple]:
        with self.lock:
            return self.conn.execute(sql, params).fetchall()

    def executescript(self, sql: str) -> None:
        with self.lock:
            self.conn.executescript(sql)
            self.conn.commit()


def node_version_id(template_id: str, code: str) -> str:
    return hash_obj({"template": template_id, "code": code})


def _numeric_stats(layer) -> dict:
    stats = {}
    for i, a in enumerate(layer.schema):
        if a.dtype != "number":
            continue
        vals = [r[i] for r in layer.records if r[i] is not None]
        stats[a.name] = {
            "count": len(vals),
            "min": min(vals) if vals else None,
            "max": max(vals) if vals else None,
            "mean": sum(vals) / len(vals) if vals else None,
        }
    return stats


class ProvenanceStore:
    """Also serves as the engine's content store + cache (see module docstring)."""

    def __init__(self, db: Database | str = ":memory:", capture_row_limit: int = 10_000):
        self.db = db if isinstance(db, Database) else Database(db)
        self.capture_row_limit = capture_row_limit
        self.db.executescript(_SCHEMA)

    # -- content store / cache (engine-facing) ------------------------------

    def put_layer(self, data: bytes) -> str:
        h = content_hash(data)
        self.db.execute("INSERT OR IGNORE INTO layers (hash, body) VALUES (?, ?)", (h, data))
        return h

    def get_layer(self, h: str) -> Optional[bytes]:
        rows = self.db.query("SELECT body FROM layers WHERE hash = ?", (h,))
        return rows[0][0] if rows else None

    def cache_get(self, key: str) -> Optional[list[str]]:
        rows = self.db.query("SELECT outputs FROM run_cache WHERE key = ?", (key,))
        return from_canonical(rows[0][0]) if rows else None

    def cache_put(self, key: str, outputs: list[str]) -> None:
        self.db.execute("INSERT OR REPLACE INTO run_cache (key, outputs) VALUES (?, ?)",
                        (key, canonical_bytes(outputs).decode()))

    # -- transactions and node versions -------------------------------------

    def record_transaction(self, workspace: str, user: str, ts: str,
                           payload: dict, spec_bytes: bytes) -> dict:
        """Append one transaction; maintains version trees per mutation kind."""
        with self.db.lock:
            version = content_hash(spec_bytes)
            self.db.conn.execute(
                "INSERT OR IGNORE INTO dataflow_versions (id, spec) VALUES (?, ?)",
                (version, spec_bytes))
            row = self.db.conn.execute(
                "SELECT COALESCE(MAX(seq), 0) FROM transactions WHERE workspace = ?",
                (workspace,)).fetchone()
            seq = row[0] + 1
            txn_id = f"{workspace}:{seq}"
            self.db.conn.execute(
                "INSERT INTO transactions (workspace, seq, txn_id, user, ts, payload, "
                "dataflow_version) VALUES (?, ?, ?, ?, ?, ?, ?)",
                (workspace, seq, txn_id, user, ts,
                 canonical_bytes(payload).decode(), version))
            self._apply_version_bookkeeping(workspace, user, ts, payload)
            self.db.conn.commit()
        return {"txn_id": txn_id, "seq": seq, "user": user, "ts": ts,
                "dataflow_version": version}

    def _apply_version_bookkeeping(self, workspace: str, user: str, ts: str,
                                   payload: dict) -> None:
        kind = payload.get("kind")
        if kind == "add_node":
            node = payload["node"]
            self._ensure_version(workspace, node["id"], node["template_id"],
                                 node["canonical_code"], user, ts, parent=None,
                                 point=True)
        elif kind == "update_code":
            node_id = payload["node_id"]
            template = self._template_of(workspace, node_id) or payload.get("template_id", "")
            self._ensure_version(workspace, node_id, template, payload["code"],
                                 user, ts, parent=self.current_version(workspace, node_id),
                                 point=True)
        elif kind == "rollback":
            node_id = payload["node_id"]
            version = payload["version"]
            rows = self.db.conn.execute(
                "SELECT 1 FROM node_versions WHERE workspace=? AND node=? AND id=?",
                (workspace, node_id, version)).fetchall()
            if not rows:
                raise ProvenanceError("unknown_version", version)
            self.db.conn.execute(
                "INSERT OR REPLACE INTO node_current (workspace, node, version) "
                "VALUES (?, ?, ?)", (workspace, node_id, version))

    def _template_of(self, workspace: str, node: str) -> Optional[str]:
        rows = self.db.conn.execute(
            "SELECT template FROM node_versions WHERE workspace=? AND node=? LIMIT 1",
            (workspace, node)).fetchall()
        return rows[0][0] if rows else None

    def _ensure_version(self, workspace: str, node: str, template: str, code: str,
                        user: str, ts: str, parent: Optional[str], point: bool) -> str:
        vid = node_version_id(template, code)
        rows = self.db.conn.execute(
            "SELECT 1 FROM node_versions WHERE workspace=? AND node=? AND id=?",
            (workspace, node, vid)).fetchall()
        if not rows:
            self.db.conn.execute(
                "INSERT INTO node_versions (workspace, node, id, parent, template, "
                "code, created_by, ts) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (workspace, node, vid, parent, template, code, user, ts))
        if point:
            self.db.conn.execute(
                "INSERT OR REPLACE INTO node_current (workspace, node, version) "
                "VALUES (?, ?, ?)", (workspace, node, vid))
        return vid

    def current_version(self, workspace: str, node: str) -> Optional[str]:
        rows = self.db.query(
            "SELECT version FROM node_current WHERE workspace=? AND node=?",
            (workspace, node))
        return rows[0][0] if rows else None

    def version_tree(self, workspace: str, node: str) -> list[dict]:
        rows = self.db.query(
            "SELECT id, parent, template, code, created_by, ts FROM node_versions "
            "WHERE workspace=? AND node=? ORDER BY ts, id", (workspace, node))
        if not rows:
            raise ProvenanceError("unknown_id", node)
        current = self.current_version(workspace, node)
        return [
            {"id": r[0], "parent": r[1], "template": r[2], "code": r[3],
             "created_by": r[4], "ts": r[5], "current": r[0] == current}
            for r in rows
        ]

    def get_version(self, workspace: str, node: str, version: str) -> dict:
        rows = self.db.query(
            "SELECT id, parent, template, code, created_by, ts FROM node_versions "
            "WHERE workspace=? AND node=? AND id=?", (workspace, node, version))
        if not rows:
            raise ProvenanceError("unknown_version", version)
        r = rows[0]
        return {"id": r[0], "parent": r[1], "template": r[2], "code": r[3],
                "created_by": r[4], "ts": r[5]}

    def transactions(self, workspace: str) -> list[dict]:
        rows = self.db.query(
            "SELECT seq, txn_id, user, ts, payload, dataflow_version FROM transactions "
            "WHERE workspace=? ORDER BY seq", (workspace,))
        return [
            {"seq": r[0], "txn_id": r[1], "user": r[2], "ts": r[3],
             "payload": from_canonical(r[4]), "dataflow_version": r[5]}
            for r in rows
        ]

    def spec_for_version(self, version: str) -> bytes:
        rows = self.db.query("SELECT spec FROM dataflow_versions WHERE id=?", (version,))
        if not rows:
            raise ProvenanceError("unknown_version", version)
        return rows[0][0]

    # -- executions (engine recorder interface) ------------------------------

    def record_execution(self, *, kind: str, workspace: str, user: str,
                         dataflow_version: Optional[str], node: Optional[str],
                         template: Optional[str], code: Optional[str],
                         cached: bool, status: str, consumed: list[str],
                         produced: list[str], started: str, ended: str,
                         log: str) -> str:
        exec_id = uuid.uuid4().hex
        node_version = None
        with self.db.lock:
            if kind == "node" and node is not None:
                node_version = self._ensure_version(
                    workspace, node, template or "", code or "", user, started,
                    parent=self.current_version(workspace, node), point=False)
            self.db.conn.execute(
                "INSERT INTO executions (id, workspace, kind, dataflow_version, node, "
                "node_version, cached, status, started, ended, user, log) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (exec_id, workspace, kind, dataflow_version, node, node_version,
                 int(cached), status, started, ended, user, log))
            for direction, hashes in (("consumed", consumed), ("produced", produced)):
                for pos, h in enumerate(hashes):
                    self._capture_layer(exec_id, direction, pos, h)
            self.db.conn.commit()
        return exec_id

    def _capture_layer(self, exec_id: str, direction: str, pos: int, h: str) -> None:
        body = self.get_layer(h)
        if body is None:
            self.db.conn.execute(
                "INSERT INTO execution_layers VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (exec_id, direction, pos, h, "summary", -1, "[]", "{}"))
            return
        layer = deserialize_layer(body)
        capture = "full" if len(layer.records) <= self.capture_row_limit else "summary"
        schema = [{"name": a.name, "dtype": a.dtype} for a in layer.schema]
        stats = _numeric_stats(layer)
        self.db.conn.execute(
            "INSERT INTO execution_layers VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
            (exec_id, direction, pos, h, capture, len(layer.records),
             canonical_bytes(schema).decode(), canonical_bytes(stats).decode()))

    def executions(self, workspace: str) -> list[dict]:
        rows = self.db.query(
            "SELECT id, kind, dataflow_version, node, node_version, cached, status, "
            "started, ended, user, log FROM executions WHERE workspace=? "
            "ORDER BY started, id", (workspace,))
        out = []
        for r in rows:
            layers = self.db.query(
                "SELECT direction, position, hash, capture, row_count, schema, stats "
                "FROM execution_layers WHERE execution=? ORDER BY direction, position",
                (r[0],))
            out.append({
                "id": r[0], "kind": r[1], "dataflow_version": r[2], "node": r[3],
                "node_version": r[4], "cached": bool(r[5]), "status": r[6],
                "started": r[7], "ended": r[8], "user": r[9], "log": r[10],
                "layers": [
                    {"direction": l[0], "position": l[1], "hash": l[2],
                     "capture": l[3], "row_count": l[4],
                     "schema": from_canonical(l[5]), "stats": from_canonical(l[6])}
                    for l in layers
                ],
            })
        return out

    # -- PROV export ----------------------------------------------------------

    def export_prov(self, workspace: str) -> dict:
        """W3C PROV-JSON: users->agents; nodes/layers/attributes/versions->
        entities; executions->activities."""
        doc: dict[str, Any] = {
            "prefix": {"uf": "urn:urbanflow:", "prov": "http://www.w3.org/ns/prov#"},
            "agent": {}, "entity": {}, "activity": {},
            "wasAssociatedWith": {}, "used": {}, "wasGeneratedBy": {},
            "wasDerivedFrom": {},
        }
        users = set()
        for t in self.transactions(workspace):
            users.add(t["user"])
        execs = self.executions(workspace)
        for e in execs:
            users.add(e["user"])
        for u in sorted(users):
            doc["agent"][f"uf:user/{u}"] = {"prov:type": "prov:Person"}

        versions = self.db.query(
            "SELECT node, id, parent, created_by, ts FROM node_versions WHERE workspace=?",
            (workspace,))
        nodes = sorted({v[0] for v in versions})
        for n in nodes:
            doc["entity"][f"uf:node/{n}"] = {"prov:type": "uf:DataflowNode"}
        rel = 0
        for node, vid, parent, created_by, ts in sorted(versions, key=lambda v: (v[0], v[4], v[1])):
            doc["entity"][f"uf:nodeversion/{vid}"] = {
                "prov:type": "uf:NodeVersion", "uf:node": f"uf:node/{node}",
            }
            if parent:
                rel += 1
                doc["wasDerivedFrom"][f"_:d{rel}"] = {
                    "prov:generatedEntity": f"uf:nodeversion/{vid}",
                    "prov:usedEntity": f"uf:nodeversion/{parent}",
                }

        layer_hashes = set()
        for e in execs:
            act = f"uf:execution/{e['id']}"
            doc["activity"][act] = {
                "prov:type": f"uf:{e['kind']}Execution",
                "prov:startTime": e["started"], "prov:endTime": e["ended"],
            }
            rel += 1
            doc["wasAssociatedWith"][f"_:a{rel}"] = {
                "prov:activity": act, "prov:agent": f"uf:user/{e['user']}",
            }
            for l in e["layers"]:
                layer_hashes.add((l["hash"], tuple((a["name"], a["dtype"]) for a in l["schema"])))
                ent = f"uf:layer/{l['hash']}"
                rel += 1
                if l["direction"] == "consumed":
                    doc["used"][f"_:u{rel}"] = {"prov:activity": act, "prov:entity": ent}
                else:
                    doc["wasGeneratedBy"][f"_:g{rel}"] = {"prov:entity": ent, "prov:activity": act}
            if e["node"] is not None and e["node_version"]:
                rel += 1
                doc["used"][f"_:u{rel}"] = {
                    "prov:activity": act,
                    "prov:entity": f"uf:nodeversion/{e['node_version']}",
                }
        for h, schema in sorted(layer_hashes):
            doc["entity"][f"uf:layer/{h}"] = {"prov:type": "uf:LayerInstance"}
            for name, dtype in schema:
                doc["entity"][f"uf:attribute/{h}/{name}"] = {
                    "prov:type": "uf:Attribute", "uf:dtype": dtype,
                    "uf:layer": f"uf:layer/{h}",
                }
        return doc
