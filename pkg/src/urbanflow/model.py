"""Dataflow graph model: nodes, dependencies, validation, and mutations.

A DataflowSpec is an immutable snapshot. `apply_mutation` returns a new
snapshot and rejects, atomically, anything that would leave the graph
invalid (cycles, dangling references, port conflicts, interaction edges
without a data edge, kind-incompatible ports). Orderings tie-break on
ascending node id so execution and cache keys are reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

from . import annotations as ann
from .canonical import canonical_bytes

NODE_KINDS = ("loader", "wrangle", "transform", "analysis", "visualization", "interaction")


class ModelError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class PortDef:
    """Input/output port constraint: allowed layer kinds (None = any)."""

    kinds: Optional[frozenset[str]] = None
    optional: bool = False


@dataclass(frozen=True)
class Comment:
    id: str
    user: str
    created_at: str
    text: str


@dataclass(frozen=True)
class CanvasBox:
    x: float = 0.0
    y: float = 0.0
    w: float = 240.0
    h: float = 160.0
    collapsed: bool = False


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    template_id: str
    canonical_code: str = ""
    widget_values: dict[int, Any] = field(default_factory=dict)
    pinned: bool = False
    comments: tuple[Comment, ...] = ()


@dataclass(frozen=True)
class DataDependency:
    source: str
    target: str
    layer_slots: tuple[tuple[int, int], ...] = ((0, 0),)


@dataclass(frozen=True)
class InteractionDependency:
    endpoint_a: str  # interaction node
    endpoint_b: str  # visualization or interaction node
    link: Optional[tuple[str, str]] = None  # (local_key_attr, remote_key_attr)


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str
    involved: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class DataflowSpec:
    id: str
    name: str
    nodes: tuple[NodeSpec, ...] = ()
    data_deps: tuple[DataDependency, ...] = ()
    interaction_deps: tuple[InteractionDependency, ...] = ()
    canvas: dict[str, CanvasBox] = field(default_factory=dict)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise ModelError("unknown_id", node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)


def empty_spec(spec_id: str, name: str) -> DataflowSpec:
    return DataflowSpec(id=spec_id, name=name)


# ---------------------------------------------------------------------------
# validation


def _adjacency(spec: DataflowSpec) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {n.id: set() for n in spec.nodes}
    for d in spec.data_deps:
        if d.source in out and d.target in out:
            out[d.source].add(d.target)
    return out


def _cycle_groups(spec: DataflowSpec) -> list[tuple[str, ...]]:
    """Strongly connected components with >1 node (or a self-loop)."""
    adj = _adjacency(spec)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    sccs: list[tuple[str, ...]] = []

    for root in sorted(adj):
        if root in index:
            continue
        work: list[tuple[str, iter]] = [(root, iter(sorted(adj[root])))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(adj[w]))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                if len(comp) > 1 or v in adj[v]:
                    sccs.append(tuple(sorted(comp)))
    return sccs


def validate(spec: DataflowSpec, templates: Optional[Mapping[str, Any]] = None) -> ValidationReport:
    """Collect every structural violation; ok=True iff there are none.

    `templates` maps template_id to an object with ports_in/ports_out
    (sequences of PortDef / kind-frozensets); port typing is checked only
    for nodes whose template is present in the map.
    """
    violations: list[Violation] = []
    ids = [n.id for n in spec.nodes]
    id_set = set(ids)
    if len(ids) != len(id_set):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        violations.append(Violation("dangling_ref", f"duplicate node ids {dupes}", tuple(dupes)))

    for n in spec.nodes:
        if n.kind not in NODE_KINDS:
            violations.append(Violation("invalid_node", f"unknown kind {n.kind!r}", (n.id,)))
        if n.kind == "interaction" and n.canonical_code != "":
            violations.append(Violation("invalid_node", "interaction nodes carry no code", (n.id,)))
        if n.widget_values:
            try:
                sites = ann.parse_annotations(n.canonical_code)
                ordinals = {s.ordinal for s in sites}
                extra = set(n.widget_values) - ordinals
                if extra:
                    violations.append(Violation(
                        "invalid_node", f"widget values for missing ordinals {sorted(extra)}", (n.id,)))
            except ann.AnnotationError:
                violations.append(Violation(
                    "invalid_node", "widget values present but code has no parseable annotations", (n.id,)))

    for d in spec.data_deps:
        missing = [x for x in (d.source, d.target) if x not in id_set]
        if missing:
            violations.append(Violation("dangling_ref", f"data dep references {missing}",
                                         (d.source, d.target)))
    for e in spec.interaction_deps:
        missing = [x for x in (e.endpoint_a, e.endpoint_b) if x not in id_set]
        if missing:
            violations.append(Violation("dangling_ref", f"interaction dep references {missing}",
                                         (e.endpoint_a, e.endpoint_b)))

    for comp in _cycle_groups(spec):
        violations.append(Violation("cycle", f"cycle through {list(comp)}", comp))

    # at most one edge slot per target input port
    bound: dict[tuple[str, int], tuple[str, int]] = {}
    for d in spec.data_deps:
        for out_port, in_port in d.layer_slots:
            key = (d.target, in_port)
            if key in bound:
                violations.append(Violation(
                    "port_conflict",
                    f"input port {in_port} of {d.target} bound twice",
                    (bound[key][0], d.source, d.target)))
            else:
                bound[key] = (d.source, out_port)

    pairs = set()
    for d in spec.data_deps:
        pairs.add((d.source, d.target))
    for e in spec.interaction_deps:
        a, b = e.endpoint_a, e.endpoint_b
        if a not in id_set or b not in id_set:
            continue
        if (a, b) not in pairs and (b, a) not in pairs:
            violations.append(Violation(
                "missing_data_dep",
                f"interaction dep ({a}, {b}) has no data dep between the pair", (a, b)))
        ka = spec.node(a).kind if spec.has_node(a) else None
        kb = spec.node(b).kind if spec.has_node(b) else None
        if "interaction" not in (ka, kb):
            violations.append(Violation(
                "invalid_link", f"interaction dep ({a}, {b}) touches no interaction node", (a, b)))
        if e.link is not None and (ka != "interaction" or kb != "interaction"):
            violations.append(Violation(
                "invalid_link", f"link keys only allowed between interaction nodes ({a}, {b})", (a, b)))

    if templates:
        def ports(node: NodeSpec):
            t = templates.get(node.template_id)
            if t is None:
                return None, None
            return list(t.ports_in), list(t.ports_out)

        def kinds_of(port: Any) -> Optional[frozenset[str]]:
            if isinstance(port, PortDef):
                return port.kinds
            return port  # already a frozenset / None

        by_id = {n.id: n for n in spec.nodes}
        for d in spec.data_deps:
            src, tgt = by_id.get(d.source), by_id.get(d.target)
            if src is None or tgt is None:
                continue
            _, src_out = ports(src)
            tgt_in, _ = ports(tgt)
            for out_port, in_port in d.layer_slots:
                if src_out is not None and not 0 <= out_port < len(src_out):
                    violations.append(Violation(
                        "port_conflict", f"{d.source} has no output port {out_port}",
                        (d.source, d.target)))
                    continue
                if tgt_in is not None and not 0 <= in_port < len(tgt_in):
                    violations.append(Violation(
                        "port_conflict", f"{d.target} has no input port {in_port}",
                        (d.source, d.target)))
                    continue
                if src_out is None or tgt_in is None:
                    continue
                out_kinds = kinds_of(src_out[out_port])
                in_kinds = kinds_of(tgt_in[in_port])
                if out_kinds is not None and in_kinds is not None and not (out_kinds & in_kinds):
                    violations.append(Violation(
                        "layer_kind_mismatch",
                        f"{d.source}:{out_port} ({sorted(out_kinds)}) cannot feed "
                        f"{d.target}:{in_port} ({sorted(in_kinds)})",
                        (d.source, d.target)))

    return ValidationReport(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# graph queries


def topological_order(spec: DataflowSpec) -> list[str]:
    """Kahn's algorithm; ready set popped in ascending node-id order."""
    adj = _adjacency(spec)
    indeg = {n: 0 for n in adj}
    for src, outs in adj.items():
        for t in outs:
            indeg[t] += 1
    ready = [n for n, d in sorted(indeg.items()) if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for t in sorted(adj[n]):
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(ready, t)
    if len(order) != len(adj):
        raise ModelError("not_a_dag", "data dependencies contain a cycle")
    return order


def downstream_closure(spec: DataflowSpec, node_id: str) -> set[str]:
    if not spec.has_node(node_id):
        raise ModelError("unknown_id", node_id)
    adj = _adjacency(spec)
    seen = {node_id}
    frontier = [node_id]
    while frontier:
        nxt = []
        for n in frontier:
            for t in adj[n]:
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return seen


def upstream_closure(spec: DataflowSpec, node_id: str) -> set[str]:
    if not spec.has_node(node_id):
        raise ModelError("unknown_id", node_id)
    radj: dict[str, set[str]] = {n.id: set() for n in spec.nodes}
    for d in spec.data_deps:
        radj[d.target].add(d.source)
    seen = {node_id}
    frontier = [node_id]
    while frontier:
        nxt = []
        for n in frontier:
            for t in radj[n]:
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# mutations


@dataclass(frozen=True)
class Mutation:
    """One canvas edit. `kind` selects which payload fields apply."""

    kind: str
    node: Optional[NodeSpec] = None
    node_id: Optional[str] = None
    data_dep: Optional[DataDependency] = None
    interaction_dep: Optional[InteractionDependency] = None
    edge: Optional[tuple[str, str]] = None
    edge_kind: str = "data"
    code: Optional[str] = None
    widget_values: Optional[dict[int, Any]] = None
    box: Optional[CanvasBox] = None
    pinned: Optional[bool] = None
    comment: Optional[Comment] = None

    @staticmethod
    def add_node(node: NodeSpec, box: Optional[CanvasBox] = None) -> "Mutation":
        return Mutation(kind="add_node", node=node, box=box)

    @staticmethod
    def remove_node(node_id: str) -> "Mutation":
        return Mutation(kind="remove_node", node_id=node_id)

    @staticmethod
    def add_edge(dep: DataDependency) -> "Mutation":
        return Mutation(kind="add_edge", data_dep=dep, edge_kind="data")

    @staticmethod
    def add_interaction_edge(dep: InteractionDependency) -> "Mutation":
        return Mutation(kind="add_edge", interaction_dep=dep, edge_kind="interaction")

    @staticmethod
    def remove_edge(source: str, target: str, edge_kind: str = "data") -> "Mutation":
        return Mutation(kind="remove_edge", edge=(source, target), edge_kind=edge_kind)

    @staticmethod
    def update_code(node_id: str, code: str) -> "Mutation":
        return Mutation(kind="update_code", node_id=node_id, code=code)

    @staticmethod
    def set_widget_values(node_id: str, values: dict[int, Any]) -> "Mutation":
        return Mutation(kind="set_widget_values", node_id=node_id, widget_values=values)

    @staticmethod
    def move_node(node_id: str, box: CanvasBox) -> "Mutation":
        return Mutation(kind="move_node", node_id=node_id, box=box)

    @staticmethod
    def set_pin(node_id: str, pinned: bool) -> "Mutation":
        return Mutation(kind="set_pin", node_id=node_id, pinned=pinned)

    @staticmethod
    def add_comment(node_id: str, comment: Comment) -> "Mutation":
        return Mutation(kind="add_comment", node_id=node_id, comment=comment)


_VIOLATION_TO_ERROR = {
    "cycle": "would_create_cycle",
    "dangling_ref": "unknown_id",
    "port_conflict": "port_conflict",
    "missing_data_dep": "missing_data_dep",
    "layer_kind_mismatch": "layer_kind_mismatch",
    "invalid_node": "invalid_node",
    "invalid_link": "invalid_link",
}


def _replace_node(spec: DataflowSpec, node_id: str, **changes: Any) -> DataflowSpec:
    if not spec.has_node(node_id):
        raise ModelError("unknown_id", node_id)
    nodes = tuple(replace(n, **changes) if n.id == node_id else n for n in spec.nodes)
    return replace(spec, nodes=nodes)


def apply_mutation(
    spec: DataflowSpec,
    m: Mutation,
    templates: Optional[Mapping[str, Any]] = None,
) -> DataflowSpec:
    """Apply one mutation; returns the new snapshot or raises ModelError."""
    if m.kind == "add_node":
        assert m.node is not None
        if spec.has_node(m.node.id):
            raise ModelError("duplicate_id", m.node.id)
        canvas = dict(spec.canvas)
        canvas[m.node.id] = m.box or CanvasBox()
        new = replace(spec, nodes=spec.nodes + (m.node,), canvas=canvas)
    elif m.kind == "remove_node":
        node_id = m.node_id
        if not spec.has_node(node_id):
            raise ModelError("unknown_id", node_id or "")
        nodes = tuple(n for n in spec.nodes if n.id != node_id)
        deps = tuple(d for d in spec.data_deps if node_id not in (d.source, d.target))
        ideps = tuple(e for e in spec.interaction_deps
                      if node_id not in (e.endpoint_a, e.endpoint_b))
        canvas = {k: v for k, v in spec.canvas.items() if k != node_id}
        new = replace(spec, nodes=nodes, data_deps=deps, interaction_deps=ideps, canvas=canvas)
        new = _drop_unsupported_interactions(new)
    elif m.kind == "add_edge":
        if m.edge_kind == "data":
            assert m.data_dep is not None
            new = replace(spec, data_deps=spec.data_deps + (m.data_dep,))
        else:
            assert m.interaction_dep is not None
            new = replace(spec, interaction_deps=spec.interaction_deps + (m.interaction_dep,))
    elif m.kind == "remove_edge":
        assert m.edge is not None
        src, tgt = m.edge
        if m.edge_kind == "data":
            before = len(spec.data_deps)
            deps = tuple(d for d in spec.data_deps if (d.source, d.target) != (src, tgt))
            if len(deps) == before:
                raise ModelError("unknown_id", f"no data dep {src}->{tgt}")
            new = replace(spec, data_deps=deps)
            new = _drop_unsupported_interactions(new)
        else:
            before = len(spec.interaction_deps)
            ideps = tuple(e for e in spec.interaction_deps
                          if {e.endpoint_a, e.endpoint_b} != {src, tgt})
            if len(ideps) == before:
                raise ModelError("unknown_id", f"no interaction dep {src}<->{tgt}")
            new = replace(spec, interaction_deps=ideps)
    elif m.kind == "update_code":
        assert m.code is not None
        # widget ordinals shift under arbitrary edits: reset to defaults
        new = _replace_node(spec, m.node_id, canonical_code=m.code, widget_values={})
    elif m.kind == "set_widget_values":
        assert m.widget_values is not None
        node = spec.node(m.node_id)
        try:
            sites = ann.parse_annotations(node.canonical_code)
            ann.widget_descriptors(sites, m.widget_values)  # validates keys and values
        except ann.AnnotationError as e:
            raise ModelError(e.code, e.detail)
        new = _replace_node(spec, m.node_id, widget_values=dict(m.widget_values))
    elif m.kind == "move_node":
        assert m.box is not None
        if not spec.has_node(m.node_id):
            raise ModelError("unknown_id", m.node_id or "")
        canvas = dict(spec.canvas)
        canvas[m.node_id] = m.box
        new = replace(spec, canvas=canvas)
    elif m.kind == "set_pin":
        assert m.pinned is not None
        new = _replace_node(spec, m.node_id, pinned=m.pinned)
    elif m.kind == "add_comment":
        assert m.comment is not None
        node = spec.node(m.node_id)
        if not m.comment.text:
            raise ModelError("empty_comment", m.node_id or "")
        new = _replace_node(spec, m.node_id, comments=node.comments + (m.comment,))
    else:
        raise ModelError("unknown_mutation", m.kind)

    report = validate(new, templates)
    if not report.ok:
        v = report.violations[0]
        raise ModelError(_VIOLATION_TO_ERROR.get(v.code, v.code), v.detail)
    return new


def _drop_unsupported_interactions(spec: DataflowSpec) -> DataflowSpec:
    """Cascade: interaction deps require a data dep between the same pair."""
    pairs = {(d.source, d.target) for d in spec.data_deps}
    keep = tuple(
        e for e in spec.interaction_deps
        if (e.endpoint_a, e.endpoint_b) in pairs or (e.endpoint_b, e.endpoint_a) in pairs
    )
    if len(keep) == len(spec.interaction_deps):
        return spec
    return replace(spec, interaction_deps=keep)


# ---------------------------------------------------------------------------
# canonical document form


def mutation_to_doc(m: Mutation) -> dict:
    doc: dict[str, Any] = {"kind": m.kind}
    if m.node is not None:
        doc["node"] = node_to_doc(m.node)
    if m.node_id is not None:
        doc["node_id"] = m.node_id
    if m.data_dep is not None:
        doc["data_dep"] = _dep_to_doc(m.data_dep)
    if m.interaction_dep is not None:
        doc["interaction_dep"] = _idep_to_doc(m.interaction_dep)
    if m.edge is not None:
        doc["edge"] = list(m.edge)
    if m.kind in ("add_edge", "remove_edge"):
        doc["edge_kind"] = m.edge_kind
    if m.code is not None:
        doc["code"] = m.code
    if m.widget_values is not None:
        doc["widget_values"] = {str(k): v for k, v in m.widget_values.items()}
    if m.box is not None:
        doc["box"] = _box_to_doc(m.box)
    if m.pinned is not None:
        doc["pinned"] = m.pinned
    if m.comment is not None:
        doc["comment"] = {"id": m.comment.id, "user": m.comment.user,
                          "created_at": m.comment.created_at, "text": m.comment.text}
    return doc


def mutation_from_doc(doc: Mapping[str, Any]) -> Mutation:
    comment = None
    if "comment" in doc:
        c = doc["comment"]
        comment = Comment(c["id"], c["user"], c["created_at"], c["text"])
    return Mutation(
        kind=doc["kind"],
        node=node_from_doc(doc["node"]) if "node" in doc else None,
        node_id=doc.get("node_id"),
        data_dep=_dep_from_doc(doc["data_dep"]) if "data_dep" in doc else None,
        interaction_dep=_idep_from_doc(doc["interaction_dep"]) if "interaction_dep" in doc else None,
        edge=tuple(doc["edge"]) if "edge" in doc else None,
        edge_kind=doc.get("edge_kind", "data"),
        code=doc.get("code"),
        widget_values={int(k): v for k, v in doc["widget_values"].items()}
        if "widget_values" in doc else None,
        box=_box_from_doc(doc["box"]) if "box" in doc else None,
        pinned=doc.get("pinned"),
        comment=comment,
    )


def _box_to_doc(b: CanvasBox) -> dict:
    return {"x": float(b.x), "y": float(b.y), "w": float(b.w), "h": float(b.h),
            "collapsed": b.collapsed}


def _box_from_doc(d: Mapping[str, Any]) -> CanvasBox:
    return CanvasBox(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"]), bool(d["collapsed"]))


def _dep_to_doc(d: DataDependency) -> dict:
    return {"source": d.source, "target": d.target,
            "layer_slots": [list(s) for s in d.layer_slots]}


def _dep_from_doc(d: Mapping[str, Any]) -> DataDependency:
    return DataDependency(d["source"], d["target"],
                          tuple((int(a), int(b)) for a, b in d["layer_slots"]))


def _idep_to_doc(e: InteractionDependency) -> dict:
    doc: dict[str, Any] = {"endpoint_a": e.endpoint_a, "endpoint_b": e.endpoint_b}
    if e.link is not None:
        doc["link"] = {"local_key_attr": e.link[0], "remote_key_attr": e.link[1]}
    return doc


def _idep_from_doc(d: Mapping[str, Any]) -> InteractionDependency:
    link = None
    if d.get("link") is not None:
        link = (d["link"]["local_key_attr"], d["link"]["remote_key_attr"])
    return InteractionDependency(d["endpoint_a"], d["endpoint_b"], link)


def node_to_doc(n: NodeSpec) -> dict:
    return {
        "id": n.id,
        "kind": n.kind,
        "template_id": n.template_id,
        "canonical_code": n.canonical_code,
        "widget_values": {str(k): v for k, v in sorted(n.widget_values.items())},
        "pinned": n.pinned,
        "comments": [
            {"id": c.id, "user": c.user, "created_at": c.created_at, "text": c.text}
            for c in n.comments
        ],
    }


def node_from_doc(d: Mapping[str, Any]) -> NodeSpec:
    return NodeSpec(
        id=d["id"],
        kind=d["kind"],
        template_id=d["template_id"],
        canonical_code=d.get("canonical_code", ""),
        widget_values={int(k): v for k, v in d.get("widget_values", {}).items()},
        pinned=bool(d.get("pinned", False)),
        comments=tuple(
            Comment(c["id"], c["user"], c["created_at"], c["text"])
            for c in d.get("comments", [])
        ),
    )


def spec_to_doc(spec: DataflowSpec) -> dict:
    return {
        "id": spec.id,
        "name": spec.name,
        "nodes": [node_to_doc(n) for n in sorted(spec.nodes, key=lambda n: n.id)],
        "data_deps": [
            _dep_to_doc(d)
            for d in sorted(spec.data_deps, key=lambda d: (d.source, d.target, d.layer_slots))
        ],
        "interaction_deps": [
            _idep_to_doc(e)
            for e in sorted(spec.interaction_deps, key=lambda e: (e.endpoint_a, e.endpoint_b))
        ],
        "canvas": {k: _box_to_doc(v) for k, v in sorted(spec.canvas.items())},
    }


def spec_from_doc(doc: Mapping[str, Any]) -> DataflowSpec:
    return DataflowSpec(
        id=doc["id"],
        name=doc["name"],
        nodes=tuple(node_from_doc(n) for n in doc.get("nodes", [])),
        data_deps=tuple(_dep_from_doc(d) for d in doc.get("data_deps", [])),
        interaction_deps=tuple(_idep_from_doc(e) for e in doc.get("interaction_deps", [])),
        canvas={k: _box_from_doc(v) for k, v in doc.get("canvas", {}).items()},
    )


def spec_bytes(spec: DataflowSpec) -> bytes:
    """Canonical saved/exported form: equal specs produce identical bytes."""
    return canonical_bytes(spec_to_doc(spec))
