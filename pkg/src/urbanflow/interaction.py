"""Selections and their propagation across linked interaction nodes.

A selection is a set of record ids on an interaction node's input layer.
`augment` materializes it as a boolean `interaction` attribute; `propagate`
walks link relations (key-attribute equality) breadth-first so brushing at
one resolution selects the related records at every linked resolution.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from .layers import AttributeDef, DataLayer, make_layer

INTERACTION_ATTR = "interaction"


class InteractionError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class SelectionState:
    interaction_node: str
    selected: frozenset[int] = frozenset()
    revision: int = 0


@dataclass(frozen=True)
class LinkSpec:
    from_node: str
    to_node: str
    local_key_attr: str   # attribute on from_node's input layer
    remote_key_attr: str  # attribute on to_node's input layer


def augment(layer: DataLayer, state: SelectionState) -> DataLayer:
    """Append the boolean selection attribute; records stay untouched."""
    if INTERACTION_ATTR in layer.attr_names():
        raise InteractionError("attr_collision", INTERACTION_ATTR)
    bad = [i for i in state.selected if not 0 <= i < len(layer.records)]
    if bad:
        raise InteractionError("unknown_record_id", str(sorted(bad)))
    schema = list(layer.schema) + [AttributeDef(INTERACTION_ATTR, "boolean")]
    records = [list(r) + [i in state.selected] for i, r in enumerate(layer.records)]
    return make_layer(layer.kind, schema, records, layer.grid_meta)


def strip_augmentation(layer: DataLayer) -> DataLayer:
    """Inverse of augment: drop the selection attribute if present."""
    names = layer.attr_names()
    if INTERACTION_ATTR not in names:
        return layer
    i = names.index(INTERACTION_ATTR)
    schema = [a for j, a in enumerate(layer.schema) if j != i]
    records = [[v for j, v in enumerate(r) if j != i] for r in layer.records]
    return make_layer(layer.kind, schema, records, layer.grid_meta)


def apply_selection(state: SelectionState, ids: frozenset[int] | set[int], mode: str,
                    record_count: Optional[int] = None) -> SelectionState:
    """replace / toggle (symmetric difference) / clear; bumps the revision."""
    ids = frozenset(ids)
    if record_count is not None and mode != "clear":  # clear ignores ids entirely
        bad = [i for i in ids if not 0 <= i < record_count]
        if bad:
            raise InteractionError("unknown_record_id", str(sorted(bad)))
    if mode == "replace":
        selected = ids
    elif mode == "toggle":
        selected = state.selected ^ ids
    elif mode == "clear":
        selected = frozenset()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return replace(state, selected=selected, revision=state.revision + 1)


def _key_values(layer: DataLayer, attr: str, ids: frozenset[int]) -> set:
    idx = layer.attr_index(attr)
    vals = set()
    for i in ids:
        v = layer.records[i][idx]
        if v is not None:  # null keys never match
            vals.add(_hashable(v))
    return vals


def _hashable(v):
    if isinstance(v, dict):
        from .canonical import canonical_bytes
        return canonical_bytes(v)
    return v


def _matching_ids(layer: DataLayer, attr: str, values: set) -> frozenset[int]:
    idx = layer.attr_index(attr)
    out = set()
    for i, rec in enumerate(layer.records):
        v = rec[idx]
        if v is not None and _hashable(v) in values:
            out.add(i)
    return frozenset(out)


def propagate(
    origin: str,
    states: Mapping[str, SelectionState],
    links: list[LinkSpec],
    layers: Mapping[str, DataLayer],
) -> dict[str, SelectionState]:
    """Breadth-first selection propagation from `origin` over `links`.

    Links are traversable in both directions; each node is updated at most
    once per call, so mutually linked nodes cannot oscillate. Returns the
    full updated state map.
    """
    if origin not in states:
        raise InteractionError("unknown_id", origin)
    neighbors: dict[str, list[tuple[str, str, str]]] = {}
    for l in links:
        for node, other, local, remote in (
            (l.from_node, l.to_node, l.local_key_attr, l.remote_key_attr),
            (l.to_node, l.from_node, l.remote_key_attr, l.local_key_attr),
        ):
            if node not in states or other not in states:
                raise InteractionError("unknown_id", f"link endpoint {node if node not in states else other}")
            neighbors.setdefault(node, []).append((other, local, remote))

    for l in links:
        for node, attr in ((l.from_node, l.local_key_attr), (l.to_node, l.remote_key_attr)):
            if node in layers and attr not in layers[node].attr_names():
                raise InteractionError("unknown_link_key_attr", f"{attr} on {node}")

    out = dict(states)
    visited = {origin}
    queue = deque([origin])
    while queue:
        node = queue.popleft()
        for other, local, remote in sorted(neighbors.get(node, [])):
            if other in visited:
                continue
            visited.add(other)
            values = _key_values(layers[node], local, out[node].selected)
            selected = _matching_ids(layers[other], remote, values)
            prev = out[other]
            if selected != prev.selected:
                out[other] = replace(prev, selected=selected, revision=prev.revision + 1)
            queue.append(other)
    return out
