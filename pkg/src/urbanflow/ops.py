"""Built-in node operations and the shareable node-template registry.

All operations are pure functions over immutable layers: equal inputs give
byte-identical outputs under the canonical envelope, which is what makes
content-addressed caching sound.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from . import annotations as ann
from .canonical import canonical_bytes
from .layers import (
    AttributeDef,
    DataLayer,
    GridMeta,
    LayerError,
    grid_cell_center,
    make_layer,
)
from .model import PortDef


class OpError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


def _require_attrs(layer: DataLayer, names: Iterable[str]) -> None:
    have = set(layer.attr_names())
    for n in names:
        if n not in have:
            raise OpError("unknown_attr", n)


def _key_token(v: Any) -> str:
    # hashable stand-in for arbitrary attribute values (geometries are dicts)
    return canonical_bytes(v).decode("utf-8")


def remove_duplicates(layer: DataLayer, keys: Sequence[str]) -> DataLayer:
    """Keep the first occurrence per key tuple (empty keys = whole record)."""
    _require_attrs(layer, keys)
    idxs = [layer.attr_index(k) for k in keys] if keys else list(range(len(layer.schema)))
    seen: set[tuple[str, ...]] = set()
    out = []
    for rec in layer.records:
        token = tuple(_key_token(rec[i]) for i in idxs)
        if token in seen:
            continue
        seen.add(token)
        out.append(list(rec))
    gm = layer.grid_meta if layer.kind == "grid" and len(out) == len(layer.records) else None
    kind = layer.kind if not (layer.kind == "grid" and gm is None) else "table"
    return make_layer(kind, layer.schema, out, gm)


def remove_missing(layer: DataLayer, columns: Sequence[str]) -> DataLayer:
    """Drop records with null in any listed column (empty = all columns)."""
    _require_attrs(layer, columns)
    idxs = [layer.attr_index(c) for c in columns] if columns else list(range(len(layer.schema)))
    out = [list(r) for r in layer.records if all(r[i] is not None for i in idxs)]
    gm = layer.grid_meta if layer.kind == "grid" and len(out) == len(layer.records) else None
    kind = layer.kind if not (layer.kind == "grid" and gm is None) else "table"
    return make_layer(kind, layer.schema, out, gm)


def normalize(layer: DataLayer, column: str, method: str) -> DataLayer:
    """zscore (sample std, n-1) or minmax onto [0,1]; nulls pass through."""
    if method not in ("zscore", "minmax"):
        raise ValueError(f"unknown method {method!r}")
    i = layer.attr_index(column) if column in layer.attr_names() else None
    if i is None:
        raise OpError("unknown_attr", column)
    if layer.schema[i].dtype != "number":
        raise OpError("unknown_attr", f"{column} is not numeric")
    vals = [r[i] for r in layer.records if r[i] is not None]
    if len(vals) < 2:
        raise OpError("degenerate_column", column)
    if method == "zscore":
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
        std = math.sqrt(var)
        if std == 0.0:
            raise OpError("degenerate_column", column)
        f = lambda v: (v - mean) / std
    else:
        lo, hi = min(vals), max(vals)
        if lo == hi:
            raise OpError("degenerate_column", column)
        f = lambda v: (v - lo) / (hi - lo)
    out = []
    for r in layer.records:
        rec = list(r)
        if rec[i] is not None:
            rec[i] = f(rec[i])
        out.append(rec)
    return make_layer(layer.kind, layer.schema, out, layer.grid_meta)


@dataclass(frozen=True)
class AggSpec:
    column: str
    func: str  # sum | mean | min | max | count


def _aggregate(func: str, vals: list[float]) -> Any:
    if func == "count":
        return float(len(vals))
    if not vals:
        return None
    if func == "sum":
        return float(sum(vals))
    if func == "mean":
        return float(sum(vals) / len(vals))
    if func == "min":
        return float(min(vals))
    if func == "max":
        return float(max(vals))
    raise ValueError(f"unknown aggregate {func!r}")


def group_by(layer: DataLayer, keys: Sequence[str], aggs: Sequence[AggSpec]) -> DataLayer:
    """One output record per distinct key tuple, in first-appearance order."""
    if not keys:
        raise ValueError("group_by needs at least one key")
    _require_attrs(layer, keys)
    _require_attrs(layer, [a.column for a in aggs])
    for a in aggs:
        if a.func not in ("sum", "mean", "min", "max", "count"):
            raise ValueError(f"unknown aggregate {a.func!r}")
        dtype = layer.schema[layer.attr_index(a.column)].dtype
        if a.func != "count" and dtype != "number":
            raise OpError("non_numeric_agg", a.column)
    key_idx = [layer.attr_index(k) for k in keys]
    agg_idx = [layer.attr_index(a.column) for a in aggs]
    groups: dict[tuple[str, ...], list[list[Any]]] = {}
    order: list[tuple[str, ...]] = []
    key_values: dict[tuple[str, ...], list[Any]] = {}
    for rec in layer.records:
        token = tuple(_key_token(rec[i]) for i in key_idx)
        if token not in groups:
            groups[token] = [[] for _ in aggs]
            key_values[token] = [rec[i] for i in key_idx]
            order.append(token)
        for j, ai in enumerate(agg_idx):
            v = rec[ai]
            if v is not None:
                groups[token][j].append(v)
    schema = [layer.schema[i] for i in key_idx]
    schema += [AttributeDef(f"{a.func}_{a.column}", "number") for a in aggs]
    records = []
    for token in order:
        rec = list(key_values[token])
        for j, a in enumerate(aggs):
            rec.append(_aggregate(a.func, groups[token][j]))
        records.append(rec)
    return make_layer("table", schema, records)


# ---------------------------------------------------------------------------
# spatial join


def _point_on_segment(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _point_in_ring_crossings(px: float, py: float, ring: list[list[float]]) -> int:
    crossings = 0
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i][0], ring[i][1]
        bx, by = ring[(i + 1) % n][0], ring[(i + 1) % n][1]
        if (ay > py) != (by > py):
            x_at = ax + (py - ay) * (bx - ax) / (by - ay)
            if x_at > px:
                crossings += 1
    return crossings


def point_in_polygon(px: float, py: float, geom: dict) -> bool:
    """Even-odd containment; points on any ring boundary count as inside."""
    polys = geom["coordinates"] if geom["type"] == "MultiPolygon" else [geom["coordinates"]]
    for rings in polys:
        crossings = 0
        on_boundary = False
        for ring in rings:
            n = len(ring)
            for i in range(n):
                a, b = ring[i], ring[(i + 1) % n]
                if _point_on_segment(px, py, a[0], a[1], b[0], b[1]):
                    on_boundary = True
                    break
            if on_boundary:
                break
            crossings += _point_in_ring_crossings(px, py, ring)
        if on_boundary or crossings % 2 == 1:
            return True
    return False


def _poly_bbox(geom: dict) -> tuple[float, float, float, float]:
    xs: list[float] = []
    ys: list[float] = []

    def walk(c):
        if c and isinstance(c[0], float):
            xs.append(c[0])
            ys.append(c[1])
        else:
            for x in c:
                walk(x)

    walk(geom["coordinates"])
    return min(xs), min(ys), max(xs), max(ys)


def _left_points(layer: DataLayer) -> list[Optional[tuple[float, float]]]:
    if layer.kind == "grid":
        gm = layer.grid_meta
        assert gm is not None
        return [grid_cell_center(gm, i) for i in range(len(layer.records))]
    gi = next(i for i, a in enumerate(layer.schema) if a.dtype == "geometry2d")
    pts: list[Optional[tuple[float, float]]] = []
    for rec in layer.records:
        g = rec[gi]
        pts.append(None if g is None else (g["coordinates"][0], g["coordinates"][1]))
    return pts


def spatial_join(left: DataLayer, right: DataLayer, how: str = "left") -> DataLayer:
    """Point-in-polygon join; ties go to the lowest right record id.

    Boundary points count as inside. `left` keeps unmatched records with
    nulls; `inner` drops them. Grid joins use cell centers, and a grid
    inner join yields a table (cell centers as columns) because dropping
    cells breaks the grid shape.
    """
    if how not in ("left", "inner"):
        raise ValueError(f"unknown how {how!r}")
    if left.kind not in ("point", "grid", "image"):
        raise OpError("kind_mismatch", f"left layer kind {left.kind!r}")
    if right.kind != "mesh2d":
        raise OpError("kind_mismatch", f"right layer kind {right.kind!r}")

    rg = next(i for i, a in enumerate(right.schema) if a.dtype == "geometry2d")
    right_attr_idx = [i for i in range(len(right.schema)) if i != rg]
    left_names = set(left.attr_names())

    def joined_name(name: str) -> str:
        out = name
        while out in left_names:
            out += "_r"
        return out

    polygons = []  # (record id, bbox, geometry)
    for rid, rec in enumerate(right.records):
        g = rec[rg]
        if g is not None:
            polygons.append((rid, _poly_bbox(g), g))

    pts = _left_points(left)
    matches: list[Optional[int]] = []
    for p in pts:
        hit: Optional[int] = None
        if p is not None:
            px, py = p
            for rid, (x0, y0, x1, y1), g in polygons:
                if px < x0 or px > x1 or py < y0 or py > y1:
                    continue
                if point_in_polygon(px, py, g):
                    hit = rid
                    break  # polygons scanned in ascending record id
        matches.append(hit)

    grid_inner = left.kind == "grid" and how == "inner"
    if grid_inner:
        schema = list(left.schema)
        schema += [AttributeDef("cell_center_lon", "number"), AttributeDef("cell_center_lat", "number")]
    else:
        schema = list(left.schema)
    schema += [AttributeDef(joined_name(right.schema[i].name), right.schema[i].dtype)
               for i in right_attr_idx]

    records = []
    for lid, rec in enumerate(left.records):
        hit = matches[lid]
        if hit is None and how == "inner":
            continue
        out = list(rec)
        if grid_inner:
            cx, cy = pts[lid]  # grid centers are never None
            out += [cx, cy]
        if hit is None:
            out += [None] * len(right_attr_idx)
        else:
            out += [right.records[hit][i] for i in right_attr_idx]
        records.append(out)

    if grid_inner:
        return make_layer("table", schema, records)
    gm = left.grid_meta if left.kind == "grid" else None
    return make_layer(left.kind, schema, records, gm)


def assign_where(layer: DataLayer, column: str, value: Any,
                 where_attr: Optional[str] = None, where_value: Any = None) -> DataLayer:
    """Set `column` to `value` on matching records (all records when no filter)."""
    _require_attrs(layer, [column] + ([where_attr] if where_attr else []))
    ci = layer.attr_index(column)
    wi = layer.attr_index(where_attr) if where_attr else None
    if layer.schema[ci].dtype == "number" and isinstance(value, (int, float)) and not isinstance(value, bool):
        value = float(value)
    out = []
    for rec in layer.records:
        rec = list(rec)
        if wi is None or rec[wi] == where_value:
            rec[ci] = value
        out.append(rec)
    return make_layer(layer.kind, layer.schema, out, layer.grid_meta)


# ---------------------------------------------------------------------------
# template registry


@dataclass(frozen=True)
class NodeTemplate:
    template_id: str
    kind: str
    ports_in: tuple[PortDef, ...]
    ports_out: tuple[PortDef, ...]
    canonical_code: str
    description: str = ""
    author: str = "builtin"
    created_at: str = "1970-01-01T00:00:00Z"


class TemplateError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class TemplateRegistry:
    """Template store with registered-then-visible write semantics."""

    def __init__(self, templates: Iterable[NodeTemplate] = ()):
        self._lock = threading.Lock()
        self._templates: dict[str, NodeTemplate] = {}
        for t in templates:
            self.register(t)

    def register(self, t: NodeTemplate) -> str:
        try:
            ann.parse_annotations(t.canonical_code)
        except ann.AnnotationError as e:
            raise TemplateError("invalid_annotation_syntax", str(e))
        with self._lock:
            if t.template_id in self._templates:
                raise TemplateError("duplicate_template_id", t.template_id)
            self._templates[t.template_id] = t
        return t.template_id

    def get(self, template_id: str) -> NodeTemplate:
        t = self._templates.get(template_id)
        if t is None:
            raise TemplateError("unknown_template", template_id)
        return t

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._templates

    def list(self, kind: Optional[str] = None) -> list[NodeTemplate]:
        out = [t for t in self._templates.values() if kind is None or t.kind == kind]
        return sorted(out, key=lambda t: t.template_id)

    def as_mapping(self) -> dict[str, NodeTemplate]:
        return dict(self._templates)


def template_to_doc(t: NodeTemplate) -> dict:
    def port_doc(p: PortDef) -> dict:
        return {"kinds": sorted(p.kinds) if p.kinds is not None else None,
                "optional": p.optional}

    return {
        "template_id": t.template_id,
        "kind": t.kind,
        "ports_in": [port_doc(p) for p in t.ports_in],
        "ports_out": [port_doc(p) for p in t.ports_out],
        "canonical_code": t.canonical_code,
        "description": t.description,
        "author": t.author,
        "created_at": t.created_at,
    }


def template_from_doc(doc: dict) -> NodeTemplate:
    def port(p: dict) -> PortDef:
        kinds = p.get("kinds")
        return PortDef(frozenset(kinds) if kinds is not None else None,
                       bool(p.get("optional", False)))

    return NodeTemplate(
        template_id=doc["template_id"],
        kind=doc["kind"],
        ports_in=tuple(port(p) for p in doc.get("ports_in", [])),
        ports_out=tuple(port(p) for p in doc.get("ports_out", [])),
        canonical_code=doc.get("canonical_code", ""),
        description=doc.get("description", ""),
        author=doc.get("author", ""),
        created_at=doc.get("created_at", ""),
    )


def op_code(op: str, **args: Any) -> str:
    """Canonical declarative op-invocation document (a node's code)."""
    doc = {"op": op, "args": args}
    return canonical_bytes(doc).decode("utf-8")


_op_code = op_code


_ANY = PortDef(None)
_THEMATIC = PortDef(frozenset({"point", "grid", "table"}))
_JOIN_LEFT = PortDef(frozenset({"point", "grid", "image"}))
_MESH2D = PortDef(frozenset({"mesh2d"}))


def builtin_templates() -> list[NodeTemplate]:
    """The pre-defined node library; registered into every fresh registry."""
    t = []
    t.append(NodeTemplate("load_table", "loader", (), (PortDef(frozenset({"table", "point"})),),
                          _op_code("load_table", path="", hints={}),
                          "Load a CSV file into a table (or point, with lon/lat hints) layer"))
    t.append(NodeTemplate("load_geo", "loader", (), (PortDef(frozenset({"point", "mesh2d", "network"})),),
                          _op_code("load_geo", path="", expect="mesh2d"),
                          "Load a GeoJSON FeatureCollection"))
    t.append(NodeTemplate("load_grid", "loader", (), (PortDef(frozenset({"grid"})),),
                          _op_code("load_grid", path=""),
                          "Load an ASCII raster grid"))
    t.append(NodeTemplate("load_images", "loader", (), (PortDef(frozenset({"image"})),),
                          _op_code("load_images", path=""),
                          "Load a street-level image manifest"))
    t.append(NodeTemplate("remove_duplicates", "wrangle", (_ANY,), (_ANY,),
                          _op_code("remove_duplicates", keys=[]),
                          "Drop duplicate records, keeping first occurrences"))
    t.append(NodeTemplate("remove_missing", "wrangle", (_ANY,), (_ANY,),
                          _op_code("remove_missing", columns=[]),
                          "Drop records with nulls in the listed columns"))
    t.append(NodeTemplate("normalize", "transform", (_ANY,), (_ANY,),
                          _op_code("normalize", column="", method="zscore"),
                          "Statistically normalize one numeric column"))
    t.append(NodeTemplate("group_by", "transform", (_ANY,), (PortDef(frozenset({"table"})),),
                          _op_code("group_by", keys=[], aggs=[]),
                          "Group records by key columns and aggregate"))
    t.append(NodeTemplate("spatial_join", "transform", (_JOIN_LEFT, _MESH2D),
                          (PortDef(frozenset({"point", "grid", "image", "table"})),),
                          _op_code("spatial_join", how="left"),
                          "Attach polygon attributes to points/cells/images by containment"))
    t.append(NodeTemplate("assign_where", "transform", (_ANY,), (_ANY,),
                          _op_code("assign_where", column="", value=None,
                                   where_attr=None, where_value=None),
                          "Overwrite a column on matching records (what-if edits)"))
    t.append(NodeTemplate("table_view", "visualization", (_ANY,), (_ANY,),
                          canonical_bytes({"view": "table", "limit": 50}).decode(),
                          "Tabular preview of the input layer"))
    t.append(NodeTemplate("chart_view", "visualization", (_ANY,), (_ANY,),
                          canonical_bytes({"view": "chart", "spec": {
                              "mark": "bar",
                              "x": {"attr": "", "type": "nominal"},
                              "y": {"attr": "", "type": "quantitative"},
                          }}).decode(),
                          "Declarative bar/point/line chart"))
    t.append(NodeTemplate("map_view", "visualization", (_ANY,), (_ANY,),
                          canonical_bytes({"view": "map", "spec": {}}).decode(),
                          "2D map of the input layer"))
    t.append(NodeTemplate("gallery_view", "visualization", (PortDef(frozenset({"image"})),),
                          (PortDef(frozenset({"image"})),),
                          canonical_bytes({"view": "gallery"}).decode(),
                          "Mosaic gallery of an image layer"))
    t.append(NodeTemplate("interaction", "interaction", (_ANY, PortDef(None, optional=True)), (_ANY,),
                          "", "Selection holder linking views (optional second input carries link layers)"))
    return t


def default_registry() -> TemplateRegistry:
    return TemplateRegistry(builtin_templates())
