"""Renderer-neutral view descriptors for visualization nodes.

The server computes these pure descriptors (table, chart, 2D map, image
gallery) from a layer plus a minimal declarative spec; the UI is a thin
renderer. Every pickable mark carries the record id it came from so clients
can translate gestures back into selections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .canonical import format_decimal
from .interaction import INTERACTION_ATTR, SelectionState, augment
from .layers import BBox, DataLayer, LayerError, envelope_doc, grid_cell_center, layer_bbox


class ViewError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class ChartSpec:
    mark: str  # bar | point | line
    x_attr: str
    x_type: str  # quantitative | nominal | temporal
    y_attr: str
    y_type: str
    color_attr: Optional[str] = None
    selection_enabled: bool = True


@dataclass(frozen=True)
class MapSpec:
    color_attr: Optional[str] = None
    color_min: Optional[float] = None
    color_max: Optional[float] = None
    ramp: str = "viridis"
    extent: Optional[BBox] = None


def chart_spec_from_doc(doc: dict) -> ChartSpec:
    return ChartSpec(
        mark=doc.get("mark", "bar"),
        x_attr=doc["x"]["attr"], x_type=doc["x"].get("type", "nominal"),
        y_attr=doc["y"]["attr"], y_type=doc["y"].get("type", "quantitative"),
        color_attr=doc.get("color"),
        selection_enabled=bool(doc.get("selection_enabled", True)),
    )


def map_spec_from_doc(doc: dict) -> MapSpec:
    scale = doc.get("color_scale") or {}
    extent = None
    if doc.get("extent"):
        e = doc["extent"]
        extent = BBox(e["min_lon"], e["min_lat"], e["max_lon"], e["max_lat"])
    return MapSpec(
        color_attr=doc.get("color_attr"),
        color_min=scale.get("min"), color_max=scale.get("max"),
        ramp=scale.get("ramp", "viridis"),
        extent=extent,
    )


def _augmented(layer: DataLayer, selection: Optional[SelectionState]) -> DataLayer:
    if selection is None:
        return layer
    return augment(layer, selection)


def _check_numeric(layer: DataLayer, attr: str) -> int:
    names = layer.attr_names()
    if attr not in names:
        raise ViewError("unknown_attr", attr)
    i = layer.attr_index(attr)
    if layer.schema[i].dtype != "number":
        raise ViewError("type_mismatch", f"{attr} is not numeric")
    return i


def _wkt_summary(geom: Optional[dict]) -> Optional[str]:
    if geom is None:
        return None
    if geom["type"] == "Point":
        coords = " ".join(format_decimal(c) for c in geom["coordinates"])
        return f"POINT ({coords})"
    count = sum(1 for _ in _positions(geom["coordinates"]))
    return f"{geom['type'].upper()} ({count} pts)"


def _positions(coords):
    if isinstance(coords, list):
        if coords and isinstance(coords[0], float):
            yield coords
        else:
            for c in coords:
                yield from _positions(c)


def _drop_z(coords):
    """3D meshes render as footprints: positions truncated to (lon, lat)."""
    if coords and isinstance(coords[0], float):
        return coords[:2]
    return [_drop_z(c) for c in coords]


def table_view(layer: DataLayer, limit: int = 50) -> dict:
    """First `limit` records; geometries shown as WKT-style summaries."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    columns = layer.attr_names()
    geom_idx = {i for i, a in enumerate(layer.schema) if a.dtype in ("geometry2d", "geometry3d")}
    rows = []
    extra_cols: list[str] = []
    if layer.kind == "grid" and layer.grid_meta is not None:
        extra_cols = ["cell_center_lon", "cell_center_lat"]
    for rid, rec in enumerate(layer.records[:limit]):
        row = [(_wkt_summary(v) if i in geom_idx else v) for i, v in enumerate(rec)]
        if extra_cols:
            cx, cy = grid_cell_center(layer.grid_meta, rid)
            row += [cx, cy]
        rows.append({"record_id": rid, "values": row})
    return {
        "view": "table",
        "columns": columns + extra_cols,
        "rows": rows,
        "total_records": len(layer.records),
        "record_id_channel": False,
    }


def chart_view(layer: DataLayer, spec: ChartSpec,
               selection: Optional[SelectionState] = None) -> dict:
    """Marks keyed by record id; interaction column included when selected."""
    names = layer.attr_names()
    for attr, typ in ((spec.x_attr, spec.x_type), (spec.y_attr, spec.y_type)):
        if attr not in names:
            raise ViewError("unknown_attr", attr)
        if typ == "quantitative":
            _check_numeric(layer, attr)
    if spec.color_attr is not None and spec.color_attr not in names:
        raise ViewError("unknown_attr", spec.color_attr)
    if spec.mark not in ("bar", "point", "line"):
        raise ViewError("type_mismatch", f"unknown mark {spec.mark!r}")
    data = _augmented(layer, selection)
    xi, yi = data.attr_index(spec.x_attr), data.attr_index(spec.y_attr)
    ci = data.attr_index(spec.color_attr) if spec.color_attr else None
    si = data.attr_index(INTERACTION_ATTR) if selection is not None else None
    marks = []
    for rid, rec in enumerate(data.records):
        mark = {"record_id": rid, "x": rec[xi], "y": rec[yi]}
        if ci is not None:
            mark["color"] = rec[ci]
        if si is not None:
            mark["interaction"] = rec[si]
        marks.append(mark)
    return {
        "view": "chart",
        "spec": {
            "mark": spec.mark,
            "x": {"attr": spec.x_attr, "type": spec.x_type},
            "y": {"attr": spec.y_attr, "type": spec.y_type},
            "color": spec.color_attr,
            "selection_enabled": spec.selection_enabled,
        },
        "data": envelope_doc(data),
        "marks": marks,
        "record_id_channel": spec.selection_enabled,
    }


def map_view(layer: DataLayer, spec: MapSpec,
             selection: Optional[SelectionState] = None) -> dict:
    """2D map features; color positions are min-max normalized into the ramp."""
    try:
        extent = spec.extent or layer_bbox(layer)
    except LayerError as e:
        raise ViewError("no_geometry", str(e))
    data = _augmented(layer, selection)
    ci = _check_numeric(layer, spec.color_attr) if spec.color_attr else None
    lo = hi = None
    if ci is not None:
        vals = [r[ci] for r in layer.records if r[ci] is not None]
        lo = spec.color_min if spec.color_min is not None else (min(vals) if vals else 0.0)
        hi = spec.color_max if spec.color_max is not None else (max(vals) if vals else 1.0)
    gi = next((i for i, a in enumerate(data.schema) if a.dtype in ("geometry2d", "geometry3d")), None)
    has_3d = any(a.dtype == "geometry3d" for a in data.schema)
    si = data.attr_index(INTERACTION_ATTR) if selection is not None else None
    features = []
    for rid, rec in enumerate(data.records):
        feat: dict[str, Any] = {"record_id": rid}
        if layer.kind == "grid" and layer.grid_meta is not None:
            cx, cy = grid_cell_center(layer.grid_meta, rid)
            feat["geometry"] = {"type": "Point", "coordinates": [cx, cy]}
        elif gi is not None:
            geom = rec[gi]
            if geom is not None and has_3d:
                geom = {"type": geom["type"],
                        "coordinates": _drop_z(geom["coordinates"])}
            feat["geometry"] = geom
        if ci is not None:
            v = rec[ci]
            if v is None:
                feat["no_data"] = True
            elif hi == lo:
                feat["color_pos"] = 0.0
            else:
                feat["color_pos"] = (v - lo) / (hi - lo)
        if si is not None:
            feat["interaction"] = rec[si]
        features.append(feat)
    return {
        "view": "map",
        "spec": {
            "color_attr": spec.color_attr,
            "color_scale": {"min": lo, "max": hi, "ramp": spec.ramp},
            "uniform_style": spec.color_attr is None,
            "has_3d": has_3d,
        },
        "extent": {"min_lon": extent.min_lon, "min_lat": extent.min_lat,
                   "max_lon": extent.max_lon, "max_lat": extent.max_lat},
        "data": envelope_doc(data),
        "features": features,
        "record_id_channel": True,
    }


def gallery_view(layer: DataLayer, sort_attr: Optional[str] = None,
                 selection: Optional[SelectionState] = None) -> dict:
    """Image mosaic; sorted descending by sort_attr (nulls last) when given."""
    if layer.kind != "image":
        raise ViewError("type_mismatch", f"gallery needs an image layer, got {layer.kind}")
    si = None
    data = _augmented(layer, selection)
    if selection is not None:
        si = data.attr_index(INTERACTION_ATTR)
    ref_i = next(i for i, a in enumerate(layer.schema) if a.dtype == "image_ref")
    order = list(range(len(layer.records)))
    if sort_attr is not None:
        vi = _check_numeric(layer, sort_attr)
        order.sort(key=lambda rid: (layer.records[rid][vi] is None,
                                    -(layer.records[rid][vi] or 0.0), rid))
    items = []
    for rid in order:
        item = {"record_id": rid, "image_ref": layer.records[rid][ref_i]}
        if sort_attr is not None:
            item["sort_value"] = layer.records[rid][layer.attr_index(sort_attr)]
        if si is not None:
            item["interaction"] = data.records[rid][si]
        items.append(item)
    return {
        "view": "gallery",
        "sort_attr": sort_attr,
        "data": envelope_doc(data),
        "items": items,
        "record_id_channel": True,
    }


def view_descriptor(layer: DataLayer, view_doc: dict,
                    selection: Optional[SelectionState] = None) -> dict:
    """Dispatch a visualization node's parsed code document to its view."""
    kind = view_doc.get("view")
    if kind == "table":
        return table_view(layer, int(view_doc.get("limit", 50)))
    if kind == "chart":
        return chart_view(layer, chart_spec_from_doc(view_doc["spec"]), selection)
    if kind == "map":
        return map_view(layer, map_spec_from_doc(view_doc.get("spec", {})), selection)
    if kind == "gallery":
        return gallery_view(layer, view_doc.get("sort_attr"), selection)
    raise ViewError("type_mismatch", f"unknown view kind {kind!r}")
