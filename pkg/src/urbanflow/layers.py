"""Urban data layers: the typed record collections that flow along dataflow edges.

Seven layer kinds (point, grid, mesh2d, mesh3d, network, image, table) share one
canonical interchange envelope. A layer's id is the content hash of that
envelope, so equal layers are interchangeable everywhere (cache, provenance,
views). Geometries are GeoJSON-style dicts in (lon, lat[, z]) order; the only
CRS is EPSG:4326.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .canonical import canonical_bytes, content_hash

DTYPES = ("number", "text", "boolean", "timestamp", "geometry2d", "geometry3d", "image_ref")
KINDS = ("point", "grid", "mesh2d", "mesh3d", "network", "image", "table")

CRS = "EPSG:4326"

_GEOM2D_TYPES = ("Point", "Polygon", "MultiPolygon", "LineString", "MultiLineString")


class LayerError(Exception):
    """Raised by loaders and layer validation. `code` is the stable error id."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class AttributeDef:
    name: str
    dtype: str


@dataclass(frozen=True)
class GridMeta:
    origin_lon: float
    origin_lat: float
    cell_size: float
    nrows: int
    ncols: int


@dataclass(frozen=True)
class BBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float


@dataclass
class DataLayer:
    """Immutable after construction; always build through `make_layer`."""

    id: str
    kind: str
    schema: list[AttributeDef]
    records: list[list[Any]]
    grid_meta: Optional[GridMeta] = None
    crs: str = CRS

    def attr_index(self, name: str) -> int:
        for i, a in enumerate(self.schema):
            if a.name == name:
                return i
        raise LayerError("unknown_attr", name)

    def attr_names(self) -> list[str]:
        return [a.name for a in self.schema]

    def column(self, name: str) -> list[Any]:
        i = self.attr_index(name)
        return [r[i] for r in self.records]


def _is_position(v: Any, dims: int) -> bool:
    return (
        isinstance(v, list)
        and len(v) == dims
        and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)
    )


def _check_ring_coords(coords: Any, dims: int, depth: int) -> bool:
    if depth == 0:
        return _is_position(coords, dims)
    return isinstance(coords, list) and len(coords) > 0 and all(
        _check_ring_coords(c, dims, depth - 1) for c in coords
    )


def _check_geometry(v: Any, dims: int) -> bool:
    if not isinstance(v, dict) or set(v.keys()) != {"type", "coordinates"}:
        return False
    gtype, coords = v["type"], v["coordinates"]
    depth = {"Point": 0, "LineString": 1, "Polygon": 2, "MultiLineString": 2, "MultiPolygon": 3}.get(gtype)
    if depth is None:
        return False
    return _check_ring_coords(coords, dims, depth)


def _check_value(dtype: str, v: Any) -> bool:
    if v is None:
        return True
    if dtype == "number":
        return isinstance(v, float)
    if dtype == "text" or dtype == "timestamp" or dtype == "image_ref":
        return isinstance(v, str)
    if dtype == "boolean":
        return isinstance(v, bool)
    if dtype == "geometry2d":
        return _check_geometry(v, 2)
    if dtype == "geometry3d":
        return _check_geometry(v, 3)
    return False


def _normalize_value(dtype: str, v: Any) -> Any:
    if v is None:
        return None
    if dtype == "number" and isinstance(v, (int, float)) and not isinstance(v, bool):
        f = float(v)
        if math.isnan(f) or math.isinf(f):
            raise LayerError("parse_error", "non-finite number")
        return f
    if dtype in ("geometry2d", "geometry3d") and isinstance(v, dict):
        coords = _normalize_coords(v.get("coordinates"))
        return {"type": v.get("type"), "coordinates": coords}
    return v


def _normalize_coords(c: Any) -> Any:
    if isinstance(c, list):
        if c and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in c):
            return [float(x) for x in c]
        return [_normalize_coords(x) for x in c]
    return c


def _geom_attrs(layer: DataLayer, dtype: str) -> list[int]:
    return [i for i, a in enumerate(layer.schema) if a.dtype == dtype]


def validate_layer(layer: DataLayer) -> None:
    """Enforce schema and per-kind structural invariants; raises LayerError."""
    if layer.kind not in KINDS:
        raise LayerError("invalid_layer", f"unknown kind {layer.kind!r}")
    if layer.crs != CRS:
        raise LayerError("invalid_layer", f"unsupported crs {layer.crs!r}")
    seen: set[str] = set()
    for a in layer.schema:
        if not a.name:
            raise LayerError("invalid_layer", "empty attribute name")
        if a.name in seen:
            raise LayerError("invalid_layer", f"duplicate attribute {a.name!r}")
        if a.dtype not in DTYPES:
            raise LayerError("invalid_layer", f"unknown dtype {a.dtype!r}")
        seen.add(a.name)
    width = len(layer.schema)
    for rid, rec in enumerate(layer.records):
        if len(rec) != width:
            raise LayerError("invalid_layer", f"record {rid} has {len(rec)} values, schema has {width}")
        for a, v in zip(layer.schema, rec):
            if not _check_value(a.dtype, v):
                raise LayerError("invalid_layer", f"record {rid} attr {a.name!r} not a {a.dtype}")

    g2 = _geom_attrs(layer, "geometry2d")
    g3 = _geom_attrs(layer, "geometry3d")
    kind = layer.kind

    def geom_types(idx: int) -> set[str]:
        return {r[idx]["type"] for r in layer.records if r[idx] is not None}

    if kind == "point":
        if len(g2) != 1 or g3:
            raise LayerError("invalid_layer", "point layer needs exactly one geometry2d attribute")
        if geom_types(g2[0]) - {"Point"}:
            raise LayerError("invalid_layer", "point layer geometry must be Point")
    elif kind == "grid":
        if layer.grid_meta is None:
            raise LayerError("invalid_layer", "grid layer needs grid_meta")
        gm = layer.grid_meta
        if gm.nrows * gm.ncols != len(layer.records):
            raise LayerError("invalid_layer", "grid_meta rows*cols must equal record count")
        if gm.cell_size <= 0:
            raise LayerError("invalid_layer", "cell_size must be positive")
    elif kind == "mesh2d":
        if len(g2) != 1 or g3:
            raise LayerError("invalid_layer", "mesh2d layer needs exactly one geometry2d attribute")
        if geom_types(g2[0]) - {"Polygon", "MultiPolygon"}:
            raise LayerError("invalid_layer", "mesh2d geometry must be Polygon/MultiPolygon")
    elif kind == "mesh3d":
        if len(g3) != 1:
            raise LayerError("invalid_layer", "mesh3d layer needs exactly one geometry3d attribute")
    elif kind == "network":
        if len(g2) != 1 or g3:
            raise LayerError("invalid_layer", "network layer needs exactly one geometry2d attribute")
        if geom_types(g2[0]) - {"LineString", "MultiLineString"}:
            raise LayerError("invalid_layer", "network geometry must be LineString/MultiLineString")
    elif kind == "image":
        refs = [i for i, a in enumerate(layer.schema) if a.dtype == "image_ref"]
        if len(refs) != 1 or len(g2) != 1:
            raise LayerError("invalid_layer", "image layer needs one image_ref and one geometry2d attribute")
        if geom_types(g2[0]) - {"Point"}:
            raise LayerError("invalid_layer", "image layer geometry must be Point")


def envelope_doc(layer: DataLayer) -> dict:
    doc: dict[str, Any] = {
        "crs": layer.crs,
        "kind": layer.kind,
        "schema": [{"name": a.name, "dtype": a.dtype} for a in layer.schema],
        "records": layer.records,
    }
    if layer.grid_meta is not None:
        gm = layer.grid_meta
        doc["grid_meta"] = {
            "origin_lon": gm.origin_lon,
            "origin_lat": gm.origin_lat,
            "cell_size": gm.cell_size,
            "nrows": gm.nrows,
            "ncols": gm.ncols,
        }
    return doc


def make_layer(
    kind: str,
    schema: Sequence[AttributeDef],
    records: Iterable[Sequence[Any]],
    grid_meta: Optional[GridMeta] = None,
) -> DataLayer:
    """Normalize values, validate invariants, and assign the content-hash id."""
    schema = list(schema)
    norm = [
        [_normalize_value(a.dtype, v) for a, v in zip(schema, rec)]
        for rec in records
    ]
    layer = DataLayer(id="", kind=kind, schema=schema, records=norm, grid_meta=grid_meta)
    validate_layer(layer)
    layer.id = content_hash(canonical_bytes(envelope_doc(layer)))
    return layer


def serialize_layer(layer: DataLayer) -> bytes:
    """Canonical envelope bytes; equal layers always serialize identically."""
    return canonical_bytes(envelope_doc(layer))


def deserialize_layer(data: bytes) -> DataLayer:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LayerError("corrupt_envelope", str(e))
    if not isinstance(doc, dict):
        raise LayerError("corrupt_envelope", "envelope is not an object")
    missing = {"crs", "kind", "schema", "records"} - set(doc)
    if missing:
        raise LayerError("corrupt_envelope", f"missing keys {sorted(missing)}")
    try:
        schema = [AttributeDef(a["name"], a["dtype"]) for a in doc["schema"]]
        gm = None
        if "grid_meta" in doc:
            g = doc["grid_meta"]
            gm = GridMeta(
                float(g["origin_lon"]), float(g["origin_lat"]),
                float(g["cell_size"]), int(g["nrows"]), int(g["ncols"]),
            )
        layer = make_layer(doc["kind"], schema, doc["records"], gm)
    except LayerError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise LayerError("corrupt_envelope", str(e))
    if doc["crs"] != CRS:
        raise LayerError("invalid_layer", f"unsupported crs {doc['crs']!r}")
    return layer


# ---------------------------------------------------------------------------
# loaders


def _infer_dtype(values: list[str]) -> str:
    saw_any = False
    for v in values:
        if v == "":
            continue
        saw_any = True
        try:
            float(v)
        except ValueError:
            return "text"
    return "number" if saw_any else "text"


def _parse_cell(dtype: str, raw: str, line: int) -> Any:
    if raw == "":
        return None
    if dtype == "number":
        try:
            return float(raw)
        except ValueError:
            raise LayerError("parse_error", f"line {line}: {raw!r} is not numeric")
    if dtype == "boolean":
        low = raw.lower()
        if low in ("true", "1"):
            return True
        if low in ("false", "0"):
            return False
        raise LayerError("parse_error", f"line {line}: {raw!r} is not boolean")
    return raw


def load_table(data: bytes, hints: Optional[dict[str, str]] = None) -> DataLayer:
    """CSV -> table layer; lon/lat hints synthesize a point geometry."""
    hints = hints or {}
    text = data.decode("utf-8-sig")
    try:
        rows = list(csv.reader(io.StringIO(text)))
    except csv.Error as e:
        raise LayerError("parse_error", str(e))
    if not rows:
        raise LayerError("parse_error", "empty input, header row required")
    header = rows[0]
    if len(set(header)) != len(header) or any(h == "" for h in header):
        raise LayerError("parse_error", "header names must be unique and non-empty")
    body = rows[1:]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise LayerError("ragged_row", f"line {i + 2}")

    lon_col = next((c for c, h in hints.items() if h == "lon"), None)
    lat_col = next((c for c, h in hints.items() if h == "lat"), None)
    dtypes: dict[str, str] = {}
    for j, name in enumerate(header):
        hint = hints.get(name)
        if hint in ("lon", "lat"):
            dtypes[name] = "number"
        elif hint is not None:
            dtypes[name] = hint
        else:
            dtypes[name] = _infer_dtype([row[j] for row in body])

    schema = [AttributeDef(name, dtypes[name]) for name in header]
    records = []
    for i, row in enumerate(body):
        records.append([_parse_cell(dtypes[h], row[j], i + 2) for j, h in enumerate(header)])

    if lon_col and lat_col:
        li, lj = header.index(lon_col), header.index(lat_col)
        geom_name = "geometry"
        while geom_name in header:
            geom_name += "_"
        schema = schema + [AttributeDef(geom_name, "geometry2d")]
        for i, rec in enumerate(records):
            if rec[li] is None or rec[lj] is None:
                raise LayerError("parse_error", f"line {i + 2}: missing lon/lat")
            rec.append({"type": "Point", "coordinates": [rec[li], rec[lj]]})
        return make_layer("point", schema, records)
    return make_layer("table", schema, records)


_GEO_EXPECT = {
    "point": {"Point"},
    "mesh2d": {"Polygon", "MultiPolygon"},
    "network": {"LineString", "MultiLineString"},
}


def load_geo(data: bytes, expect: str) -> DataLayer:
    """GeoJSON FeatureCollection -> point/mesh2d/network layer."""
    if expect not in _GEO_EXPECT:
        raise LayerError("geometry_kind_mismatch", f"unsupported expect {expect!r}")
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LayerError("parse_error", str(e))
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise LayerError("parse_error", "expected a FeatureCollection")
    feats = doc.get("features", [])
    allowed = _GEO_EXPECT[expect]
    keys: list[str] = []
    for f in feats:
        geom = f.get("geometry") or {}
        if geom.get("type") not in allowed:
            raise LayerError(
                "geometry_kind_mismatch",
                f"{geom.get('type')!r} not compatible with {expect!r}",
            )
        for k in (f.get("properties") or {}):
            if k not in keys:
                keys.append(k)

    def prop_dtype(k: str) -> str:
        vals = [(f.get("properties") or {}).get(k) for f in feats]
        vals = [v for v in vals if v is not None]
        if vals and all(isinstance(v, bool) for v in vals):
            return "boolean"
        if vals and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            return "number"
        return "text"

    dtypes = {k: prop_dtype(k) for k in keys}
    geom_name = "geometry"
    while geom_name in keys:
        geom_name += "_"
    schema = [AttributeDef(k, dtypes[k]) for k in keys] + [AttributeDef(geom_name, "geometry2d")]
    records = []
    for f in feats:
        props = f.get("properties") or {}
        rec: list[Any] = []
        for k in keys:
            v = props.get(k)
            if v is not None and dtypes[k] == "text" and not isinstance(v, str):
                v = json.dumps(v, sort_keys=True)
            rec.append(v)
        g = f["geometry"]
        rec.append({"type": g["type"], "coordinates": g["coordinates"]})
        records.append(rec)
    return make_layer(expect, schema, records)


_GRID_HEADER = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def load_grid(data: bytes) -> DataLayer:
    """ESRI-ASCII-style raster text -> grid layer (row-major from the NW cell)."""
    tokens: list[str] = []
    header: dict[str, float] = {}
    for line in data.decode("utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0].lower() in _GRID_HEADER and len(parts) == 2:
            header[parts[0].lower()] = float(parts[1])
        else:
            tokens.extend(parts)
    for fieldname in _GRID_HEADER:
        if fieldname not in header:
            raise LayerError("header_missing", fieldname)
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    nodata = header["nodata_value"]
    if len(tokens) != nrows * ncols:
        raise LayerError("cell_count_mismatch", f"expected {nrows * ncols} cells, got {len(tokens)}")
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise LayerError("parse_error", str(e))
    records = [[None if v == nodata else v] for v in values]
    gm = GridMeta(header["xllcorner"], header["yllcorner"], header["cellsize"], nrows, ncols)
    return make_layer("grid", [AttributeDef("value", "number")], records, gm)


def load_image_manifest(data: bytes) -> DataLayer:
    """CSV manifest (path,lon,lat[,heading,captured_at,...]) -> image layer.

    Extra manifest columns (capture metadata, model scores) become attributes
    with load_table's dtype inference.
    """
    text = data.decode("utf-8-sig")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise LayerError("missing_column", "path")
    header = rows[0]
    for required in ("path", "lon", "lat"):
        if required not in header:
            raise LayerError("missing_column", required)
    body = rows[1:]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise LayerError("ragged_row", f"line {i + 2}")
    optional = [c for c in ("heading", "captured_at") if c in header]
    extra = [c for c in header if c not in ("path", "lon", "lat", "heading", "captured_at")]
    idx = {c: header.index(c) for c in header}
    extra_dtypes = {c: _infer_dtype([row[idx[c]] for row in body]) for c in extra}
    schema = [AttributeDef("path", "image_ref")]
    for c in optional:
        schema.append(AttributeDef(c, "number" if c == "heading" else "timestamp"))
    for c in extra:
        schema.append(AttributeDef(c, extra_dtypes[c]))
    schema.append(AttributeDef("geometry", "geometry2d"))
    records = []
    for i, row in enumerate(body):
        try:
            lon, lat = float(row[idx["lon"]]), float(row[idx["lat"]])
        except ValueError:
            raise LayerError("parse_error", f"line {i + 2}: bad lon/lat")
        rec: list[Any] = [row[idx["path"]]]
        for c in optional:
            raw = row[idx[c]]
            rec.append(None if raw == "" else (float(raw) if c == "heading" else raw))
        for c in extra:
            rec.append(_parse_cell(extra_dtypes[c], row[idx[c]], i + 2))
        rec.append({"type": "Point", "coordinates": [lon, lat]})
        records.append(rec)
    return make_layer("image", schema, records)


def _walk_positions(coords: Any):
    if isinstance(coords, list):
        if coords and isinstance(coords[0], float):
            yield coords
        else:
            for c in coords:
                yield from _walk_positions(c)


def layer_bbox(layer: DataLayer) -> BBox:
    """Tight lon/lat envelope over all geometries (grid: meta extent)."""
    if layer.kind == "grid":
        gm = layer.grid_meta
        assert gm is not None
        return BBox(gm.origin_lon, gm.origin_lat,
                    gm.origin_lon + gm.ncols * gm.cell_size,
                    gm.origin_lat + gm.nrows * gm.cell_size)
    lons: list[float] = []
    lats: list[float] = []
    for i, a in enumerate(layer.schema):
        if a.dtype not in ("geometry2d", "geometry3d"):
            continue
        for rec in layer.records:
            if rec[i] is None:
                continue
            for pos in _walk_positions(rec[i]["coordinates"]):
                lons.append(pos[0])
                lats.append(pos[1])
    if not lons:
        raise LayerError("no_geometry")
    return BBox(min(lons), min(lats), max(lons), max(lats))


def grid_cell_center(gm: GridMeta, record_id: int) -> tuple[float, float]:
    """Center of a grid cell; records run row-major from the north-west cell."""
    row, col = divmod(record_id, gm.ncols)
    lon = gm.origin_lon + (col + 0.5) * gm.cell_size
    lat = gm.origin_lat + (gm.nrows - row - 0.5) * gm.cell_size
    return lon, lat
