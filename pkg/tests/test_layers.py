import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanflow.canonical import canonical_bytes
from urbanflow.layers import (
    AttributeDef,
    GridMeta,
    LayerError,
    deserialize_layer,
    envelope_doc,
    grid_cell_center,
    layer_bbox,
    load_geo,
    load_grid,
    load_image_manifest,
    load_table,
    make_layer,
    serialize_layer,
)


def fc(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)}).encode()


def feature(geom_type, coords, **props):
    return {"type": "Feature", "properties": props,
            "geometry": {"type": geom_type, "coordinates": coords}}


UNIT_SQUARE = [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]


# --- load_table --------------------------------------------------------------

def test_load_table_numeric_inference():
    l = load_table(b"a,b\n1,2\n3,4")
    assert l.kind == "table"
    assert [a.dtype for a in l.schema] == ["number", "number"]
    assert l.records == [[1.0, 2.0], [3.0, 4.0]]


def test_load_table_lonlat_hint_makes_point_layer():
    l = load_table(b"lon,lat,t\n0,0,x", hints={"lon": "lon", "lat": "lat"})
    assert l.kind == "point"
    assert l.records[0][-1] == {"type": "Point", "coordinates": [0.0, 0.0]}
    assert len(l.records) == 1


def test_load_table_header_only():
    l = load_table(b"a,b\n")
    assert l.kind == "table"
    assert l.records == []


def test_load_table_mixed_column_is_text():
    l = load_table(b"a\n1\nx")
    assert l.schema[0].dtype == "text"
    assert l.records == [["1"], ["x"]]


def test_load_table_empty_cells_are_null():
    l = load_table(b"a,b\n1,\n2,3")
    assert l.records[0] == [1.0, None]


def test_load_table_ragged_row():
    with pytest.raises(LayerError) as e:
        load_table(b"a,b\n1\n")
    assert e.value.code == "ragged_row"


def test_load_table_hint_violation_is_parse_error():
    with pytest.raises(LayerError) as e:
        load_table(b"a\nx", hints={"a": "number"})
    assert e.value.code == "parse_error"


# --- load_geo ----------------------------------------------------------------

def test_load_geo_polygon():
    l = load_geo(fc(feature("Polygon", UNIT_SQUARE, name="A")), expect="mesh2d")
    assert l.kind == "mesh2d"
    assert len(l.records) == 1
    assert [a.name for a in l.schema] == ["name", "geometry"]


def test_load_geo_kind_mismatch():
    with pytest.raises(LayerError) as e:
        load_geo(fc(feature("Point", [0, 0], name="A")), expect="mesh2d")
    assert e.value.code == "geometry_kind_mismatch"


def test_load_geo_property_union_fills_nulls():
    l = load_geo(fc(feature("Polygon", UNIT_SQUARE, a=1),
                    feature("Polygon", UNIT_SQUARE, b="x")), expect="mesh2d")
    names = [a.name for a in l.schema]
    assert names == ["a", "b", "geometry"]
    assert l.records[0][1] is None and l.records[1][0] is None


def test_load_geo_network():
    l = load_geo(fc(feature("LineString", [[0, 0], [1, 1]], road="r1")), expect="network")
    assert l.kind == "network"


# --- load_grid ---------------------------------------------------------------

GRID_2X2 = b"ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 4\n"


def test_load_grid_cells_row_major_from_northwest():
    l = load_grid(GRID_2X2)
    assert [r[0] for r in l.records] == [1.0, 2.0, 3.0, 4.0]
    # record 0 is the north-west cell: centered at (0.5, 1.5)
    assert grid_cell_center(l.grid_meta, 0) == (0.5, 1.5)
    assert grid_cell_center(l.grid_meta, 3) == (1.5, 0.5)


def test_load_grid_all_nodata():
    l = load_grid(b"ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n-1 -1\n-1 -1\n")
    assert [r[0] for r in l.records] == [None] * 4


def test_load_grid_cell_count_mismatch():
    with pytest.raises(LayerError) as e:
        load_grid(b"ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 2 3\n")
    assert e.value.code == "cell_count_mismatch"


def test_load_grid_header_missing():
    with pytest.raises(LayerError) as e:
        load_grid(b"ncols 2\nnrows 2\nxllcorner 0\ncellsize 1\nNODATA_value -1\n1 2\n3 4\n")
    assert e.value.code == "header_missing"
    assert "yllcorner" in str(e.value)


def test_grid_centers_match_header_arithmetic():
    l = load_grid(b"ncols 3\nnrows 2\nxllcorner -10.5\nyllcorner 4.25\ncellsize 0.125\n"
                  b"NODATA_value -1\n1 2 3\n4 5 6\n")
    gm = l.grid_meta
    for rid in range(6):
        row, col = divmod(rid, 3)
        lon, lat = grid_cell_center(gm, rid)
        expect_lon = -10.5 + (col + 0.5) * 0.125
        expect_lat = 4.25 + (2 - row - 0.5) * 0.125
        assert math.isclose(lon, expect_lon, rel_tol=1e-12)
        assert math.isclose(lat, expect_lat, rel_tol=1e-12)


# --- load_image_manifest -------------------------------------------------------

def test_image_manifest_minimal():
    l = load_image_manifest(b"path,lon,lat\nimg1.jpg,0,0\n")
    assert l.kind == "image"
    assert l.records[0][0] == "img1.jpg"
    assert [a.name for a in l.schema] == ["path", "geometry"]


def test_image_manifest_missing_column():
    with pytest.raises(LayerError) as e:
        load_image_manifest(b"path,lon\nimg1.jpg,0\n")
    assert e.value.code == "missing_column"


def test_image_manifest_duplicates_allowed():
    l = load_image_manifest(b"path,lon,lat\na.jpg,0,0\na.jpg,1,1\n")
    assert len(l.records) == 2


def test_image_manifest_extra_columns_inferred():
    l = load_image_manifest(b"path,lon,lat,uncertainty\na.jpg,0,0,0.25\n")
    assert ("uncertainty", "number") in [(a.name, a.dtype) for a in l.schema]


# --- bbox ---------------------------------------------------------------------

def test_bbox_points():
    l = load_table(b"lon,lat\n0,0\n1,2", hints={"lon": "lon", "lat": "lat"})
    b = layer_bbox(l)
    assert (b.min_lon, b.min_lat, b.max_lon, b.max_lat) == (0, 0, 1, 2)


def test_bbox_single_point_degenerate():
    l = load_table(b"lon,lat\n3,4", hints={"lon": "lon", "lat": "lat"})
    b = layer_bbox(l)
    assert (b.min_lon, b.min_lat) == (b.max_lon, b.max_lat) == (3, 4)


def test_bbox_grid_extent():
    b = layer_bbox(load_grid(GRID_2X2))
    assert (b.min_lon, b.min_lat, b.max_lon, b.max_lat) == (0, 0, 2, 2)


def test_bbox_no_geometry():
    with pytest.raises(LayerError) as e:
        layer_bbox(load_table(b"a\n1"))
    assert e.value.code == "no_geometry"


# --- envelope -------------------------------------------------------------------

def test_roundtrip_identity_examples():
    layers = [
        load_table(b"a,b\n1,2\n3,4"),
        load_table(b"lon,lat,t\n0,0,x", hints={"lon": "lon", "lat": "lat"}),
        load_grid(GRID_2X2),
        load_geo(fc(feature("Polygon", UNIT_SQUARE, name="A")), expect="mesh2d"),
        load_image_manifest(b"path,lon,lat\nimg1.jpg,0,0\n"),
    ]
    for l in layers:
        assert deserialize_layer(serialize_layer(l)) == l


def test_canonical_bytes_independent_of_insertion_order():
    rec_a = [{"type": "Point", "coordinates": [0.0, 1.0]}]
    rec_b = [dict([("coordinates", [0.0, 1.0]), ("type", "Point")])]
    a = make_layer("point", [AttributeDef("geometry", "geometry2d")], [rec_a])
    b = make_layer("point", [AttributeDef("geometry", "geometry2d")], [rec_b])
    assert serialize_layer(a) == serialize_layer(b)
    assert a.id == b.id


def test_truncated_envelope():
    data = serialize_layer(load_table(b"a\n1"))
    with pytest.raises(LayerError) as e:
        deserialize_layer(data[: len(data) // 2])
    assert e.value.code == "corrupt_envelope"


def test_envelope_missing_key():
    with pytest.raises(LayerError) as e:
        deserialize_layer(canonical_bytes({"kind": "table", "schema": [], "records": []}))
    assert e.value.code == "corrupt_envelope"


def test_kind_invariants_enforced():
    with pytest.raises(LayerError):
        make_layer("point", [AttributeDef("a", "number")], [[1.0]])
    with pytest.raises(LayerError):
        make_layer("grid", [AttributeDef("value", "number")], [[1.0]])  # no meta
    with pytest.raises(LayerError):
        make_layer("mesh2d", [AttributeDef("geometry", "geometry2d")],
                   [[{"type": "Point", "coordinates": [0.0, 0.0]}]])


# --- property: random tables round-trip and hash stably -------------------------

_cell = st.one_of(
    st.none(),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.booleans(),
    st.text(max_size=8),
)


@st.composite
def table_layers(draw):
    ncols = draw(st.integers(1, 4))
    nrows = draw(st.integers(0, 8))
    dtypes = draw(st.lists(st.sampled_from(["number", "text", "boolean"]),
                           min_size=ncols, max_size=ncols))
    schema = [AttributeDef(f"c{i}", d) for i, d in enumerate(dtypes)]
    records = []
    for _ in range(nrows):
        rec = []
        for d in dtypes:
            if draw(st.booleans()):
                rec.append(None)
            elif d == "number":
                rec.append(draw(st.floats(allow_nan=False, allow_infinity=False, width=32)))
            elif d == "boolean":
                rec.append(draw(st.booleans()))
            else:
                rec.append(draw(st.text(max_size=8)))
        records.append(rec)
    return make_layer("table", schema, records)


@settings(max_examples=60, deadline=None)
@given(table_layers())
def test_roundtrip_property(layer):
    again = deserialize_layer(serialize_layer(layer))
    assert again == layer
    assert serialize_layer(again) == serialize_layer(layer)
    assert again.id == layer.id


def test_envelope_doc_shape():
    doc = envelope_doc(load_grid(GRID_2X2))
    assert set(doc) == {"crs", "kind", "schema", "records", "grid_meta"}
    assert doc["crs"] == "EPSG:4326"
