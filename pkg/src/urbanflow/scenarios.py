"""Bundled example workflows on synthetic urban data, at desk scale.

Three end-to-end dataflows (image-uncertainty triage, what-if building
height, heat-index equity) plus the multi-resolution brushing fixture
(complaints / neighborhoods / boroughs). Each builder writes its synthetic
input files into the hub's data directory and assembles a workspace through
the same mutation path the UI uses. The scripts in scripts/ are thin
runners around these builders; the acceptance suite checks their outputs
against independent oracles.
"""

from __future__ import annotations

import csv
import io
import json
import random
from typing import Any, Optional

from .canonical import canonical_bytes
from .model import CanvasBox, DataDependency, InteractionDependency, Mutation, NodeSpec
from .ops import op_code
from .workspace import Hub, Workspace

EXTENT_COLS = 5  # boroughs
EXTENT_ROWS = 4  # neighborhoods per borough


def _unit_square(x0: float, y0: float, w: float = 1.0, h: float = 1.0) -> dict:
    return {
        "type": "Polygon",
        "coordinates": [[[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h], [x0, y0]]],
    }


def neighborhoods_geojson(rng: random.Random) -> bytes:
    """20 unit-square neighborhoods in a 5x4 grid; borough = column."""
    feats = []
    for col in range(EXTENT_COLS):
        for row in range(EXTENT_ROWS):
            n = col * EXTENT_ROWS + row
            feats.append({
                "type": "Feature",
                "properties": {
                    "name": f"N{n:02d}",
                    "borough": f"B{col}",
                    "elder_pop": round(rng.uniform(50, 2000), 1),
                },
                "geometry": _unit_square(float(col), float(row)),
            })
    return json.dumps({"type": "FeatureCollection", "features": feats}).encode()


def boroughs_geojson() -> bytes:
    feats = []
    for col in range(EXTENT_COLS):
        feats.append({
            "type": "Feature",
            "properties": {"name": f"B{col}"},
            "geometry": _unit_square(float(col), 0.0, 1.0, float(EXTENT_ROWS)),
        })
    return json.dumps({"type": "FeatureCollection", "features": feats}).encode()


def complaints_csv(rng: random.Random, n: int = 300) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["lon", "lat", "kind"])
    kinds = ["noise", "heat", "trash"]
    for _ in range(n):
        # keep strictly inside cells so containment is unambiguous
        w.writerow([round(rng.uniform(0.05, EXTENT_COLS - 0.05), 6),
                    round(rng.uniform(0.05, EXTENT_ROWS - 0.05), 6),
                    rng.choice(kinds)])
    return buf.getvalue().encode()


def image_manifest_csv(rng: random.Random, n: int = 40) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["path", "lon", "lat", "uncertainty"])
    for i in range(n):
        w.writerow([f"img{i:03d}.jpg",
                    round(rng.uniform(0.05, EXTENT_COLS - 0.05), 6),
                    round(rng.uniform(0.05, EXTENT_ROWS - 0.05), 6),
                    round(rng.random(), 4)])
    return buf.getvalue().encode()


def buildings_geojson(rng: random.Random, n: int = 12) -> bytes:
    feats = []
    for i in range(n):
        x = rng.uniform(0.2, EXTENT_COLS - 0.5)
        y = rng.uniform(0.2, EXTENT_ROWS - 0.5)
        feats.append({
            "type": "Feature",
            "properties": {"name": f"bldg-{i}", "height": round(rng.uniform(10, 80), 1)},
            "geometry": _unit_square(x, y, 0.2, 0.2),
        })
    return json.dumps({"type": "FeatureCollection", "features": feats}).encode()


def utci_grid_asc(rng: random.Random, nrows: int = 20, ncols: int = 25) -> bytes:
    # west-east warm gradient plus noise; a few NODATA holes
    lines = [
        f"ncols {ncols}", f"nrows {nrows}", "xllcorner 0", "yllcorner 0",
        f"cellsize {EXTENT_COLS / ncols}", "NODATA_value -9999",
    ]
    for r in range(nrows):
        row = []
        for c in range(ncols):
            if rng.random() < 0.02:
                row.append("-9999")
            else:
                row.append(str(round(20 + 10 * c / ncols + rng.uniform(-1, 1), 3)))
        lines.append(" ".join(row))
    return "\n".join(lines).encode()


def view_code(view: str, **fields: Any) -> str:
    return canonical_bytes({"view": view, **fields}).decode()


def _add(ws: Workspace, user: str, node_id: str, kind: str, template: str,
         code: Optional[str] = None, x: float = 0.0, y: float = 0.0) -> str:
    node = NodeSpec(id=node_id, kind=kind, template_id=template,
                    canonical_code="" if kind == "interaction" else
                    (code if code is not None else ws.hub.registry.get(template).canonical_code))
    ws.apply(user, Mutation.add_node(node, CanvasBox(x=x, y=y)))
    return node_id


def _wire(ws: Workspace, user: str, source: str, target: str,
          slots: tuple[tuple[int, int], ...] = ((0, 0),)) -> None:
    ws.apply(user, Mutation.add_edge(DataDependency(source, target, slots)))


def _link(ws: Workspace, user: str, a: str, b: str,
          keys: Optional[tuple[str, str]] = None) -> None:
    ws.apply(user, Mutation.add_interaction_edge(InteractionDependency(a, b, keys)))


def scenario_image_uncertainty(hub: Hub, user: str, seed: int = 7) -> dict:
    """Gallery of street-level images sorted by model uncertainty + map."""
    rng = random.Random(seed)
    assert hub.data_dir is not None
    (hub.data_dir / "imguq_images.csv").write_bytes(image_manifest_csv(rng))
    (hub.data_dir / "imguq_hoods.geojson").write_bytes(neighborhoods_geojson(rng))
    ws = hub.create_workspace(user, "image-uncertainty")
    _add(ws, user, "images", "loader", "load_images",
         op_code("load_images", path="imguq_images.csv"), 0, 0)
    _add(ws, user, "hoods", "loader", "load_geo",
         op_code("load_geo", path="imguq_hoods.geojson", expect="mesh2d"), 0, 200)
    _add(ws, user, "join", "transform", "spatial_join",
         op_code("spatial_join", how="left"), 260, 100)
    _wire(ws, user, "images", "join", ((0, 0),))
    _wire(ws, user, "hoods", "join", ((0, 1),))
    _add(ws, user, "by_hood", "transform", "group_by",
         op_code("group_by", keys=["name"],
                 aggs=[{"column": "uncertainty", "func": "mean"}]), 520, 200)
    _wire(ws, user, "join", "by_hood")
    _add(ws, user, "gallery", "visualization", "gallery_view",
         view_code("gallery", sort_attr="uncertainty"), 520, 0)
    _wire(ws, user, "join", "gallery")
    _add(ws, user, "map", "visualization", "map_view",
         view_code("map", spec={"color_attr": "uncertainty"}), 520, 100)
    _wire(ws, user, "join", "map")
    _add(ws, user, "chart", "visualization", "chart_view",
         view_code("chart", spec={"mark": "bar",
                                  "x": {"attr": "name", "type": "nominal"},
                                  "y": {"attr": "mean_uncertainty", "type": "quantitative"}}),
         780, 200)
    _wire(ws, user, "by_hood", "chart")
    for nid in ("gallery", "map", "chart"):
        ws.apply(user, Mutation.set_pin(nid, True))
    return {"workspace": ws, "nodes": ["images", "hoods", "join", "by_hood",
                                       "gallery", "map", "chart"]}


HEIGHT_SLIDER = "$[slider,Height,0,500,10,100]"


def whatif_transform_code(target_building: str) -> str:
    # hand-built so the slider token lands outside quotes (a JSON number slot)
    return (
        '{"args":{"column":"height","value":' + HEIGHT_SLIDER +
        ',"where_attr":"name","where_value":"' + target_building +
        '"},"op":"assign_where"}'
    )


def scenario_what_if(hub: Hub, user: str, seed: int = 11) -> dict:
    """Override one building's height through a slider and chart the result."""
    rng = random.Random(seed)
    assert hub.data_dir is not None
    (hub.data_dir / "whatif_buildings.geojson").write_bytes(buildings_geojson(rng))
    ws = hub.create_workspace(user, "what-if-height")
    _add(ws, user, "bldgs", "loader", "load_geo",
         op_code("load_geo", path="whatif_buildings.geojson", expect="mesh2d"), 0, 0)
    _add(ws, user, "whatif", "transform", "assign_where",
         whatif_transform_code("bldg-7"), 260, 0)
    _wire(ws, user, "bldgs", "whatif")
    _add(ws, user, "hmap", "visualization", "map_view",
         view_code("map", spec={"color_attr": "height"}), 520, 0)
    _wire(ws, user, "whatif", "hmap")
    _add(ws, user, "hchart", "visualization", "chart_view",
         view_code("chart", spec={"mark": "bar",
                                  "x": {"attr": "name", "type": "nominal"},
                                  "y": {"attr": "height", "type": "quantitative"}}), 520, 140)
    _wire(ws, user, "whatif", "hchart")
    for nid in ("whatif", "hmap", "hchart"):
        ws.apply(user, Mutation.set_pin(nid, True))
    return {"workspace": ws, "nodes": ["bldgs", "whatif", "hmap", "hchart"],
            "target": "bldg-7"}


def scenario_heat_index(hub: Hub, user: str, seed: int = 13) -> dict:
    """Heat raster joined to neighborhoods; linked chart/map over the result."""
    rng = random.Random(seed)
    assert hub.data_dir is not None
    (hub.data_dir / "heat_utci.asc").write_bytes(utci_grid_asc(rng))
    (hub.data_dir / "heat_hoods.geojson").write_bytes(neighborhoods_geojson(rng))
    ws = hub.create_workspace(user, "heat-index")
    _add(ws, user, "utci", "loader", "load_grid", op_code("load_grid", path="heat_utci.asc"), 0, 0)
    _add(ws, user, "hoods", "loader", "load_geo",
         op_code("load_geo", path="heat_hoods.geojson", expect="mesh2d"), 0, 160)
    _add(ws, user, "join", "transform", "spatial_join",
         op_code("spatial_join", how="inner"), 260, 60)
    _wire(ws, user, "utci", "join", ((0, 0),))
    _wire(ws, user, "hoods", "join", ((0, 1),))
    _add(ws, user, "by_hood", "transform", "group_by",
         op_code("group_by", keys=["name"],
                 aggs=[{"column": "value", "func": "mean"},
                       {"column": "elder_pop", "func": "mean"}]), 520, 60)
    _wire(ws, user, "join", "by_hood")
    _add(ws, user, "i_table", "interaction", "interaction", x=780, y=0)
    _wire(ws, user, "by_hood", "i_table")
    _add(ws, user, "i_map", "interaction", "interaction", x=780, y=200)
    _wire(ws, user, "hoods", "i_map", ((0, 0),))
    _wire(ws, user, "i_table", "i_map", ((0, 1),))  # carries the link relation
    _link(ws, user, "i_table", "i_map", ("name", "name"))
    _add(ws, user, "chart", "visualization", "chart_view",
         view_code("chart", spec={"mark": "point",
                                  "x": {"attr": "mean_value", "type": "quantitative"},
                                  "y": {"attr": "mean_elder_pop", "type": "quantitative"}}),
         1040, 0)
    _wire(ws, user, "i_table", "chart")
    _link(ws, user, "i_table", "chart")
    _add(ws, user, "map", "visualization", "map_view",
         view_code("map", spec={"color_attr": "elder_pop"}), 1040, 200)
    _wire(ws, user, "i_map", "map")
    _link(ws, user, "i_map", "map")
    for nid in ("chart", "map"):
        ws.apply(user, Mutation.set_pin(nid, True))
    return {"workspace": ws,
            "nodes": ["utci", "hoods", "join", "by_hood", "i_table", "i_map",
                      "chart", "map"]}


def fig3_fixture(hub: Hub, user: str, seed: int = 3, n_complaints: int = 300) -> dict:
    """Complaints / neighborhoods / boroughs multi-resolution brushing chain."""
    rng = random.Random(seed)
    assert hub.data_dir is not None
    (hub.data_dir / "fig3_complaints.csv").write_bytes(complaints_csv(rng, n_complaints))
    (hub.data_dir / "fig3_hoods.geojson").write_bytes(neighborhoods_geojson(rng))
    (hub.data_dir / "fig3_boros.geojson").write_bytes(boroughs_geojson())
    ws = hub.create_workspace(user, "complaints")
    _add(ws, user, "complaints", "loader", "load_table",
         op_code("load_table", path="fig3_complaints.csv", hints={"lon": "lon", "lat": "lat"}), 0, 0)
    _add(ws, user, "hoods", "loader", "load_geo",
         op_code("load_geo", path="fig3_hoods.geojson", expect="mesh2d"), 0, 150)
    _add(ws, user, "boros", "loader", "load_geo",
         op_code("load_geo", path="fig3_boros.geojson", expect="mesh2d"), 0, 300)
    _add(ws, user, "join_n", "transform", "spatial_join",
         op_code("spatial_join", how="left"), 260, 60)
    _wire(ws, user, "complaints", "join_n", ((0, 0),))
    _wire(ws, user, "hoods", "join_n", ((0, 1),))
    _add(ws, user, "i_c", "interaction", "interaction", x=520, y=0)
    _wire(ws, user, "join_n", "i_c")
    _add(ws, user, "i_n", "interaction", "interaction", x=520, y=150)
    _wire(ws, user, "hoods", "i_n", ((0, 0),))
    _wire(ws, user, "i_c", "i_n", ((0, 1),))
    _link(ws, user, "i_c", "i_n", ("name", "name"))
    _add(ws, user, "i_b", "interaction", "interaction", x=520, y=300)
    _wire(ws, user, "boros", "i_b", ((0, 0),))
    _wire(ws, user, "i_n", "i_b", ((0, 1),))
    _link(ws, user, "i_n", "i_b", ("borough", "name"))
    _add(ws, user, "chart", "visualization", "chart_view",
         view_code("chart", spec={"mark": "bar",
                                  "x": {"attr": "kind", "type": "nominal"},
                                  "y": {"attr": "lat", "type": "quantitative"}}), 780, 0)
    _wire(ws, user, "i_c", "chart")
    _link(ws, user, "i_c", "chart")
    _add(ws, user, "map_n", "visualization", "map_view",
         view_code("map", spec={"color_attr": "elder_pop"}), 780, 150)
    _wire(ws, user, "i_n", "map_n")
    _link(ws, user, "i_n", "map_n")
    _add(ws, user, "map_b", "visualization", "map_view", view_code("map", spec={}), 780, 300)
    _wire(ws, user, "i_b", "map_b")
    _link(ws, user, "i_b", "map_b")
    return {"workspace": ws,
            "nodes": ["complaints", "hoods", "boros", "join_n",
                      "i_c", "i_n", "i_b", "chart", "map_n", "map_b"]}
