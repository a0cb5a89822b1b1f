import { describe, expect, it } from "vitest";
import { ApiClient, ClientSession } from "../src/api.js";
import { applyMutationDoc } from "../src/replay.js";
import { renderChart, renderMap, rampFill } from "../src/viewrender.js";
import type { ChartView, MapView, SelectionMode, SpecDoc } from "../src/types.js";
import { mouse } from "./helpers.js";

function emptySpec(): SpecDoc {
  return { id: "w", name: "w", nodes: [], data_deps: [], interaction_deps: [], canvas: {} };
}

const NODE = {
  id: "a", kind: "loader" as const, template_id: "load_table",
  canonical_code: "{}", widget_values: {}, pinned: false, comments: [],
};

describe("mutation replay", () => {
  it("applies node and edge mutations like the server", () => {
    let spec = applyMutationDoc(emptySpec(), { kind: "add_node", node: NODE });
    spec = applyMutationDoc(spec, { kind: "add_node", node: { ...NODE, id: "b" } });
    spec = applyMutationDoc(spec, {
      kind: "add_edge", edge_kind: "data",
      data_dep: { source: "a", target: "b", layer_slots: [[0, 0]] },
    });
    expect(spec.nodes.map((n) => n.id)).toEqual(["a", "b"]);
    expect(spec.data_deps).toHaveLength(1);
    expect(spec.canvas["a"]).toBeDefined();

    spec = applyMutationDoc(spec, { kind: "update_code", node_id: "b", code: "new" });
    expect(spec.nodes[1]!.canonical_code).toBe("new");

    spec = applyMutationDoc(spec, { kind: "remove_node", node_id: "a" });
    expect(spec.nodes.map((n) => n.id)).toEqual(["b"]);
    expect(spec.data_deps).toHaveLength(0);
  });

  it("cascades interaction deps when their data dep disappears", () => {
    let spec = applyMutationDoc(emptySpec(), { kind: "add_node", node: { ...NODE, id: "i", kind: "interaction" } });
    spec = applyMutationDoc(spec, { kind: "add_node", node: { ...NODE, id: "v", kind: "visualization" } });
    spec = applyMutationDoc(spec, {
      kind: "add_edge", edge_kind: "data",
      data_dep: { source: "i", target: "v", layer_slots: [[0, 0]] },
    });
    spec = applyMutationDoc(spec, {
      kind: "add_edge", edge_kind: "interaction",
      interaction_dep: { endpoint_a: "i", endpoint_b: "v", link: null },
    });
    spec = applyMutationDoc(spec, { kind: "remove_edge", edge_kind: "data", edge: ["i", "v"] });
    expect(spec.interaction_deps).toHaveLength(0);
  });

  it("does not mutate the input spec", () => {
    const before = emptySpec();
    applyMutationDoc(before, { kind: "add_node", node: NODE });
    expect(before.nodes).toHaveLength(0);
  });
});

describe("client session", () => {
  it("discards stale selection echoes by revision", () => {
    const s = new ClientSession(new ApiClient("http://x"), "w");
    expect(s.acceptSelection("i", 3)).toBe(true);
    expect(s.acceptSelection("i", 2)).toBe(false);
    expect(s.acceptSelection("i", 3)).toBe(false);
    expect(s.acceptSelection("i", 4)).toBe(true);
    expect(s.acceptSelection("other", 1)).toBe(true);
  });
});

function chartView(): ChartView {
  return {
    view: "chart",
    record_id_channel: true,
    spec: { mark: "bar", x: { attr: "k", type: "nominal" },
            y: { attr: "v", type: "quantitative" }, color: null, selection_enabled: true },
    data: { crs: "EPSG:4326", kind: "table",
            schema: [{ name: "k", dtype: "text" }, { name: "v", dtype: "number" }],
            records: [["A", 4], ["B", 2], ["C", 7]] },
    marks: [
      { record_id: 0, x: "A", y: 4 },
      { record_id: 1, x: "B", y: 2, interaction: true },
      { record_id: 2, x: "C", y: 7 },
    ],
  };
}

describe("chart renderer", () => {
  it("renders one pickable mark per record with selection classes", () => {
    const root = renderChart(chartView());
    const marks = [...root.querySelectorAll(".uf-mark")];
    expect(marks.map((m) => m.getAttribute("data-record-id"))).toEqual(["0", "1", "2"]);
    expect(marks[1]!.classList.contains("uf-selected")).toBe(true);
    expect(marks[0]!.classList.contains("uf-selected")).toBe(false);
  });

  it("click toggles one record, drag replaces with the swept range", () => {
    const calls: [number[], SelectionMode][] = [];
    const root = renderChart(chartView(), (ids, mode) => calls.push([ids, mode]));
    const marks = [...root.querySelectorAll(".uf-mark")];
    mouse(marks[1]!, "mousedown");
    mouse(marks[1]!, "mouseup");
    expect(calls.pop()).toEqual([[1], "toggle"]);
    mouse(marks[0]!, "mousedown");
    mouse(marks[1]!, "mouseenter");
    mouse(marks[2]!, "mouseenter");
    mouse(marks[2]!, "mouseup");
    expect(calls.pop()).toEqual([[0, 1, 2], "replace"]);
    (root.querySelector(".uf-clear") as HTMLButtonElement).click();
    expect(calls.pop()).toEqual([[], "clear"]);
  });
});

describe("map renderer", () => {
  it("renders polygons with ramp fills and selection outlines", () => {
    const view: MapView = {
      view: "map",
      record_id_channel: true,
      spec: { color_attr: "v", color_scale: { min: 0, max: 10, ramp: "viridis" },
              uniform_style: false, has_3d: false },
      extent: { min_lon: 0, min_lat: 0, max_lon: 2, max_lat: 1 },
      data: { crs: "EPSG:4326", kind: "mesh2d", schema: [], records: [] },
      features: [
        { record_id: 0, color_pos: 0,
          geometry: { type: "Polygon", coordinates: [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]] } },
        { record_id: 1, color_pos: 1, interaction: true,
          geometry: { type: "Polygon", coordinates: [[[1, 0], [2, 0], [2, 1], [1, 1], [1, 0]]] } },
      ],
    };
    const root = renderMap(view);
    const polys = [...root.querySelectorAll("polygon")];
    expect(polys).toHaveLength(2);
    expect(polys[0]!.getAttribute("fill")).toBe(rampFill(0));
    expect(polys[1]!.getAttribute("fill")).toBe(rampFill(1));
    expect(polys[1]!.classList.contains("uf-selected")).toBe(true);
  });
});
