/** End-to-end UI criteria against the real service (spawned in global setup):
 * oracle-correct linked brushing, byte-identical rollback through the
 * provenance facet, pinned-only visualization mode, and slider-driven
 * re-execution refreshing a dependent chart. */

import { describe, expect, it } from "vitest";
import { renderVisualizationMode } from "../src/vizmode.js";
import {
  addNode,
  buildBoroughWorkspace,
  dataDir,
  fetchEnvelope,
  mouse,
  mountCanvas,
  newClient,
  nodeDoc,
  opCode,
  viewCode,
  waitFor,
  wire,
} from "./helpers.js";
import { writeFileSync } from "node:fs";
import { join } from "node:path";

describe("linked brushing across chart and map", () => {
  it("highlights oracle-correct polygons when a borough bar is brushed", async () => {
    const api = await newClient("brusher");
    const ws = await buildBoroughWorkspace(api);
    const { controller, container } = await mountCanvas(api, ws);

    // independent oracle: neighborhoods whose borough attribute matches
    const hoods = await fetchEnvelope(api, ws, "hoods");
    const nameIdx = hoods.schema.findIndex((a) => a.name === "name");
    const boroIdx = hoods.schema.findIndex((a) => a.name === "borough");
    const grouped = await fetchEnvelope(api, ws, "by_boro");
    const boroOfRecord = (rid: number) => String(grouped.records[rid]![0]);

    const chartSvg = container.querySelector(
      '[data-node-id="chart"] .uf-chart svg') as SVGElement;
    expect(chartSvg).toBeTruthy();
    const bars = [...chartSvg.querySelectorAll(".uf-mark")];
    expect(bars).toHaveLength(5);
    const barB1 = bars.find((b) => b.getAttribute("data-x") === "B1")!;
    const rid = Number(barB1.getAttribute("data-record-id"));
    expect(boroOfRecord(rid)).toBe("B1");

    mouse(barB1, "mousedown");
    mouse(barB1, "mouseup");

    const expected = new Set(
      hoods.records.flatMap((rec, i) => (rec[boroIdx] === "B1" ? [i] : [])));
    await waitFor(() => {
      const sel = container.querySelectorAll(
        '[data-node-id="map"] .uf-feature.uf-selected');
      return sel.length === expected.size;
    });
    const selectedIds = new Set(
      [...container.querySelectorAll('[data-node-id="map"] .uf-feature.uf-selected')]
        .map((p) => Number(p.getAttribute("data-record-id"))));
    expect(selectedIds).toEqual(expected);
    expect(expected.size).toBe(4);
    expect([...expected].every(
      (i) => String(hoods.records[i]![nameIdx]).startsWith("N"))).toBe(true);

    // dragging across two bars replace-selects both boroughs' polygons
    const barB0 = bars.find((b) => b.getAttribute("data-x") === "B0")!;
    mouse(barB0, "mousedown");
    mouse(barB1, "mouseenter");
    mouse(barB1, "mouseup");
    const expectedTwo = new Set(
      hoods.records.flatMap((rec, i) =>
        (rec[boroIdx] === "B0" || rec[boroIdx] === "B1" ? [i] : [])));
    await waitFor(() => container.querySelectorAll(
      '[data-node-id="map"] .uf-feature.uf-selected').length === expectedTwo.size);
    const twoIds = new Set(
      [...container.querySelectorAll('[data-node-id="map"] .uf-feature.uf-selected')]
        .map((p) => Number(p.getAttribute("data-record-id"))));
    expect(twoIds).toEqual(expectedTwo);

    // clicking the selected bar again toggles the selection off everywhere
    controller.state("chart");
    container.remove();
  });
});

describe("provenance facet rollback", () => {
  it("restores the code editor to byte-identical content", async () => {
    const api = await newClient("historian");
    const ws = (await api.createWorkspace("ui-history")).workspace_id;
    const original = opCode("load_table", { path: "ui_complaints.csv",
                                            hints: { lon: "lon", lat: "lat" } });
    await addNode(api, ws, nodeDoc("L", "loader", "load_table", original));
    const edited = opCode("load_table", { path: "other.csv", hints: {} });
    await api.postMutation(ws, { kind: "update_code", node_id: "L", code: edited });

    const { controller, container } = await mountCanvas(api, ws);
    controller.state("L").facet = "provenance";
    await controller.renderFacetBodies();
    const versions = [...container.querySelectorAll('[data-node-id="L"] .uf-version')];
    expect(versions).toHaveLength(2);
    const current = container.querySelector(
      '[data-node-id="L"] .uf-version-current') as HTMLElement;
    const rootVersion = versions.find((v) => v !== current) as HTMLElement;

    rootVersion.click();
    await waitFor(() => controller.spec.nodes[0]!.canonical_code === original);

    controller.state("L").facet = "programming";
    await controller.renderFacetBodies();
    const editor = container.querySelector(
      '[data-node-id="L"] textarea.uf-code') as HTMLTextAreaElement;
    expect(editor.value).toBe(original); // byte-identical restore
    container.remove();
  });
});

describe("visualization mode", () => {
  it("shows only pinned nodes as panels, with no edges", async () => {
    const api = await newClient("curator");
    const ws = await buildBoroughWorkspace(api);
    await api.postMutation(ws, { kind: "set_pin", node_id: "chart", pinned: true });
    await api.postMutation(ws, { kind: "set_pin", node_id: "map", pinned: true });
    const { controller, container } = await mountCanvas(api, ws);
    await controller.sync();

    const vizHost = document.createElement("div");
    document.body.appendChild(vizHost);
    await renderVisualizationMode(api, controller.session, controller, vizHost);
    const panels = [...vizHost.querySelectorAll(".uf-viz-panel")];
    expect(panels.map((p) => p.getAttribute("data-node-id")).sort()).toEqual(
      ["chart", "map"]);
    expect(vizHost.querySelectorAll(".uf-edge")).toHaveLength(0);
    expect(vizHost.querySelector(".uf-viz-panel .uf-chart svg")).toBeTruthy();

    await api.postMutation(ws, { kind: "set_pin", node_id: "chart", pinned: false });
    await api.postMutation(ws, { kind: "set_pin", node_id: "map", pinned: false });
    await renderVisualizationMode(api, controller.session, controller, vizHost);
    expect(vizHost.querySelectorAll(".uf-viz-panel")).toHaveLength(0);
    expect(vizHost.querySelector(".uf-empty")).toBeTruthy();
    vizHost.remove();
    container.remove();
  });
});

describe("slider-driven re-execution", () => {
  it("re-runs the transform and refreshes the dependent chart", async () => {
    const api = await newClient("planner");
    writeFileSync(join(dataDir(), "ui_buildings.geojson"), JSON.stringify({
      type: "FeatureCollection",
      features: [0, 1, 2].map((i) => ({
        type: "Feature",
        properties: { name: `bldg-${i}`, height: 30 + i * 10 },
        geometry: { type: "Polygon",
                    coordinates: [[[i, 0], [i + 0.5, 0], [i + 0.5, 0.5], [i, 0.5], [i, 0]]] },
      })),
    }));
    const ws = (await api.createWorkspace("ui-whatif")).workspace_id;
    await addNode(api, ws, nodeDoc("bldgs", "loader", "load_geo",
      opCode("load_geo", { path: "ui_buildings.geojson", expect: "mesh2d" })));
    const sliderCode =
      '{"args":{"column":"height","value":$[slider,Height,0,500,10,100],' +
      '"where_attr":"name","where_value":"bldg-1"},"op":"assign_where"}';
    await addNode(api, ws, nodeDoc("whatif", "transform", "assign_where", sliderCode));
    await wire(api, ws, "bldgs", "whatif");
    await addNode(api, ws, nodeDoc("hchart", "visualization", "chart_view",
      viewCode("chart", { spec: { mark: "bar", x: { attr: "name", type: "nominal" },
                                  y: { attr: "height", type: "quantitative" } } })));
    await wire(api, ws, "whatif", "hchart");
    await api.run(ws);

    const { controller, container } = await mountCanvas(api, ws);
    const barY = () => {
      const bar = container.querySelector(
        '[data-node-id="hchart"] .uf-mark[data-x="bldg-1"]');
      return bar ? bar.getAttribute("data-y") : null;
    };
    await waitFor(() => barY() === "100");

    controller.state("whatif").facet = "gui";
    await controller.renderFacetBodies();
    const slider = container.querySelector(
      '[data-node-id="whatif"] .uf-widget-slider input') as HTMLInputElement;
    expect(slider).toBeTruthy();
    expect(slider.value).toBe("100");
    slider.value = "250";
    slider.dispatchEvent(new Event("input", { bubbles: true }));
    const apply = container.querySelector(
      '[data-node-id="whatif"] .uf-apply') as HTMLButtonElement;
    apply.click();

    await waitFor(() => barY() === "250");
    const others = [...container.querySelectorAll(
      '[data-node-id="hchart"] .uf-mark')].map((m) =>
        [m.getAttribute("data-x"), m.getAttribute("data-y")]);
    expect(others).toContainEqual(["bldg-0", "30"]);
    expect(others).toContainEqual(["bldg-2", "50"]);
    container.remove();
  });
});
