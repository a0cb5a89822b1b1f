/** Shared fixture builders for the e2e suite: drive the REAL service over
 * REST to assemble workspaces, then let the UI components do the talking. */

import { writeFileSync } from "node:fs";
import { join } from "node:path";
import { inject } from "vitest";
import { ApiClient, ClientSession } from "../src/api.js";
import { CanvasController } from "../src/canvas.js";
import type { EnvelopeDoc, MutationDoc, NodeDoc } from "../src/types.js";

export function apiBase(): string {
  return inject("apiBase");
}

export function dataDir(): string {
  return inject("dataDir");
}

export async function newClient(name: string): Promise<ApiClient> {
  const api = new ApiClient(apiBase());
  const creds = await api.register(name);
  await api.login(creds.user_id, creds.api_key);
  return api;
}

export function opCode(op: string, args: Record<string, unknown>): string {
  return JSON.stringify({ args, op });
}

export function nodeDoc(id: string, kind: NodeDoc["kind"], template: string,
                        code: string): NodeDoc {
  return { id, kind, template_id: template, canonical_code: code,
           widget_values: {}, pinned: false, comments: [] };
}

export async function addNode(api: ApiClient, ws: string, node: NodeDoc): Promise<void> {
  await api.postMutation(ws, { kind: "add_node", node } as unknown as MutationDoc);
}

export async function wire(api: ApiClient, ws: string, source: string, target: string,
                           slots: [number, number][] = [[0, 0]]): Promise<void> {
  await api.postMutation(ws, {
    kind: "add_edge", edge_kind: "data",
    data_dep: { source, target, layer_slots: slots },
  });
}

export async function link(api: ApiClient, ws: string, a: string, b: string,
                           keys?: [string, string]): Promise<void> {
  await api.postMutation(ws, {
    kind: "add_edge", edge_kind: "interaction",
    interaction_dep: {
      endpoint_a: a, endpoint_b: b,
      link: keys ? { local_key_attr: keys[0], remote_key_attr: keys[1] } : null,
    },
  });
}

export function viewCode(view: string, extra: Record<string, unknown> = {}): string {
  return JSON.stringify({ view, ...extra });
}

/** 20 unit-square neighborhoods in 5 borough columns, plus borough outlines
 * and synthetic complaints inside them (mirrors the backend fixtures). */
export function writeBoroughFixtureFiles(): void {
  const dir = dataDir();
  const hoodFeatures = [];
  const boroFeatures = [];
  for (let col = 0; col < 5; col++) {
    for (let row = 0; row < 4; row++) {
      const n = col * 4 + row;
      hoodFeatures.push({
        type: "Feature",
        properties: { name: `N${String(n).padStart(2, "0")}`, borough: `B${col}`,
                      elder_pop: 100 + n * 37 },
        geometry: { type: "Polygon",
                    coordinates: [[[col, row], [col + 1, row], [col + 1, row + 1],
                                   [col, row + 1], [col, row]]] },
      });
    }
    boroFeatures.push({
      type: "Feature",
      properties: { name: `B${col}` },
      geometry: { type: "Polygon",
                  coordinates: [[[col, 0], [col + 1, 0], [col + 1, 4], [col, 4], [col, 0]]] },
    });
  }
  writeFileSync(join(dir, "ui_hoods.geojson"),
                JSON.stringify({ type: "FeatureCollection", features: hoodFeatures }));
  writeFileSync(join(dir, "ui_boros.geojson"),
                JSON.stringify({ type: "FeatureCollection", features: boroFeatures }));
  let csv = "lon,lat,kind\n";
  let seed = 17;
  const rand = () => (seed = (seed * 1103515245 + 12345) % 2 ** 31) / 2 ** 31;
  for (let i = 0; i < 160; i++) {
    csv += `${(0.05 + rand() * 4.9).toFixed(5)},${(0.05 + rand() * 3.9).toFixed(5)},` +
           `${["noise", "heat", "trash"][i % 3]}\n`;
  }
  writeFileSync(join(dir, "ui_complaints.csv"), csv);
}

/** Borough bar chart linked to a neighborhood map through interaction nodes. */
export async function buildBoroughWorkspace(api: ApiClient): Promise<string> {
  writeBoroughFixtureFiles();
  const ws = (await api.createWorkspace("ui-boroughs")).workspace_id;
  await addNode(api, ws, nodeDoc("complaints", "loader", "load_table",
    opCode("load_table", { path: "ui_complaints.csv", hints: { lon: "lon", lat: "lat" } })));
  await addNode(api, ws, nodeDoc("hoods", "loader", "load_geo",
    opCode("load_geo", { path: "ui_hoods.geojson", expect: "mesh2d" })));
  await addNode(api, ws, nodeDoc("boros", "loader", "load_geo",
    opCode("load_geo", { path: "ui_boros.geojson", expect: "mesh2d" })));
  await addNode(api, ws, nodeDoc("join_b", "transform", "spatial_join",
    opCode("spatial_join", { how: "left" })));
  await wire(api, ws, "complaints", "join_b", [[0, 0]]);
  await wire(api, ws, "boros", "join_b", [[0, 1]]);
  await addNode(api, ws, nodeDoc("by_boro", "transform", "group_by",
    opCode("group_by", { keys: ["name"], aggs: [{ column: "lat", func: "count" }] })));
  await wire(api, ws, "join_b", "by_boro");
  await addNode(api, ws, nodeDoc("i_chart", "interaction", "interaction", ""));
  await wire(api, ws, "by_boro", "i_chart");
  await addNode(api, ws, nodeDoc("i_map", "interaction", "interaction", ""));
  await wire(api, ws, "hoods", "i_map", [[0, 0]]);
  await wire(api, ws, "i_chart", "i_map", [[0, 1]]);
  await link(api, ws, "i_chart", "i_map", ["name", "borough"]);
  await addNode(api, ws, nodeDoc("chart", "visualization", "chart_view",
    viewCode("chart", { spec: { mark: "bar", x: { attr: "name", type: "nominal" },
                                y: { attr: "count_lat", type: "quantitative" } } })));
  await wire(api, ws, "i_chart", "chart");
  await link(api, ws, "i_chart", "chart");
  await addNode(api, ws, nodeDoc("map", "visualization", "map_view",
    viewCode("map", { spec: { color_attr: "elder_pop" } })));
  await wire(api, ws, "i_map", "map");
  await link(api, ws, "i_map", "map");
  await api.run(ws);
  return ws;
}

export async function mountCanvas(api: ApiClient, ws: string):
    Promise<{ controller: CanvasController; container: HTMLElement }> {
  const container = document.createElement("div");
  document.body.appendChild(container);
  const doc = await api.getWorkspace(ws);
  const session = new ClientSession(api, ws);
  const controller = new CanvasController(api, session, container, doc);
  controller.render();
  await controller.renderFacetBodies();
  return { controller, container };
}

export async function fetchEnvelope(api: ApiClient, ws: string,
                                    node: string): Promise<EnvelopeDoc> {
  const resp = await fetch(`${api.base}/workspaces/${ws}/nodes/${node}/output?format=envelope`,
                           { headers: { Authorization: `Bearer ${api.token}` } });
  return (await resp.json()) as EnvelopeDoc;
}

export function mouse(target: Element, type: string): void {
  target.dispatchEvent(new MouseEvent(type, { bubbles: true, cancelable: true }));
}

export async function waitFor(check: () => boolean, ms = 8000): Promise<void> {
  const deadline = Date.now() + ms;
  for (;;) {
    if (check()) return;
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((r) => setTimeout(r, 40));
  }
}
