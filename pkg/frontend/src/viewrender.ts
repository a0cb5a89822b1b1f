/** Renderers for the server's view descriptors (table, chart, map, gallery).
 *
 * Every pickable element carries its record id in `data-record-id`. Brushing
 * is gesture-based but layout-free so it behaves identically in a headless
 * DOM: dragging across marks selects the swept set (replace), a plain click
 * toggles one record, and the clear button empties the selection.
 */

import { clear, el, svgEl } from "./dom.js";
import type {
  ChartView,
  GalleryView,
  MapView,
  SelectionMode,
  TableView,
  ViewDescriptor,
} from "./types.js";

export type BrushHandler = (ids: number[], mode: SelectionMode) => void;

const CHART_W = 420;
const CHART_H = 240;
const PAD = 28;

/** Collects records swept by a press-move-release gesture over marks. */
class Brush {
  private active = false;
  private swept = new Set<number>();
  private startId: number | null = null;
  private moved = false;

  constructor(private onBrush: BrushHandler) {}

  attach(mark: Element, recordId: number): void {
    mark.addEventListener("mousedown", (ev) => {
      ev.preventDefault();
      this.active = true;
      this.moved = false;
      this.startId = recordId;
      this.swept = new Set([recordId]);
    });
    mark.addEventListener("mouseenter", () => {
      if (this.active && recordId !== this.startId) {
        this.moved = true;
        this.swept.add(recordId);
      }
    });
    mark.addEventListener("mouseup", () => {
      if (!this.active) return;
      this.active = false;
      if (this.moved) {
        this.onBrush([...this.swept].sort((a, b) => a - b), "replace");
      } else {
        this.onBrush([recordId], "toggle");
      }
    });
  }
}

function clearButton(onBrush: BrushHandler): HTMLElement {
  const btn = el("button", { class: "uf-clear", type: "button" }, ["clear selection"]);
  btn.addEventListener("click", () => onBrush([], "clear"));
  return btn;
}

export function renderTable(view: TableView): HTMLElement {
  const head = el("tr", {}, view.columns.map((c) => el("th", {}, [c])));
  const body = view.rows.map((row) =>
    el("tr", { "data-record-id": String(row.record_id) },
       row.values.map((v) => el("td", {}, [v === null ? "" : String(v)]))));
  return el("div", { class: "uf-view uf-table" }, [
    el("table", {}, [el("thead", {}, [head]), el("tbody", {}, body)]),
    el("div", { class: "uf-note" }, [`${view.rows.length} of ${view.total_records} records`]),
  ]);
}

function numeric(values: unknown[]): number[] {
  return values.map((v) => (typeof v === "number" ? v : 0));
}

export function renderChart(view: ChartView, onBrush?: BrushHandler): HTMLElement {
  const root = el("div", { class: "uf-view uf-chart" });
  const svg = svgEl("svg", {
    viewBox: `0 0 ${CHART_W} ${CHART_H}`,
    width: String(CHART_W),
    height: String(CHART_H),
    "data-mark": view.spec.mark,
  });
  const marks = view.marks;
  const ys = numeric(marks.map((m) => m.y));
  const yMax = Math.max(...ys, 0);
  const yMin = Math.min(...ys, 0);
  const ySpan = yMax - yMin || 1;
  const innerW = CHART_W - 2 * PAD;
  const innerH = CHART_H - 2 * PAD;
  const yPix = (v: number) => PAD + innerH - ((v - yMin) / ySpan) * innerH;

  const xs = marks.map((m) => m.x);
  const xNumeric = view.spec.x.type === "quantitative" && xs.every((v) => typeof v === "number");
  const xPix = (i: number): number => {
    if (xNumeric) {
      const vals = numeric(xs);
      const lo = Math.min(...vals);
      const hi = Math.max(...vals);
      const span = hi - lo || 1;
      return PAD + (((vals[i] ?? 0) - lo) / span) * innerW;
    }
    const band = innerW / Math.max(marks.length, 1);
    return PAD + band * i + band / 2;
  };

  const brush = onBrush && view.record_id_channel ? new Brush(onBrush) : null;
  const band = innerW / Math.max(marks.length, 1);
  marks.forEach((m, i) => {
    let shape: SVGElement;
    const y = yPix(typeof m.y === "number" ? m.y : 0);
    if (view.spec.mark === "bar") {
      shape = svgEl("rect", {
        x: String(xPix(i) - band * 0.4),
        y: String(Math.min(y, yPix(0))),
        width: String(band * 0.8),
        height: String(Math.abs(yPix(0) - y) || 1),
      });
    } else {
      shape = svgEl("circle", { cx: String(xPix(i)), cy: String(y), r: "5" });
    }
    shape.setAttribute("data-record-id", String(m.record_id));
    shape.setAttribute("class", "uf-mark" + (m.interaction ? " uf-selected" : ""));
    shape.setAttribute("data-x", `${m.x}`);
    shape.setAttribute("data-y", `${m.y}`);
    if (brush) brush.attach(shape, m.record_id);
    svg.appendChild(shape);
  });
  if (view.spec.mark === "line" && marks.length > 1) {
    const points = marks
      .map((m, i) => `${xPix(i)},${yPix(typeof m.y === "number" ? m.y : 0)}`)
      .join(" ");
    const line = svgEl("polyline", { points, class: "uf-line", fill: "none" });
    svg.insertBefore(line, svg.firstChild);
  }
  root.appendChild(svg);
  root.appendChild(el("div", { class: "uf-note" },
                      [`${view.spec.x.attr} vs ${view.spec.y.attr}`]));
  if (onBrush && view.record_id_channel) root.appendChild(clearButton(onBrush));
  return root;
}

type Position = [number, number];

function walkPositions(coords: unknown, out: Position[]): void {
  if (!Array.isArray(coords)) return;
  if (coords.length >= 2 && typeof coords[0] === "number" && typeof coords[1] === "number") {
    out.push([coords[0], coords[1]]);
    return;
  }
  for (const c of coords) walkPositions(c, out);
}

function outerRing(geometry: { type: string; coordinates: unknown }): Position[] {
  const c = geometry.coordinates as unknown[];
  if (geometry.type === "Polygon") {
    const ring: Position[] = [];
    walkPositions((c as unknown[])[0], ring);
    return ring;
  }
  if (geometry.type === "MultiPolygon") {
    const ring: Position[] = [];
    walkPositions((c[0] as unknown[])[0] as unknown[], ring);
    return ring;
  }
  const all: Position[] = [];
  walkPositions(c, all);
  return all;
}

const MAP_W = 420;
const MAP_H = 300;

export function rampFill(pos: number): string {
  // dark-to-warm grayscale stand-in for the named ramp
  const v = Math.round(235 - 180 * Math.min(Math.max(pos, 0), 1));
  return `rgb(${v},${v},${v})`;
}

export function renderMap(view: MapView, onBrush?: BrushHandler): HTMLElement {
  const root = el("div", { class: "uf-view uf-map" });
  const svg = svgEl("svg", {
    viewBox: `0 0 ${MAP_W} ${MAP_H}`,
    width: String(MAP_W),
    height: String(MAP_H),
  });
  const e = view.extent;
  const spanLon = e.max_lon - e.min_lon || 1;
  const spanLat = e.max_lat - e.min_lat || 1;
  const px = (lon: number) => ((lon - e.min_lon) / spanLon) * (MAP_W - 16) + 8;
  const py = (lat: number) => MAP_H - (((lat - e.min_lat) / spanLat) * (MAP_H - 16) + 8);
  const brush = onBrush && view.record_id_channel ? new Brush(onBrush) : null;

  for (const f of view.features) {
    if (!f.geometry) continue;
    let shape: SVGElement;
    if (f.geometry.type === "Point") {
      const [lon, lat] = f.geometry.coordinates as [number, number];
      shape = svgEl("circle", { cx: String(px(lon)), cy: String(py(lat)), r: "4" });
    } else if (f.geometry.type === "Polygon" || f.geometry.type === "MultiPolygon") {
      const ring = outerRing(f.geometry);
      const points = ring.map(([lon, lat]) => `${px(lon)},${py(lat)}`).join(" ");
      shape = svgEl("polygon", { points });
    } else {
      const ring = outerRing(f.geometry);
      const points = ring.map(([lon, lat]) => `${px(lon)},${py(lat)}`).join(" ");
      shape = svgEl("polyline", { points, fill: "none" });
    }
    const classes = ["uf-feature"];
    if (f.interaction) classes.push("uf-selected");
    if (f.no_data) classes.push("uf-no-data");
    shape.setAttribute("class", classes.join(" "));
    shape.setAttribute("data-record-id", String(f.record_id));
    if (f.color_pos !== undefined) shape.setAttribute("fill", rampFill(f.color_pos));
    if (brush) brush.attach(shape, f.record_id);
    svg.appendChild(shape);
  }
  root.appendChild(svg);
  if (view.spec.has_3d) {
    root.appendChild(el("div", { class: "uf-note" }, ["3D layer shown as footprints"]));
  }
  if (onBrush && view.record_id_channel) root.appendChild(clearButton(onBrush));
  return root;
}

export function renderGallery(view: GalleryView, assetBase: string,
                              onBrush?: BrushHandler): HTMLElement {
  const root = el("div", { class: "uf-view uf-gallery" });
  const brush = onBrush && view.record_id_channel ? new Brush(onBrush) : null;
  for (const item of view.items) {
    const tile = el("figure", {
      class: "uf-tile" + (item.interaction ? " uf-selected" : ""),
      "data-record-id": String(item.record_id),
    });
    const img = el("img", { src: assetBase + item.image_ref, alt: item.image_ref });
    tile.appendChild(img);
    const caption = item.sort_value === undefined || item.sort_value === null
      ? item.image_ref
      : `${item.image_ref} (${item.sort_value})`;
    tile.appendChild(el("figcaption", {}, [caption]));
    if (brush) brush.attach(tile, item.record_id);
    root.appendChild(tile);
  }
  return root;
}

export function renderView(view: ViewDescriptor, container: HTMLElement,
                           opts: { onBrush?: BrushHandler; assetBase?: string } = {}): void {
  clear(container);
  switch (view.view) {
    case "table":
      container.appendChild(renderTable(view));
      break;
    case "chart":
      container.appendChild(renderChart(view, opts.onBrush));
      break;
    case "map":
      container.appendChild(renderMap(view, opts.onBrush));
      break;
    case "gallery":
      container.appendChild(renderGallery(view, opts.assetBase ?? "", opts.onBrush));
      break;
  }
}
