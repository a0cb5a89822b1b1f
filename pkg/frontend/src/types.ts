/** Wire types for the workspace service (see docs/formats.md in the repo root). */

export type NodeKind =
  | "loader" | "wrangle" | "transform" | "analysis" | "visualization" | "interaction";

export interface CommentDoc {
  id: string;
  user: string;
  created_at: string;
  text: string;
}

export interface NodeDoc {
  id: string;
  kind: NodeKind;
  template_id: string;
  canonical_code: string;
  widget_values: Record<string, unknown>;
  pinned: boolean;
  comments: CommentDoc[];
}

export interface CanvasBoxDoc {
  x: number;
  y: number;
  w: number;
  h: number;
  collapsed: boolean;
}

export interface DataDepDoc {
  source: string;
  target: string;
  layer_slots: [number, number][];
}

export interface InteractionDepDoc {
  endpoint_a: string;
  endpoint_b: string;
  link?: { local_key_attr: string; remote_key_attr: string } | null;
}

export interface SpecDoc {
  id: string;
  name: string;
  nodes: NodeDoc[];
  data_deps: DataDepDoc[];
  interaction_deps: InteractionDepDoc[];
  canvas: Record<string, CanvasBoxDoc>;
}

export interface SelectionStateDoc {
  selected: number[];
  revision: number;
}

export interface WorkspaceDoc {
  id: string;
  name: string;
  spec: SpecDoc;
  members: string[];
  latest_seq: number;
  version: string;
  stale: string[];
  selections: Record<string, SelectionStateDoc>;
  mode: string;
}

export type MutationDoc = { kind: string } & Record<string, unknown>;

export interface EventDoc {
  seq: number;
  kind: "mutation" | "comment" | "rollback" | "run_result" | "selection";
  payload: Record<string, unknown>;
  actor: string;
  ts: string;
}

export interface RunResultDoc {
  node: string;
  status: "ok" | "error" | "skipped_cached";
  outputs: string[];
  log: string;
  duration_ms: number;
  cache_hit: boolean;
  error: string | null;
}

export interface WidgetDoc {
  ordinal: number;
  widget: "checkbox" | "dropdown" | "slider" | "date";
  label: string;
  constraints: { options?: string[]; min?: number; max?: number; step?: number };
  current: unknown;
}

export interface VersionDoc {
  id: string;
  parent: string | null;
  template: string;
  code: string;
  created_by: string;
  ts: string;
  current: boolean;
}

export interface EnvelopeDoc {
  crs: string;
  kind: string;
  schema: { name: string; dtype: string }[];
  records: unknown[][];
  grid_meta?: { origin_lon: number; origin_lat: number; cell_size: number;
                nrows: number; ncols: number };
}

interface ViewBase {
  record_id_channel: boolean;
}

export interface TableView extends ViewBase {
  view: "table";
  columns: string[];
  rows: { record_id: number; values: unknown[] }[];
  total_records: number;
}

export interface ChartMark {
  record_id: number;
  x: unknown;
  y: unknown;
  color?: unknown;
  interaction?: boolean;
}

export interface ChartView extends ViewBase {
  view: "chart";
  spec: {
    mark: "bar" | "point" | "line";
    x: { attr: string; type: string };
    y: { attr: string; type: string };
    color: string | null;
    selection_enabled: boolean;
  };
  data: EnvelopeDoc;
  marks: ChartMark[];
}

export interface MapFeature {
  record_id: number;
  geometry?: { type: string; coordinates: unknown } | null;
  color_pos?: number;
  no_data?: boolean;
  interaction?: boolean;
}

export interface MapView extends ViewBase {
  view: "map";
  spec: {
    color_attr: string | null;
    color_scale: { min: number | null; max: number | null; ramp: string };
    uniform_style: boolean;
    has_3d: boolean;
  };
  extent: { min_lon: number; min_lat: number; max_lon: number; max_lat: number };
  data: EnvelopeDoc;
  features: MapFeature[];
}

export interface GalleryItem {
  record_id: number;
  image_ref: string;
  sort_value?: number | null;
  interaction?: boolean;
}

export interface GalleryView extends ViewBase {
  view: "gallery";
  sort_attr: string | null;
  data: EnvelopeDoc;
  items: GalleryItem[];
}

export type ViewDescriptor = TableView | ChartView | MapView | GalleryView;

export type SelectionMode = "replace" | "toggle" | "clear";

export type Facet = "programming" | "gui" | "provenance" | "output";
