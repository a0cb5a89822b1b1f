/** The four per-node facets: programming, GUI, provenance, output. */

import type { ApiClient } from "./api.js";
import { clear, el, flash } from "./dom.js";
import type { BrushHandler } from "./viewrender.js";
import { renderView } from "./viewrender.js";
import type { NodeDoc, VersionDoc, WidgetDoc } from "./types.js";

export interface FacetContext {
  api: ApiClient;
  workspaceId: string;
  /** Called after any facet-triggered change so the canvas can refresh. */
  onChanged: () => Promise<void>;
  /** Resolves the brush handler for a node's rendered view (if linked). */
  brushHandlerFor: (nodeId: string) => BrushHandler | undefined;
  assetBase: string;
}

export function renderProgrammingFacet(node: NodeDoc, container: HTMLElement,
                                       ctx: FacetContext): void {
  clear(container);
  const editor = el("textarea", { class: "uf-code", rows: "8", spellcheck: "false" });
  editor.value = node.canonical_code;
  const save = el("button", { class: "uf-save", type: "button" }, ["save code"]);
  save.addEventListener("click", async () => {
    try {
      await ctx.api.postMutation(ctx.workspaceId, {
        kind: "update_code", node_id: node.id, code: editor.value,
      });
      await ctx.onChanged();
    } catch (err) {
      flash(container, String(err));
    }
  });
  container.append(editor, save);
  if (node.kind === "interaction") {
    editor.disabled = true;
    save.disabled = true;
    container.appendChild(el("div", { class: "uf-note" },
                             ["interaction nodes carry no code"]));
  }
}

function widgetInput(w: WidgetDoc): { root: HTMLElement; read: () => unknown } {
  if (w.widget === "checkbox") {
    const input = el("input", { type: "checkbox" });
    input.checked = Boolean(w.current);
    return { root: wrap(w, input), read: () => input.checked };
  }
  if (w.widget === "dropdown") {
    const select = el("select", {});
    (w.constraints.options ?? []).forEach((opt, i) => {
      const o = el("option", { value: String(i) }, [opt]);
      if (i === w.current) o.selected = true;
      select.appendChild(o);
    });
    return { root: wrap(w, select), read: () => Number(select.value) };
  }
  if (w.widget === "slider") {
    const input = el("input", {
      type: "range",
      min: String(w.constraints.min ?? 0),
      max: String(w.constraints.max ?? 100),
      step: String(w.constraints.step ?? 1),
    });
    input.value = String(w.current);
    const readout = el("span", { class: "uf-readout" }, [String(w.current)]);
    input.addEventListener("input", () => (readout.textContent = input.value));
    const root = wrap(w, input);
    root.appendChild(readout);
    return { root, read: () => Number(input.value) };
  }
  const input = el("input", { type: "date" });
  input.value = String(w.current);
  return { root: wrap(w, input), read: () => input.value };
}

function wrap(w: WidgetDoc, input: HTMLElement): HTMLElement {
  const root = el("label", { class: `uf-widget uf-widget-${w.widget}`,
                             "data-ordinal": String(w.ordinal) });
  root.append(el("span", { class: "uf-widget-label" }, [w.label]), input);
  return root;
}

export async function renderGuiFacet(node: NodeDoc, container: HTMLElement,
                                     ctx: FacetContext): Promise<void> {
  clear(container);
  let widgets: WidgetDoc[];
  try {
    widgets = (await ctx.api.widgets(ctx.workspaceId, node.id)).widgets;
  } catch (err) {
    // malformed annotations leave the GUI facet disabled with an inline marker
    container.appendChild(el("div", { class: "uf-error-flash uf-malformed" },
                             [String(err)]));
    return;
  }
  if (widgets.length === 0) {
    container.appendChild(el("div", { class: "uf-note" }, ["no annotated parameters"]));
    return;
  }
  const inputs = widgets.map((w) => ({ w, ...widgetInput(w) }));
  for (const entry of inputs) container.appendChild(entry.root);
  const apply = el("button", { class: "uf-apply", type: "button" },
                   ["apply and re-run"]);
  apply.addEventListener("click", async () => {
    const values: Record<string, unknown> = {};
    for (const entry of inputs) values[String(entry.w.ordinal)] = entry.read();
    try {
      await ctx.api.postMutation(ctx.workspaceId, {
        kind: "set_widget_values", node_id: node.id, widget_values: values,
      });
      await ctx.api.run(ctx.workspaceId);
      await ctx.onChanged();
    } catch (err) {
      flash(container, String(err));
    }
  });
  container.appendChild(apply);
}

function sortTree(versions: VersionDoc[]): { v: VersionDoc; depth: number }[] {
  const byParent = new Map<string | null, VersionDoc[]>();
  for (const v of versions) {
    const list = byParent.get(v.parent) ?? [];
    list.push(v);
    byParent.set(v.parent, list);
  }
  for (const list of byParent.values()) list.sort((a, b) => a.ts.localeCompare(b.ts));
  const out: { v: VersionDoc; depth: number }[] = [];
  const visit = (parent: string | null, depth: number) => {
    for (const v of byParent.get(parent) ?? []) {
      out.push({ v, depth });
      visit(v.id, depth + 1);
    }
  };
  visit(null, 0);
  return out;
}

export async function renderProvenanceFacet(node: NodeDoc, container: HTMLElement,
                                            ctx: FacetContext): Promise<void> {
  clear(container);
  const tree = await ctx.api.provenanceTree(ctx.workspaceId, node.id);
  const list = el("ul", { class: "uf-version-tree" });
  for (const { v, depth } of sortTree(tree.versions)) {
    const item = el("li", {
      class: "uf-version" + (v.current ? " uf-version-current" : ""),
      "data-version-id": v.id,
      style: `margin-left:${depth * 14}px`,
    });
    item.append(el("code", {}, [v.id.slice(0, 10)]),
                el("span", { class: "uf-note" }, [` ${v.created_by} ${v.ts}`]));
    if (!v.current) {
      item.addEventListener("click", async () => {
        try {
          await ctx.api.rollback(ctx.workspaceId, node.id, v.id);
          await ctx.onChanged();
        } catch (err) {
          flash(container, String(err));
        }
      });
    }
    list.appendChild(item);
  }
  container.appendChild(list);
}

export async function renderOutputFacet(node: NodeDoc, container: HTMLElement,
                                        ctx: FacetContext): Promise<void> {
  clear(container);
  try {
    const view = await ctx.api.view(ctx.workspaceId, node.id);
    renderView(view, container, {
      onBrush: ctx.brushHandlerFor(node.id),
      assetBase: ctx.assetBase,
    });
  } catch (err) {
    container.appendChild(el("div", { class: "uf-note" }, [String(err)]));
  }
}
