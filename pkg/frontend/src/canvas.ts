/** Workspace-mode canvas: the node graph humans author dataflows on.
 *
 * Server events are the single source of truth for spec state: every edit
 * POSTs a mutation and the canvas re-renders when the event feed confirms
 * it (in-gesture drags move the DOM directly for responsiveness). Rejected
 * edits never touch local state; the server error is flashed on the node,
 * so a cycle-creating edge visually snaps back.
 */

import { ApiClient, ClientSession } from "./api.js";
import { clear, el, flash, svgEl } from "./dom.js";
import {
  renderGuiFacet,
  renderOutputFacet,
  renderProgrammingFacet,
  renderProvenanceFacet,
  type FacetContext,
} from "./facets.js";
import { applyMutationDoc } from "./replay.js";
import type {
  CanvasBoxDoc,
  EventDoc,
  Facet,
  MutationDoc,
  NodeDoc,
  SelectionStateDoc,
  SpecDoc,
  WorkspaceDoc,
} from "./types.js";
import type { BrushHandler } from "./viewrender.js";

interface NodeState {
  facet: Facet;
}

export class CanvasController {
  spec: SpecDoc;
  stale = new Set<string>();
  selections: Record<string, SelectionStateDoc> = {};
  nodeStates = new Map<string, NodeState>();
  private pendingEdgeSource: string | null = null;

  constructor(
    public api: ApiClient,
    public session: ClientSession,
    public container: HTMLElement,
    doc: WorkspaceDoc,
    public assetBase = "",
  ) {
    this.spec = doc.spec;
    this.stale = new Set(doc.stale);
    this.selections = doc.selections;
    this.session.lastSeq = doc.latest_seq;
    for (const [node, st] of Object.entries(doc.selections)) {
      this.session.acceptSelection(node, st.revision);
    }
  }

  state(nodeId: string): NodeState {
    let st = this.nodeStates.get(nodeId);
    if (!st) {
      st = { facet: "output" };
      this.nodeStates.set(nodeId, st);
    }
    return st;
  }

  /** The interaction node a view reports picks to, if any. */
  interactionPartner(nodeId: string): string | null {
    const node = this.spec.nodes.find((n) => n.id === nodeId);
    if (node?.kind === "interaction") return nodeId;
    const deps = [...this.spec.interaction_deps]
      .sort((a, b) => (a.endpoint_a + a.endpoint_b).localeCompare(b.endpoint_a + b.endpoint_b));
    for (const e of deps) {
      const other = e.endpoint_a === nodeId ? e.endpoint_b
        : e.endpoint_b === nodeId ? e.endpoint_a : null;
      if (other && this.spec.nodes.find((n) => n.id === other)?.kind === "interaction") {
        return other;
      }
    }
    return null;
  }

  brushHandlerFor(nodeId: string): BrushHandler | undefined {
    const partner = this.interactionPartner(nodeId);
    if (!partner) return undefined;
    return async (ids, mode) => {
      const resp = await this.api.postSelection(this.session.workspaceId, partner, ids, mode);
      this.applySelectionStates(resp.states);
      await this.refreshOpenOutputs();
    };
  }

  applySelectionStates(states: Record<string, SelectionStateDoc>): boolean {
    let news = false;
    for (const [node, st] of Object.entries(states)) {
      if (this.session.acceptSelection(node, st.revision)) {
        this.selections[node] = st;
        news = true;
      }
    }
    return news;
  }

  /** Apply one server event in feed order. */
  async applyEvent(event: EventDoc): Promise<void> {
    if (event.seq <= this.session.lastSeq) return; // stale echo
    this.session.noteEvents([event]);
    if (event.kind === "mutation" || event.kind === "comment" || event.kind === "rollback") {
      const mutation = event.payload["mutation"] as MutationDoc;
      this.spec = applyMutationDoc(this.spec, mutation);
      this.markStale(mutation);
      this.render();
    } else if (event.kind === "run_result") {
      const results = event.payload["results"] as { node: string; status: string }[];
      for (const r of results) {
        if (r.status !== "error") this.stale.delete(r.node);
      }
      this.render();
      await this.refreshOpenOutputs();
    } else if (event.kind === "selection") {
      const states = event.payload["states"] as Record<string, SelectionStateDoc>;
      if (this.applySelectionStates(states)) {
        await this.refreshOpenOutputs();
      }
    }
  }

  private markStale(mutation: MutationDoc): void {
    const kind = mutation.kind;
    const downstream = (start: string): Set<string> => {
      const out = new Set([start]);
      let grew = true;
      while (grew) {
        grew = false;
        for (const d of this.spec.data_deps) {
          if (out.has(d.source) && !out.has(d.target)) {
            out.add(d.target);
            grew = true;
          }
        }
      }
      return out;
    };
    if (kind === "update_code" || kind === "set_widget_values" || kind === "rollback") {
      for (const n of downstream(mutation.node_id as string)) this.stale.add(n);
    } else if (kind === "add_node") {
      this.stale.add((mutation.node as NodeDoc).id);
    } else if (kind === "add_edge" && mutation.edge_kind !== "interaction") {
      const dep = mutation.data_dep as { target: string };
      for (const n of downstream(dep.target)) this.stale.add(n);
    }
  }

  async sync(timeoutMs = 0): Promise<void> {
    const resp = await this.api.events(this.session.workspaceId, this.session.lastSeq,
                                       timeoutMs);
    for (const event of resp.events) {
      await this.applyEvent(event);
    }
  }

  async refreshOpenOutputs(): Promise<void> {
    for (const node of this.spec.nodes) {
      if (this.state(node.id).facet !== "output") continue;
      const body = this.container.querySelector(
        `[data-node-id="${node.id}"] .uf-node-body`) as HTMLElement | null;
      if (body) await renderOutputFacet(node, body, this.facetContext());
    }
  }

  facetContext(): FacetContext {
    return {
      api: this.api,
      workspaceId: this.session.workspaceId,
      onChanged: async () => {
        await this.sync();
        this.render();
        await this.renderFacetBodies();
      },
      brushHandlerFor: (nodeId) => this.brushHandlerFor(nodeId),
      assetBase: this.assetBase,
    };
  }

  // -- rendering -----------------------------------------------------------

  render(): void {
    clear(this.container);
    this.container.classList.add("uf-canvas");
    const edges = svgEl("svg", { class: "uf-edges", width: "4000", height: "3000" });
    for (const d of this.spec.data_deps) {
      const a = this.spec.canvas[d.source];
      const b = this.spec.canvas[d.target];
      if (!a || !b) continue;
      const line = svgEl("line", {
        x1: String(a.x + a.w), y1: String(a.y + a.h / 2),
        x2: String(b.x), y2: String(b.y + b.h / 2),
        class: "uf-edge", "data-edge": `${d.source}->${d.target}`,
      });
      edges.appendChild(line);
    }
    for (const e of this.spec.interaction_deps) {
      const a = this.spec.canvas[e.endpoint_a];
      const b = this.spec.canvas[e.endpoint_b];
      if (!a || !b) continue;
      edges.appendChild(svgEl("line", {
        x1: String(a.x + a.w / 2), y1: String(a.y + a.h),
        x2: String(b.x + b.w / 2), y2: String(b.y),
        class: "uf-edge uf-edge-interaction",
        "data-edge": `${e.endpoint_a}<->${e.endpoint_b}`,
      }));
    }
    this.container.appendChild(edges);
    for (const node of [...this.spec.nodes].sort((a, b) => a.id.localeCompare(b.id))) {
      this.container.appendChild(this.renderNode(node));
    }
  }

  async renderFacetBodies(): Promise<void> {
    for (const node of this.spec.nodes) {
      const body = this.container.querySelector(
        `[data-node-id="${node.id}"] .uf-node-body`) as HTMLElement | null;
      if (body) await this.renderFacet(node, body);
    }
  }

  private async renderFacet(node: NodeDoc, body: HTMLElement): Promise<void> {
    const facet = this.state(node.id).facet;
    const ctx = this.facetContext();
    if (facet === "programming") renderProgrammingFacet(node, body, ctx);
    else if (facet === "gui") await renderGuiFacet(node, body, ctx);
    else if (facet === "provenance") await renderProvenanceFacet(node, body, ctx);
    else await renderOutputFacet(node, body, ctx);
  }

  private renderNode(node: NodeDoc): HTMLElement {
    const box = this.spec.canvas[node.id] ?? { x: 0, y: 0, w: 240, h: 160, collapsed: false };
    const classes = ["uf-node", `uf-kind-${node.kind}`];
    if (box.collapsed) classes.push("uf-collapsed");
    if (this.stale.has(node.id)) classes.push("uf-stale");
    if (node.pinned) classes.push("uf-pinned");
    const root = el("div", {
      class: classes.join(" "),
      "data-node-id": node.id,
      style: `left:${box.x}px;top:${box.y}px;width:${box.w}px;` +
             (box.collapsed ? "" : `min-height:${box.h}px;`),
    });

    const header = el("div", { class: "uf-node-header" }, [
      el("span", { class: "uf-node-kind" }, [node.kind]),
      el("span", { class: "uf-node-id" }, [node.id]),
      el("span", { class: "uf-node-badges" }, [[
        this.stale.has(node.id) ? "stale" : "",
        node.comments.length ? `comments:${node.comments.length}` : "",
      ].filter(Boolean).join(" ")]),
    ]);
    this.attachDrag(header, node.id, box);
    root.appendChild(header);

    const left = el("div", { class: "uf-handle uf-handle-in" });
    const right = el("div", { class: "uf-handle uf-handle-out" });
    right.addEventListener("mousedown", (ev) => {
      ev.preventDefault();
      this.pendingEdgeSource = node.id;
    });
    left.addEventListener("mouseup", async () => {
      const source = this.pendingEdgeSource;
      this.pendingEdgeSource = null;
      if (!source || source === node.id) return;
      const occupied = new Set<number>();
      for (const d of this.spec.data_deps) {
        if (d.target === node.id) for (const [, inPort] of d.layer_slots) occupied.add(inPort);
      }
      let port = 0;
      while (occupied.has(port)) port += 1;
      try {
        await this.api.postMutation(this.session.workspaceId, {
          kind: "add_edge", edge_kind: "data",
          data_dep: { source, target: node.id, layer_slots: [[0, port]] },
        });
        await this.sync();
      } catch (err) {
        flash(root, String(err)); // edge snaps back: nothing was drawn
      }
    });
    root.append(left, right);

    if (!box.collapsed) {
      const body = el("div", { class: "uf-node-body" });
      root.appendChild(body);
      void this.renderFacet(node, body);
      root.appendChild(this.renderFooter(node, box));
    } else {
      const expand = el("button", { class: "uf-expand", type: "button" }, ["+"]);
      expand.addEventListener("click", () =>
        void this.moveNode(node.id, { ...box, collapsed: false }));
      root.appendChild(expand);
    }
    return root;
  }

  private renderFooter(node: NodeDoc, box: CanvasBoxDoc): HTMLElement {
    const footer = el("div", { class: "uf-node-footer" });
    const btn = (label: string, cls: string, fn: () => void | Promise<void>) => {
      const b = el("button", { class: `uf-btn ${cls}`, type: "button" }, [label]);
      b.addEventListener("click", () => void fn());
      footer.appendChild(b);
    };
    btn("run", "uf-run", async () => {
      try {
        await this.api.run(this.session.workspaceId, node.id);
        await this.sync();
      } catch (err) {
        flash(footer, String(err));
      }
    });
    const facets: Facet[] = ["gui", "programming", "provenance", "output"];
    for (const f of facets) {
      btn(f, `uf-facet-${f}`, async () => {
        this.state(node.id).facet = f;
        const body = this.container.querySelector(
          `[data-node-id="${node.id}"] .uf-node-body`) as HTMLElement | null;
        if (body) await this.renderFacet(node, body);
      });
    }
    btn(node.pinned ? "unpin" : "pin", "uf-pin", async () => {
      await this.api.postMutation(this.session.workspaceId, {
        kind: "set_pin", node_id: node.id, pinned: !node.pinned,
      });
      await this.sync();
    });
    btn("collapse", "uf-collapse", () => this.moveNode(node.id, { ...box, collapsed: true }));
    btn("delete", "uf-delete", async () => {
      try {
        await this.api.postMutation(this.session.workspaceId,
                                    { kind: "remove_node", node_id: node.id });
        await this.sync();
      } catch (err) {
        flash(footer, String(err));
      }
    });
    return footer;
  }

  private async moveNode(nodeId: string, box: CanvasBoxDoc): Promise<void> {
    await this.api.postMutation(this.session.workspaceId,
                                { kind: "move_node", node_id: nodeId, box });
    await this.sync();
  }

  private attachDrag(header: HTMLElement, nodeId: string, box: CanvasBoxDoc): void {
    let startX = 0;
    let startY = 0;
    let dragging = false;
    header.addEventListener("mousedown", (ev) => {
      dragging = true;
      startX = ev.clientX;
      startY = ev.clientY;
      ev.preventDefault();
    });
    header.addEventListener("mouseup", async (ev) => {
      if (!dragging) return;
      dragging = false;
      const dx = ev.clientX - startX;
      const dy = ev.clientY - startY;
      if (dx === 0 && dy === 0) return;
      // the element already followed the pointer; confirm with the server
      await this.moveNode(nodeId, { ...box, x: box.x + dx, y: box.y + dy });
    });
    header.addEventListener("mousemove", (ev) => {
      if (!dragging) return;
      const host = header.parentElement as HTMLElement;
      host.style.left = `${box.x + ev.clientX - startX}px`;
      host.style.top = `${box.y + ev.clientY - startY}px`;
    });
  }
}
