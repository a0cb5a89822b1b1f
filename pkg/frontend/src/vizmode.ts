/** Visualization mode: only pinned nodes, shown as freely arrangeable panels
 * of their output (or GUI) facets, with all edges hidden. Panel layout is
 * client-side state only; the dataflow itself is untouched. */

import type { ApiClient, ClientSession } from "./api.js";
import type { CanvasController } from "./canvas.js";
import { clear, el } from "./dom.js";
import { renderGuiFacet, renderOutputFacet } from "./facets.js";

export async function renderVisualizationMode(
  api: ApiClient,
  session: ClientSession,
  controller: CanvasController,
  container: HTMLElement,
): Promise<void> {
  clear(container);
  container.classList.add("uf-vizmode");
  const doc = await api.getWorkspace(session.workspaceId, "visualization");
  if (doc.spec.nodes.length === 0) {
    container.appendChild(el("div", { class: "uf-empty" },
                             ["Nothing pinned yet. Pin nodes in workspace mode to " +
                              "compose an interface."]));
    return;
  }
  let offset = 0;
  for (const node of doc.spec.nodes) {
    const panel = el("div", {
      class: "uf-viz-panel",
      "data-node-id": node.id,
      style: `left:${16 + offset}px;top:16px;`,
    });
    offset += 40;
    panel.appendChild(el("div", { class: "uf-viz-title" }, [`${node.kind} ${node.id}`]));
    const body = el("div", { class: "uf-viz-body" });
    panel.appendChild(body);
    const ctx = controller.facetContext();
    const hasCode = node.canonical_code.includes("$[");
    if (node.kind === "visualization" || node.kind === "interaction") {
      await renderOutputFacet(node, body, ctx);
    } else if (hasCode) {
      await renderGuiFacet(node, body, ctx);
    } else {
      await renderOutputFacet(node, body, ctx);
    }
    makeArrangeable(panel);
    container.appendChild(panel);
  }
}

function makeArrangeable(panel: HTMLElement): void {
  let startX = 0;
  let startY = 0;
  let baseX = 0;
  let baseY = 0;
  let dragging = false;
  const title = panel.querySelector(".uf-viz-title") as HTMLElement;
  title.addEventListener("mousedown", (ev) => {
    dragging = true;
    startX = ev.clientX;
    startY = ev.clientY;
    baseX = parseInt(panel.style.left || "0", 10);
    baseY = parseInt(panel.style.top || "0", 10);
    ev.preventDefault();
  });
  title.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    panel.style.left = `${baseX + ev.clientX - startX}px`;
    panel.style.top = `${baseY + ev.clientY - startY}px`;
  });
  title.addEventListener("mouseup", () => (dragging = false));
}
