/** App bootstrap: sign in, open or create a workspace, start the canvas and
 * the long-poll loop. The API base defaults to same-origin and can be set
 * with ?api=http://host:port; image refs resolve against ?assets=. */

import { ApiClient, ClientSession } from "./api.js";
import { CanvasController } from "./canvas.js";
import { clear, el } from "./dom.js";
import { renderVisualizationMode } from "./vizmode.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function startWorkspace(api: ApiClient, workspaceId: string,
                              root: HTMLElement): Promise<void> {
  const session = new ClientSession(api, workspaceId);
  const doc = await api.getWorkspace(workspaceId);
  clear(root);
  const toolbar = el("div", { class: "uf-toolbar" });
  const canvasHost = el("div", { class: "uf-canvas-host" });
  const vizHost = el("div", { class: "uf-viz-host", style: "display:none" });
  root.append(toolbar, canvasHost, vizHost);

  const controller = new CanvasController(api, session,
                                          canvasHost, doc, param("assets", "/"));
  controller.render();

  let vizMode = false;
  const toggle = el("button", { class: "uf-viz-toggle", type: "button" },
                    ["visualization mode"]);
  toggle.addEventListener("click", async () => {
    vizMode = !vizMode;
    toggle.textContent = vizMode ? "workspace mode" : "visualization mode";
    canvasHost.style.display = vizMode ? "none" : "";
    vizHost.style.display = vizMode ? "" : "none";
    if (vizMode) await renderVisualizationMode(api, session, controller, vizHost);
  });
  const runAll = el("button", { type: "button" }, ["run dataflow"]);
  runAll.addEventListener("click", async () => {
    await api.run(workspaceId);
    await controller.sync();
  });
  toolbar.append(el("span", { class: "uf-ws-name" }, [`${doc.name} (${workspaceId})`]),
                 runAll, toggle);

  const poll = async (): Promise<void> => {
    for (;;) {
      try {
        await controller.sync(25_000);
        if (vizMode) await renderVisualizationMode(api, session, controller, vizHost);
      } catch {
        await new Promise((r) => setTimeout(r, 2000));
      }
    }
  };
  void poll();
}

function loginForm(root: HTMLElement): void {
  const api = new ApiClient(param("api", ""));
  const form = el("div", { class: "uf-login" });
  const name = el("input", { placeholder: "display name" });
  const wsName = el("input", { placeholder: "new workspace name" });
  const wsId = el("input", { placeholder: "...or existing workspace id" });
  const go = el("button", { type: "button" }, ["start"]);
  go.addEventListener("click", async () => {
    const creds = await api.register(name.value || "anonymous");
    await api.login(creds.user_id, creds.api_key);
    const target = wsId.value
      ? wsId.value
      : (await api.createWorkspace(wsName.value || "untitled")).workspace_id;
    await startWorkspace(api, target, root);
  });
  form.append(name, wsName, wsId, go);
  clear(root);
  root.appendChild(form);
}

export function boot(): void {
  const root = document.getElementById("app");
  if (root) loginForm(root);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
