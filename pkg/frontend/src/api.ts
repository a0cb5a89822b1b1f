/** REST client for the workspace service. The UI never mutates state except
 * through these calls; page reloads rebuild everything from the server. */

import type {
  EventDoc,
  MutationDoc,
  RunResultDoc,
  SelectionMode,
  SelectionStateDoc,
  VersionDoc,
  ViewDescriptor,
  WidgetDoc,
  WorkspaceDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(`${code}: ${detail}`);
  }
}

export class ApiClient {
  constructor(public base: string, public token: string | null = null) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const resp = await fetch(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const doc = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      throw new ApiError(resp.status, doc.error ?? "http_error", doc.detail ?? text);
    }
    return doc as T;
  }

  async register(displayName: string): Promise<{ user_id: string; api_key: string }> {
    return this.request("POST", "/users", { display_name: displayName });
  }

  async login(userId: string, apiKey: string): Promise<string> {
    const doc = await this.request<{ token: string }>("POST", "/sessions", {
      user_id: userId,
      api_key: apiKey,
    });
    this.token = doc.token;
    return doc.token;
  }

  createWorkspace(name: string): Promise<{ workspace_id: string; version: string }> {
    return this.request("POST", "/workspaces", { name });
  }

  getWorkspace(id: string, mode?: string): Promise<WorkspaceDoc> {
    const suffix = mode ? `?mode=${mode}` : "";
    return this.request("GET", `/workspaces/${id}${suffix}`);
  }

  addMember(ws: string, userId: string): Promise<{ members: string[] }> {
    return this.request("POST", `/workspaces/${ws}/members`, { user_id: userId });
  }

  postMutation(ws: string, mutation: MutationDoc):
      Promise<{ version: string; seq: number; txn_id: string }> {
    return this.request("POST", `/workspaces/${ws}/mutations`, { mutation });
  }

  run(ws: string, node?: string): Promise<{ results: RunResultDoc[] }> {
    if (node) return this.request("POST", `/workspaces/${ws}/nodes/${node}/run`);
    return this.request("POST", `/workspaces/${ws}/run`, {});
  }

  view(ws: string, node: string): Promise<ViewDescriptor> {
    return this.request("GET", `/workspaces/${ws}/nodes/${node}/output?format=view`);
  }

  widgets(ws: string, node: string): Promise<{ widgets: WidgetDoc[] }> {
    return this.request("GET", `/workspaces/${ws}/nodes/${node}/widgets`);
  }

  provenanceTree(ws: string, node: string): Promise<{ node: string; versions: VersionDoc[] }> {
    return this.request("GET", `/workspaces/${ws}/nodes/${node}/provenance/tree`);
  }

  rollback(ws: string, node: string, version: string):
      Promise<{ version: string; seq: number; code: string }> {
    return this.request("POST", `/workspaces/${ws}/nodes/${node}/provenance/rollback`,
                        { version });
  }

  comments(ws: string, node: string): Promise<{ comments: unknown[] }> {
    return this.request("GET", `/workspaces/${ws}/nodes/${node}/comments`);
  }

  postComment(ws: string, node: string, text: string): Promise<{ comment_id: string }> {
    return this.request("POST", `/workspaces/${ws}/nodes/${node}/comments`, { text });
  }

  postSelection(ws: string, interactionNode: string, ids: number[], mode: SelectionMode):
      Promise<{ states: Record<string, SelectionStateDoc> }> {
    return this.request("POST", `/workspaces/${ws}/interactions/${interactionNode}/selection`,
                        { ids, mode });
  }

  events(ws: string, after: number, timeoutMs: number): Promise<{ events: EventDoc[] }> {
    return this.request("GET", `/workspaces/${ws}/events?after=${after}&timeout=${timeoutMs}`);
  }
}

/** Per-tab session: last seen event seq and selection revisions, so stale
 * echoes from our own long-poll never regress the UI. */
export class ClientSession {
  lastSeq = 0;
  private revisions = new Map<string, number>();

  constructor(public api: ApiClient, public workspaceId: string) {}

  /** Returns true when the selection payload is news; records its revision. */
  acceptSelection(node: string, revision: number): boolean {
    const known = this.revisions.get(node) ?? -1;
    if (revision <= known) return false;
    this.revisions.set(node, revision);
    return true;
  }

  noteEvents(events: EventDoc[]): void {
    for (const e of events) {
      if (e.seq > this.lastSeq) this.lastSeq = e.seq;
    }
  }
}
