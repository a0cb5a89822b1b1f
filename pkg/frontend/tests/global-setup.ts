/** Boots the real workspace service for the e2e suite and tears it down. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import type { TestProject } from "vitest/node";

declare module "vitest" {
  export interface ProvidedContext {
    apiBase: string;
    dataDir: string;
  }
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitReady(base: string): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${base}/templates`);
      if (resp.status === 401) return; // up, auth required
    } catch {
      // not listening yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error(`service at ${base} never became ready`);
}

let proc: ChildProcess;

export default async function setup(project: TestProject): Promise<() => void> {
  const port = await freePort();
  const dataDir = mkdtempSync(join(tmpdir(), "uf-e2e-"));
  proc = spawn("python3", [
    "-m", "urbanflow.cli", "serve",
    "--port", String(port),
    "--data-dir", dataDir,
    "--db-path", join(dataDir, "state.db"),
  ], { stdio: ["ignore", "pipe", "pipe"] });
  proc.stderr?.on("data", () => undefined);
  const base = `http://127.0.0.1:${port}`;
  await waitReady(base);
  project.provide("apiBase", base);
  project.provide("dataDir", dataDir);
  return () => {
    proc.kill("SIGTERM");
  };
}
