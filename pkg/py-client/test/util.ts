import { spawn, type ChildProcess } from "node:child_process";
import { readdirSync, readFileSync } from "node:fs";
import net from "node:net";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { health, type ClientConfig } from "../src/client.js";

const HERE = dirname(fileURLToPath(import.meta.url));
// compiled tests live in dist/test; the package root is two levels up
export const PKG_ROOT = resolve(HERE, "..", "..");
export const REPO_ROOT = resolve(PKG_ROOT, "..");
export const SCHEMA_DIR = join(REPO_ROOT, "src", "kgrenv", "schemas");
export const EXAMPLE_DOC = join(PKG_ROOT, "example", "doc.json");

export function freePort(): Promise<number> {
  return new Promise((res, rej) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        srv.close();
        rej(new Error("no port assigned"));
        return;
      }
      srv.close(() => res(addr.port));
    });
    srv.on("error", rej);
  });
}

export interface LiveService {
  port: number;
  baseUrl: string;
  proc: ChildProcess;
  stop(): Promise<void>;
}

export async function startService(): Promise<LiveService> {
  const port = await freePort();
  const proc = spawn(
    "python3",
    ["-m", "kgrenv.cli", "serve", "--host", "127.0.0.1", "--port", String(port)],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });
  const baseUrl = `http://127.0.0.1:${port}`;
  const cfg: ClientConfig = { baseUrl, timeoutMs: 1_000, retries: 0 };
  const deadline = Date.now() + 30_000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited with ${proc.exitCode}: ${stderr}`);
    }
    try {
      const rep = await health(cfg);
      if (rep.status === "ok") break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error(`service did not become healthy: ${stderr}`);
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  const stop = () =>
    new Promise<void>((res) => {
      if (proc.exitCode !== null) {
        res();
        return;
      }
      proc.once("exit", () => res());
      proc.kill("SIGTERM");
      setTimeout(() => proc.kill("SIGKILL"), 3_000).unref();
    });
  return { port, baseUrl, proc, stop };
}

export function responseSchemaFiles(): string[] {
  return readdirSync(SCHEMA_DIR)
    .filter((f) => f.endsWith(".response.json"))
    .sort();
}

export function loadSchema(file: string): Record<string, unknown> {
  return JSON.parse(readFileSync(join(SCHEMA_DIR, file), "utf8"));
}

type Json = Record<string, unknown>;

// Structural parity walk: every required schema field must exist in the value,
// and under additionalProperties:false every value field must exist in the
// schema. Type tags are checked so a renamed or retyped field fails loudly.
export function assertMatchesSchema(schema: Json, value: unknown, path = "$", defs?: Json): void {
  const root = defs ?? ((schema.definitions as Json | undefined) ?? {});
  if (typeof schema.$ref === "string") {
    const m = /^#\/definitions\/([a-z_]+)$/.exec(schema.$ref);
    if (!m || !(m[1]! in root)) throw new Error(`${path}: unresolvable $ref ${schema.$ref}`);
    assertMatchesSchema(root[m[1]!] as Json, value, path, root);
    return;
  }
  if (Array.isArray(schema.oneOf)) {
    const errors: string[] = [];
    for (const branch of schema.oneOf) {
      try {
        assertMatchesSchema(branch as Json, value, path, root);
        return;
      } catch (err) {
        errors.push(err instanceof Error ? err.message : String(err));
      }
    }
    throw new Error(`${path}: no oneOf branch matched (${errors.join("; ")})`);
  }
  if (Array.isArray(schema.enum)) {
    if (!schema.enum.some((v) => v === value)) {
      throw new Error(`${path}: ${JSON.stringify(value)} not in enum`);
    }
    return;
  }
  switch (schema.type) {
    case "null":
      if (value !== null) throw new Error(`${path}: expected null`);
      return;
    case "string":
      if (typeof value !== "string") throw new Error(`${path}: expected string`);
      return;
    case "boolean":
      if (typeof value !== "boolean") throw new Error(`${path}: expected boolean`);
      return;
    case "number":
      if (typeof value !== "number") throw new Error(`${path}: expected number`);
      return;
    case "integer":
      if (typeof value !== "number" || !Number.isInteger(value)) {
        throw new Error(`${path}: expected integer`);
      }
      return;
    case "array": {
      if (!Array.isArray(value)) throw new Error(`${path}: expected array`);
      if (typeof schema.items === "object" && schema.items !== null) {
        value.forEach((item, i) =>
          assertMatchesSchema(schema.items as Json, item, `${path}[${i}]`, root),
        );
      }
      return;
    }
    case "object": {
      if (typeof value !== "object" || value === null || Array.isArray(value)) {
        throw new Error(`${path}: expected object`);
      }
      const obj = value as Json;
      const props = (schema.properties as Json | undefined) ?? undefined;
      if (props === undefined) {
        if (typeof schema.additionalProperties === "object") {
          for (const [k, v] of Object.entries(obj)) {
            assertMatchesSchema(schema.additionalProperties as Json, v, `${path}.${k}`, root);
          }
        }
        return;
      }
      for (const req of (schema.required as string[] | undefined) ?? []) {
        if (!(req in obj)) throw new Error(`${path}: missing required field ${req}`);
      }
      for (const [k, v] of Object.entries(obj)) {
        if (k in props) {
          assertMatchesSchema(props[k] as Json, v, `${path}.${k}`, root);
        } else if (schema.additionalProperties === false) {
          throw new Error(`${path}: unexpected field ${k}`);
        }
      }
      return;
    }
    default:
      throw new Error(`${path}: unsupported schema ${JSON.stringify(schema)}`);
  }
}
