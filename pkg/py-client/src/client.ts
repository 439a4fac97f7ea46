import type { ToolName, ToolRequestMap, ToolResponseMap } from "./types.js";
import { TOOL_NAMES } from "./types.js";

export interface ClientConfig {
  baseUrl: string;
  // per-attempt budget in milliseconds
  timeoutMs?: number;
  // extra attempts after the first; transport failures only
  retries?: number;
}

const DEFAULT_TIMEOUT_MS = 10_000;
const DEFAULT_RETRIES = 2;
const RETRY_DELAY_MS = 50;

export class TransportError extends Error {
  constructor(message: string, readonly attempts: number, options?: { cause?: unknown }) {
    super(message, options);
    this.name = "TransportError";
  }
}

// service replied with an error envelope; code is the service's error code
export class ServiceError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}

// 4xx: the request itself was at fault (unknown tool, schema violation, bad JSON)
export class CallerFaultError extends ServiceError {
  constructor(status: number, code: string, message: string) {
    super(status, code, message);
    this.name = "CallerFaultError";
  }
}

interface ResolvedConfig {
  baseUrl: string;
  timeoutMs: number;
  retries: number;
}

export function resolveConfig(cfg: ClientConfig): ResolvedConfig {
  let base: URL;
  try {
    base = new URL(cfg.baseUrl);
  } catch {
    throw new Error(`baseUrl is not a valid URL: ${cfg.baseUrl}`);
  }
  if (base.protocol !== "http:" && base.protocol !== "https:") {
    throw new Error(`baseUrl must be http or https: ${cfg.baseUrl}`);
  }
  const timeoutMs = cfg.timeoutMs ?? DEFAULT_TIMEOUT_MS;
  if (!Number.isFinite(timeoutMs) || timeoutMs < 0) {
    throw new Error(`timeoutMs must be >= 0: ${timeoutMs}`);
  }
  const retries = cfg.retries ?? DEFAULT_RETRIES;
  if (!Number.isInteger(retries) || retries < 0) {
    throw new Error(`retries must be an integer >= 0: ${retries}`);
  }
  return { baseUrl: base.toString().replace(/\/$/, ""), timeoutMs, retries };
}

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

interface ErrorBody {
  error?: { code?: unknown; message?: unknown };
}

async function request(
  resolved: ResolvedConfig,
  method: string,
  path: string,
  body?: unknown,
): Promise<unknown> {
  const url = resolved.baseUrl + path;
  let lastCause: unknown;
  const attempts = resolved.retries + 1;
  for (let attempt = 0; attempt < attempts; attempt++) {
    if (attempt > 0) await sleep(RETRY_DELAY_MS * attempt);
    let res: Response;
    try {
      res = await fetch(url, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
        signal: AbortSignal.timeout(resolved.timeoutMs),
      });
    } catch (err) {
      lastCause = err;
      continue;
    }
    const text = await res.text();
    let parsed: unknown;
    try {
      parsed = JSON.parse(text);
    } catch (err) {
      throw new TransportError(
        `service returned non-JSON body (status ${res.status})`,
        attempt + 1,
        { cause: err },
      );
    }
    if (!res.ok) {
      const envelope = (parsed as ErrorBody).error;
      const code = typeof envelope?.code === "string" ? envelope.code : "unknown";
      const message = typeof envelope?.message === "string" ? envelope.message : text;
      if (res.status >= 400 && res.status < 500) {
        throw new CallerFaultError(res.status, code, message);
      }
      throw new ServiceError(res.status, code, message);
    }
    return parsed;
  }
  const detail = lastCause instanceof Error ? lastCause.message : String(lastCause);
  throw new TransportError(
    `no response from ${url} after ${attempts} attempt(s): ${detail}`,
    attempts,
    { cause: lastCause },
  );
}

export async function callTool<K extends ToolName>(
  tool: K,
  payload: ToolRequestMap[K],
  cfg: ClientConfig,
): Promise<ToolResponseMap[K]> {
  const resolved = resolveConfig(cfg);
  const body = await request(resolved, "POST", `/tools/${tool}`, payload);
  return body as ToolResponseMap[K];
}

export interface HealthReport {
  status: string;
  entities: number;
  relations: number;
  staged: number;
}

export async function health(cfg: ClientConfig): Promise<HealthReport> {
  const resolved = resolveConfig(cfg);
  return (await request(resolved, "GET", "/healthz")) as HealthReport;
}

export function isKnownTool(name: string): name is ToolName {
  return (TOOL_NAMES as readonly string[]).includes(name);
}
