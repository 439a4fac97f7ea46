import assert from "node:assert/strict";
import http from "node:http";
import net from "node:net";
import type { AddressInfo } from "node:net";
import test from "node:test";
import {
  CallerFaultError,
  ServiceError,
  TransportError,
  callTool,
  resolveConfig,
} from "../src/client.js";

function listen(handler: http.RequestListener): Promise<{ base: string; close: () => void }> {
  return new Promise((res) => {
    const srv = http.createServer(handler);
    srv.listen(0, "127.0.0.1", () => {
      const { port } = srv.address() as AddressInfo;
      res({ base: `http://127.0.0.1:${port}`, close: () => srv.close() });
    });
  });
}

test("resolveConfig rejects bad inputs", () => {
  assert.throws(() => resolveConfig({ baseUrl: "not a url" }), /not a valid URL/);
  assert.throws(() => resolveConfig({ baseUrl: "ftp://x" }), /http or https/);
  assert.throws(() => resolveConfig({ baseUrl: "http://x", retries: -1 }), /retries/);
  assert.throws(() => resolveConfig({ baseUrl: "http://x", retries: 1.5 }), /retries/);
  assert.throws(() => resolveConfig({ baseUrl: "http://x", timeoutMs: -5 }), /timeoutMs/);
});

test("resolveConfig applies defaults and strips trailing slash", () => {
  const r = resolveConfig({ baseUrl: "http://127.0.0.1:9999/" });
  assert.equal(r.baseUrl, "http://127.0.0.1:9999");
  assert.equal(r.retries, 2);
  assert.equal(r.timeoutMs, 10_000);
});

test("4xx error envelope maps to CallerFaultError with the service code", async () => {
  const { base, close } = await listen((req, res) => {
    res.writeHead(404, { "Content-Type": "application/json" });
    res.end(JSON.stringify({ error: { code: "unknown_tool", message: "no tool named x" } }));
  });
  try {
    await assert.rejects(
      callTool("query_extraction_density", {} as never, { baseUrl: base, retries: 0 }),
      (err: unknown) => {
        assert.ok(err instanceof CallerFaultError);
        assert.equal(err.code, "unknown_tool");
        assert.equal(err.status, 404);
        assert.match(err.message, /no tool named x/);
        return true;
      },
    );
  } finally {
    close();
  }
});

test("5xx maps to ServiceError, not CallerFaultError", async () => {
  const { base, close } = await listen((req, res) => {
    res.writeHead(500, { "Content-Type": "application/json" });
    res.end(JSON.stringify({ error: { code: "internal", message: "boom" } }));
  });
  try {
    await assert.rejects(
      callTool("query_extraction_density", {} as never, { baseUrl: base, retries: 0 }),
      (err: unknown) => {
        assert.ok(err instanceof ServiceError);
        assert.ok(!(err instanceof CallerFaultError));
        assert.equal(err.code, "internal");
        return true;
      },
    );
  } finally {
    close();
  }
});

test("non-JSON success body becomes a TransportError", async () => {
  const { base, close } = await listen((req, res) => {
    res.writeHead(200, { "Content-Type": "text/plain" });
    res.end("hello");
  });
  try {
    await assert.rejects(
      callTool("query_extraction_density", {} as never, { baseUrl: base, retries: 0 }),
      TransportError,
    );
  } finally {
    close();
  }
});

test("connection failures are retried, then surface as TransportError", async () => {
  let connections = 0;
  const srv = net_listen_and_destroy(() => connections++);
  const base = await srv.base;
  try {
    await assert.rejects(
      callTool("query_extraction_density", {} as never, {
        baseUrl: base,
        retries: 2,
        timeoutMs: 1_000,
      }),
      (err: unknown) => {
        assert.ok(err instanceof TransportError);
        assert.equal(err.attempts, 3);
        return true;
      },
    );
    assert.equal(connections, 3);
  } finally {
    srv.close();
  }
});

test("timeout 0 with retries 0 fails with a TransportError", async () => {
  // server accepts but never replies; a zero budget aborts immediately
  const { base, close } = await listen(() => {});
  try {
    await assert.rejects(
      callTool("query_extraction_density", {} as never, {
        baseUrl: base,
        timeoutMs: 0,
        retries: 0,
      }),
      (err: unknown) => {
        assert.ok(err instanceof TransportError);
        assert.equal(err.attempts, 1);
        return true;
      },
    );
  } finally {
    close();
  }
});

function net_listen_and_destroy(onConnection: () => void): {
  base: Promise<string>;
  close: () => void;
} {
  const srv = net.createServer((socket) => {
    onConnection();
    socket.destroy();
  });
  const base = new Promise<string>((res) => {
    srv.listen(0, "127.0.0.1", () => {
      const { port } = srv.address() as AddressInfo;
      res(`http://127.0.0.1:${port}`);
    });
  });
  return { base, close: () => srv.close() };
}
