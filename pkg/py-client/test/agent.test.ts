import assert from "node:assert/strict";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import test from "node:test";
import { loadAgentDoc } from "../src/agent.js";
import { EXAMPLE_DOC } from "./util.js";

test("bundled example doc is a valid agent doc", () => {
  const doc = loadAgentDoc(EXAMPLE_DOC);
  assert.ok(doc.text.length > 0);
  assert.ok(doc.attempts.length >= 2);
  assert.ok(doc.schema.entity_schema.length > 0);
  assert.ok(doc.schema.relation_schema.length > 0);
  // attempts must grow toward the full extraction the doc text supports
  const count = (kg: (typeof doc.attempts)[number]) =>
    Object.values(kg.entities).reduce((n, v) => n + v.length, 0);
  assert.ok(count(doc.attempts[0]!) < count(doc.attempts[doc.attempts.length - 1]!));
});

test("doc loader rejects missing and malformed files", () => {
  assert.throws(() => loadAgentDoc("/nonexistent/doc.json"), /cannot read/);
  const dir = mkdtempSync(join(tmpdir(), "agentdoc-"));
  const bad = join(dir, "bad.json");
  writeFileSync(bad, "not json");
  assert.throws(() => loadAgentDoc(bad), /cannot read/);
  const noAttempts = join(dir, "empty.json");
  writeFileSync(
    noAttempts,
    JSON.stringify({ text: "x", schema: { entity_schema: [], relation_schema: [] }, attempts: [] }),
  );
  assert.throws(() => loadAgentDoc(noAttempts), /attempts/);
  const badAttempt = join(dir, "badattempt.json");
  writeFileSync(
    badAttempt,
    JSON.stringify({
      text: "x",
      schema: { entity_schema: ["a"], relation_schema: ["b"] },
      attempts: [{ entities: {} }],
    }),
  );
  assert.throws(() => loadAgentDoc(badAttempt), /attempts\[0\]/);
});
