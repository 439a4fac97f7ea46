import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { pathToFileURL } from "node:url";
import test from "node:test";
import { PKG_ROOT, SCHEMA_DIR, loadSchema, responseSchemaFiles } from "./util.js";
import * as types from "../src/types.js";

test("committed types.ts matches a fresh run of the generator", async () => {
  const genPath = join(PKG_ROOT, "scripts", "generate_types.mjs");
  const mod = (await import(pathToFileURL(genPath).href)) as {
    generateTypes: (dir?: string) => string;
  };
  const fresh = mod.generateTypes(SCHEMA_DIR);
  const committed = readFileSync(join(PKG_ROOT, "src", "types.ts"), "utf8");
  assert.equal(committed, fresh, "src/types.ts is stale; run npm run generate");
});

test("tool name list covers exactly the schema files on disk", () => {
  const fromDisk = responseSchemaFiles().map((f) => f.replace(".response.json", ""));
  assert.deepEqual([...types.TOOL_NAMES], fromDisk);
});

test("every top-level response field appears in the generated interface source", () => {
  const source = readFileSync(join(PKG_ROOT, "src", "types.ts"), "utf8");
  for (const file of responseSchemaFiles()) {
    const schema = loadSchema(file);
    for (const field of Object.keys((schema.properties as object) ?? {})) {
      assert.ok(
        new RegExp(`^\\s+${field}\\??: `, "m").test(source),
        `${file}: field ${field} missing from generated types`,
      );
    }
  }
});
