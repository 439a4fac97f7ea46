import { parseArgs } from "node:util";
import { dirname, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { CallerFaultError, TransportError, type ClientConfig } from "./client.js";
import { runScriptedAgent } from "./agent.js";

const DEFAULT_DOC = resolve(
  dirname(fileURLToPath(import.meta.url)),
  "..",
  "..",
  "example",
  "doc.json",
);

function usage(): void {
  console.error(
    "usage: agent --base-url URL [--doc PATH] [--timeout MS] [--retries N]",
  );
}

export async function main(argv: string[]): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        "base-url": { type: "string" },
        doc: { type: "string", default: DEFAULT_DOC },
        timeout: { type: "string" },
        retries: { type: "string" },
      },
    }));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    usage();
    return 2;
  }
  if (!values["base-url"]) {
    usage();
    return 2;
  }
  const cfg: ClientConfig = { baseUrl: values["base-url"] };
  if (values.timeout !== undefined) cfg.timeoutMs = Number(values.timeout);
  if (values.retries !== undefined) cfg.retries = Number(values.retries);

  try {
    const summary = await runScriptedAgent(values.doc!, cfg);
    console.log(
      `done: attempts=${summary.attemptsUsed} storage_code=${summary.storageCode} ` +
        `overall_success=${summary.overallSuccess}`,
    );
    return summary.storageCode === 0 && summary.overallSuccess ? 0 : 1;
  } catch (err) {
    if (err instanceof TransportError) {
      console.error(`transport error: ${err.message}`);
      return 3;
    }
    if (err instanceof CallerFaultError) {
      console.error(`rejected (${err.code}): ${err.message}`);
      return 1;
    }
    console.error(err instanceof Error ? err.message : String(err));
    return 1;
  }
}

if (
  process.argv[1] &&
  resolve(process.argv[1]) === fileURLToPath(import.meta.url)
) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
