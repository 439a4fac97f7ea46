import { readFileSync } from "node:fs";
import { callTool, type ClientConfig } from "./client.js";
import type { ExtractedKg, KgSchema } from "./types.js";

// Document bundle driven by the agent: the raw text, the target schema, and a
// fixed sequence of extraction attempts. Each attempt is submitted for a
// density check; the first adequate one moves on to disambiguation + storage.
export interface AgentDoc {
  text: string;
  schema: KgSchema;
  attempts: ExtractedKg[];
}

export interface AgentStep {
  tool: string;
  detail: Record<string, string | number | boolean>;
}

export interface AgentSummary {
  doc: string;
  steps: AgentStep[];
  attemptsUsed: number;
  storageCode: number;
  overallSuccess: boolean;
}

function fail(msg: string): never {
  throw new Error(`invalid agent doc: ${msg}`);
}

export function loadAgentDoc(path: string): AgentDoc {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf8"));
  } catch (err) {
    const detail = err instanceof Error ? err.message : String(err);
    throw new Error(`cannot read agent doc ${path}: ${detail}`);
  }
  if (typeof raw !== "object" || raw === null) fail("not a JSON object");
  const doc = raw as Record<string, unknown>;
  if (typeof doc.text !== "string" || doc.text.length === 0) fail("text must be a non-empty string");
  const schema = doc.schema as KgSchema | undefined;
  if (
    typeof schema !== "object" ||
    schema === null ||
    !Array.isArray(schema.entity_schema) ||
    !Array.isArray(schema.relation_schema)
  ) {
    fail("schema must hold entity_schema and relation_schema arrays");
  }
  if (!Array.isArray(doc.attempts) || doc.attempts.length === 0) {
    fail("attempts must be a non-empty array");
  }
  for (const [i, attempt] of doc.attempts.entries()) {
    const kg = attempt as Partial<ExtractedKg> | null;
    if (typeof kg !== "object" || kg === null || !kg.entities || !kg.relations) {
      fail(`attempts[${i}] must hold entities and relations`);
    }
  }
  return { text: doc.text, schema, attempts: doc.attempts as ExtractedKg[] };
}

type StepLogger = (line: string) => void;

function show(detail: Record<string, string | number | boolean>): string {
  return Object.entries(detail)
    .map(([k, v]) => `${k}=${typeof v === "number" ? +v.toFixed(6) : v}`)
    .join(" ");
}

// extract -> density -> (re-extract while inadequate) -> disambiguate -> store
export async function runScriptedAgent(
  docPath: string,
  cfg: ClientConfig,
  log: StepLogger = (line) => console.log(line),
): Promise<AgentSummary> {
  const doc = loadAgentDoc(docPath);
  const steps: AgentStep[] = [];
  const record = (tool: string, detail: AgentStep["detail"]) => {
    steps.push({ tool, detail });
    log(`[${tool}] ${show(detail)}`);
  };

  let chosen = doc.attempts[0]!;
  let attemptsUsed = 0;
  for (const [i, attempt] of doc.attempts.entries()) {
    chosen = attempt;
    attemptsUsed = i + 1;
    const density = await callTool(
      "query_extraction_density",
      { text: doc.text, schema: doc.schema, extracted_kg: attempt },
      cfg,
    );
    record("query_extraction_density", {
      attempt: i,
      needs_more_extraction: density.needs_more_extraction,
      assessment_level: density.density_assessment.assessment_level,
      overall_density_score: density.density_assessment.overall_density_score,
      is_adequate: density.density_assessment.is_adequate,
    });
    if (!density.needs_more_extraction) break;
  }

  const disambig = await callTool(
    "query_entity_disambiguation",
    { extracted_kg: chosen },
    cfg,
  );
  record("query_entity_disambiguation", {
    quality_score: disambig.quality_score,
    total_entities: disambig.summary.total_entities,
    disambiguated_entities: disambig.summary.disambiguated_entities,
    average_confidence: disambig.summary.average_confidence,
  });

  const stored = await callTool("query_kg_storage", { extracted_kg: chosen }, cfg);
  const status = stored.storage_status;
  record("query_kg_storage", {
    overall_success: status.overall_success,
    entities_code: status.entities_storage.code,
    relations_code: status.relations_storage.code,
    stored_entities: status.entities_storage.stored_count,
    stored_relations: status.relations_storage.stored_count,
    skipped_entities: status.entities_storage.skipped_count,
    skipped_relations: status.relations_storage.skipped_count,
  });

  const storageCode =
    status.entities_storage.code !== 0
      ? status.entities_storage.code
      : status.relations_storage.code;
  return {
    doc: docPath,
    steps,
    attemptsUsed,
    storageCode,
    overallSuccess: status.overall_success,
  };
}
