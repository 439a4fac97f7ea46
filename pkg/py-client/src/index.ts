export {
  callTool,
  health,
  isKnownTool,
  resolveConfig,
  CallerFaultError,
  ServiceError,
  TransportError,
  type ClientConfig,
  type HealthReport,
} from "./client.js";
export { loadAgentDoc, runScriptedAgent, type AgentDoc, type AgentStep, type AgentSummary } from "./agent.js";
export * from "./types.js";
