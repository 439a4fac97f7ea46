"""Synthetic corpus, scripted agents and the episode/experiment drivers.

An episode runs one agent against one document on top of a live store. The
driver owns the interaction protocol: after every extraction the next accepted
step must be the density tool, storage is only accepted once the current
extraction has been disambiguated, and out-of-order requests are rejected and
charged as failed tool calls. Graph writes go through the update operator
(additions only; removals are left to between-episode aging) and then the
storage tool.
"""

from __future__ import annotations

import copy
import hashlib
import json
import statistics
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Any, Mapping, Sequence

import numpy as np

from .extraction import ExtractionResult, Triple
from .metrics import SpectralParams, coverage, temporal_consistency, von_neumann_entropy
from .rewards import (
    ResultReward,
    RewardBreakdown,
    RewardConfig,
    RewardTrace,
    TraceStep,
    compose_breakdown,
    result_reward,
    toolcall_reward,
    trajectory_reward,
    update_alpha,
)
from .store import (
    CandidateObservation,
    KnowledgeGraph,
    Schema,
    apply_aging,
    entity_id,
    graph_view,
    promote_staged,
    relation_age_days,
    stage_candidates,
    upsert_extraction,
    validate_graph,
)
from .tools import (
    query_coverage_feedback,
    query_entity_disambiguation,
    query_extraction_density,
    query_iterative_feedback,
    query_kg_storage,
    query_quality_metrics,
)
from .update import EdgeCandidate, UpdateParams, apply_update, constraint_penalty, default_constraints

__all__ = [
    "ALPHA_BATCH",
    "EPISODE_EPOCH",
    "Action",
    "AgentScript",
    "AGENT_PRESETS",
    "EpisodeConfig",
    "EpisodeTrace",
    "ExperimentReport",
    "StepRecord",
    "SyntheticDocument",
    "agent_extraction",
    "generate_corpus",
    "payload_digest",
    "read_report",
    "run_episode",
    "run_experiment",
    "schema_wire",
    "scripted_agent",
]

T_DENSITY = "query_extraction_density"
T_COVERAGE = "query_coverage_feedback"
T_QUALITY = "query_quality_metrics"
T_ITERATIVE = "query_iterative_feedback"
T_DISAMBIG = "query_entity_disambiguation"
T_STORAGE = "query_kg_storage"

# Fixed clock origin so default runs never read the wall clock.
EPISODE_EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)

# Episodes per mixing-weight update in run_experiment.
ALPHA_BATCH = 8

# Stripped before digesting any request/response payload.
_VOLATILE_KEYS = frozenset(
    {"processing_time", "operation_timestamp", "performance_metrics"}
)

_NAME_POOL = (
    "Acme", "Borei", "Cinder", "Dovet", "Ellery", "Fenwick", "Garnet", "Hollis",
    "Inver", "Juno", "Kestrel", "Lumen", "Moraine", "Nettle", "Orrin", "Pavise",
    "Quill", "Rivet", "Sable", "Tamsin", "Umber", "Vesper", "Wicker", "Yarrow",
)

# Spurious-item names; disjoint from _NAME_POOL so noise never collides with gold.
_PHANTOM_POOL = (
    "Zelkov", "Quorra", "Marrow", "Ferrule", "Oxbow", "Gnomon",
    "Truss", "Helve", "Spandrel", "Volute", "Plinth", "Crocket",
)

_FILLER = (
    "The facility keeps running while the survey team takes careful notes.",
    "Operators review the ledger before every shift and after every change.",
    "Routine checks continue through the week without any recorded incident.",
    "The maintenance crew walks the floor and signs the daily summary sheet.",
)

_GOLD_CONFIDENCE = 0.9
_NOISE_CONFIDENCE = 0.45


def _hash_rng(*parts: object) -> np.random.Generator:
    raw = "\x1f".join(str(p) for p in parts).encode()
    seed = int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "big")
    return np.random.default_rng(seed)


def _strip_volatile(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {
            k: _strip_volatile(v) for k, v in obj.items() if k not in _VOLATILE_KEYS
        }
    if isinstance(obj, (list, tuple)):
        return [_strip_volatile(v) for v in obj]
    return obj


def payload_digest(obj: Any) -> str:
    """Short stable digest of a JSON-able payload, timing fields excluded."""
    canon = json.dumps(_strip_volatile(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def schema_wire(schema: Schema) -> dict:
    return {
        "entity_schema": list(schema.entity_types),
        "relation_schema": list(schema.relation_types),
    }


@dataclass(frozen=True)
class SyntheticDocument:
    doc_id: str
    text: str
    gold: ExtractionResult
    schema: Schema


def generate_corpus(seed: int, n_docs: int, schema: Schema) -> list[SyntheticDocument]:
    """Deterministic documents whose gold graphs validate against `schema`.

    Every gold entity name appears verbatim in the text. Text length is padded
    so a full-fidelity extraction sits near the density model's expected rate
    while a fraction of it falls below the minimum thresholds.
    """
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    if len(schema.entity_types) < 2:
        raise ValueError("schema must declare at least two entity types")
    if not schema.relation_types:
        raise ValueError("schema must declare at least one relation type")
    rng = np.random.default_rng(seed)
    docs: list[SyntheticDocument] = []
    for i in range(n_docs):
        doc_id = f"doc-{seed}-{i}"
        etypes = list(schema.entity_types)
        n_types = int(rng.integers(2, len(etypes), endpoint=True))
        chosen = [etypes[j] for j in sorted(rng.choice(len(etypes), size=n_types, replace=False))]
        counts = [int(rng.integers(1, 3, endpoint=True)) for _ in chosen]
        total = sum(counts)
        stems = rng.choice(len(_NAME_POOL), size=total, replace=False)
        entities: dict[str, list[str]] = {}
        flat: list[tuple[str, str]] = []
        pos = 0
        for etype, count in zip(chosen, counts):
            names = [_NAME_POOL[int(stems[pos + j])] for j in range(count)]
            pos += count
            entities[etype] = sorted(names)
            flat.extend((etype, n) for n in names)
        rtypes = list(schema.relation_types)
        n_rel = max(1, int(round(0.6 * total)))
        relations: dict[str, list[Triple]] = {}
        seen: set[tuple[str, str, str]] = set()
        guard = 0
        while len(seen) < n_rel and guard < 50 * n_rel:
            guard += 1
            a, b = rng.choice(len(flat), size=2, replace=False)
            s, o = flat[int(a)][1], flat[int(b)][1]
            rt = rtypes[int(rng.integers(0, len(rtypes)))]
            if s == o or (rt, s, o) in seen:
                continue
            seen.add((rt, s, o))
            relations.setdefault(rt, []).append(Triple(s, o))
        relations = {
            rt: sorted(ts, key=lambda t: (t.subject, t.object))
            for rt, ts in sorted(relations.items())
        }
        gold = ExtractionResult(entities=entities, relations=relations)
        docs.append(
            SyntheticDocument(
                doc_id=doc_id,
                text=_render_text(doc_id, gold, schema, rng),
                gold=gold,
                schema=schema,
            )
        )
        _check_gold(docs[-1])
    return docs


def _render_text(doc_id: str, gold: ExtractionResult, schema: Schema, rng: np.random.Generator) -> str:
    sentences = [f"Survey {doc_id} reviews the site in detail."]
    for etype, names in gold.entities.items():
        for name in names:
            sentences.append(f"The {etype} named {name} sits on the main floor.")
    for rtype, triples in gold.relations.items():
        verb = rtype.replace("_", " ")
        for t in triples:
            sentences.append(f"{t.subject} {verb} {t.object} during normal operation.")
    base_tokens = sum(_token_count(s) for s in sentences)
    target = _target_tokens(gold, schema)
    filler_idx = 0
    while base_tokens < target:
        s = _FILLER[filler_idx % len(_FILLER)]
        filler_idx += 1
        sentences.append(s)
        base_tokens += _token_count(s)
    return " ".join(sentences)


def _token_count(text: str) -> int:
    # Mirrors the density model's tokenizer: alphanumeric runs.
    count = 0
    in_tok = False
    for ch in text:
        if ch.isalnum():
            if not in_tok:
                count += 1
            in_tok = True
        else:
            in_tok = False
    return count


def _target_tokens(gold: ExtractionResult, schema: Schema) -> int:
    # Place a full-fidelity extraction near density ratio ~1.2 using the
    # model's expected-rate formula with the complexity term this corpus
    # produces (no technical tokens, ~10-word sentences).
    import math

    total_types = len(schema.entity_types) + len(schema.relation_types)
    complexity = 0.3 * (10.0 / 25.0) + 0.3 * min(total_types / 30.0, 1.0)
    exp_ent = 8.0 * (1.0 + 0.25 * math.log(1 + len(schema.entity_types))) * (0.5 + complexity)
    exp_rel = 5.0 * (1.0 + 0.25 * math.log(1 + len(schema.relation_types))) * (0.5 + complexity)
    want_e = 1000.0 * gold.entity_count() / (1.2 * exp_ent)
    want_r = 1000.0 * gold.relation_count() / (1.2 * exp_rel)
    return int(round(0.5 * (want_e + want_r)))


def _check_gold(doc: SyntheticDocument) -> None:
    probe = KnowledgeGraph(schema=doc.schema)
    report = upsert_extraction(probe, doc.gold, "corpus", EPISODE_EPOCH)
    if report.failures:
        raise RuntimeError(f"generated gold rejected by the store: {report.failures}")
    bad = validate_graph(probe, doc.schema)
    if bad:
        raise RuntimeError(f"generated gold violates graph constraints: {bad}")
    for _, name in doc.gold.entity_items():
        if name not in doc.text:
            raise RuntimeError(f"gold entity {name!r} missing from text")


@dataclass(frozen=True)
class Action:
    kind: str  # "extract" | "tool" | "finish"
    tool: str | None = None


@dataclass(frozen=True)
class AgentScript:
    """Deterministic scripted policy driven by distilled episode state.

    `fidelity` is the per-item chance of reproducing a gold item, `noise` the
    rate of spurious items relative to gold size. `style` picks the decision
    script; extraction content depends only on (seed, name, doc, attempt).
    """

    name: str
    fidelity: float = 1.0
    noise: float = 0.0
    style: str = "compliant"  # compliant | lazy | chaotic | inert
    max_refines: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("fidelity must be in [0, 1]")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")
        if self.style not in ("compliant", "lazy", "chaotic", "inert"):
            raise ValueError("unknown style")

    def decide(
        self,
        phase: str,
        needs_more: bool | None,
        attempts: int,
        rejections: int,
        step: int,
    ) -> Action:
        if self.style == "inert":
            return Action("tool", T_DENSITY)
        if phase == "idle":
            return Action("extract")
        if phase == "after_extract":
            if self.style == "chaotic" and rejections == 0:
                return Action("tool", T_STORAGE)
            return Action("tool", T_DENSITY)
        if phase == "assessed":
            if needs_more:
                if self.style == "lazy":
                    return Action("finish")
                if attempts <= self.max_refines:
                    return Action("extract")
                return Action("finish")
            if self.style == "lazy":
                return Action("finish")
            if self.style == "chaotic" and rejections == 1:
                return Action("tool", T_STORAGE)
            return Action("tool", T_DISAMBIG)
        if phase == "disambiguated":
            return Action("tool", T_STORAGE)
        return Action("finish")


AGENT_PRESETS: dict[str, AgentScript] = {
    "perfect": AgentScript("perfect", fidelity=1.0, noise=0.0, style="compliant"),
    "noisy": AgentScript("noisy", fidelity=0.7, noise=0.3, style="compliant"),
    "lazy": AgentScript("lazy", fidelity=0.4, noise=0.0, style="lazy"),
    "chaotic": AgentScript("chaotic", fidelity=0.6, noise=0.2, style="chaotic"),
    "inert": AgentScript("inert", fidelity=0.0, noise=0.0, style="inert"),
}


def scripted_agent(name: str) -> AgentScript:
    try:
        return AGENT_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown agent preset {name!r}") from None


def agent_extraction(
    agent: AgentScript, doc: SyntheticDocument, attempt: int, seed: int
) -> ExtractionResult:
    """Gold subsample at the agent's (refine-boosted) fidelity plus noise items."""
    fid = min(1.0, agent.fidelity + 0.3 * attempt)
    rng = _hash_rng(seed, agent.name, doc.doc_id, attempt)
    entities: dict[str, list[str]] = {}
    kept_names: set[str] = set()
    for etype, name in sorted(doc.gold.entity_items()):
        if rng.random() < fid:
            entities.setdefault(etype, []).append(name)
            kept_names.add(name)
    if not kept_names:
        etype, name = min(doc.gold.entity_items())
        entities[etype] = [name]
        kept_names.add(name)
    relations: dict[str, list[Triple]] = {}
    for rtype, s, o in sorted(doc.gold.relation_items()):
        if s in kept_names and o in kept_names and rng.random() < fid:
            relations.setdefault(rtype, []).append(Triple(s, o, confidence=_GOLD_CONFIDENCE))
    if agent.noise > 0.0:
        etypes = list(doc.schema.entity_types)
        rtypes = list(doc.schema.relation_types)
        n_pe = min(int(round(agent.noise * doc.gold.entity_count())), len(_PHANTOM_POOL))
        phantom: list[str] = []
        if n_pe:
            picks = rng.choice(len(_PHANTOM_POOL), size=n_pe, replace=False)
            for p in picks:
                pname = _PHANTOM_POOL[int(p)]
                ptype = etypes[int(rng.integers(0, len(etypes)))]
                entities.setdefault(ptype, []).append(pname)
                phantom.append(pname)
        pool = sorted(kept_names) + phantom
        gold_rel = doc.gold.relation_items()
        made: set[tuple[str, str, str]] = set()
        n_pr = int(round(agent.noise * doc.gold.relation_count()))
        tries = 0
        while len(made) < n_pr and tries < 20 * max(1, n_pr) and len(pool) >= 2:
            tries += 1
            a, b = rng.choice(len(pool), size=2, replace=False)
            s, o = pool[int(a)], pool[int(b)]
            rt = rtypes[int(rng.integers(0, len(rtypes)))]
            if s == o or (rt, s, o) in gold_rel or (rt, s, o) in made:
                continue
            made.add((rt, s, o))
            relations.setdefault(rt, []).append(Triple(s, o, confidence=_NOISE_CONFIDENCE))
    entities = {et: sorted(ns) for et, ns in sorted(entities.items())}
    relations = {
        rt: sorted(ts, key=lambda t: (t.subject, t.object))
        for rt, ts in sorted(relations.items())
    }
    return ExtractionResult(entities=entities, relations=relations)


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 10
    gamma: float = 0.95
    reward: RewardConfig = field(default_factory=RewardConfig)
    spectral: SpectralParams = field(default_factory=SpectralParams)
    update: UpdateParams = field(default_factory=UpdateParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")


@dataclass(frozen=True)
class StepRecord:
    index: int
    kind: str
    tool: str | None
    accepted: bool
    reason: str | None
    request_digest: str | None
    response_digest: str | None
    quality: float | None
    reward: RewardBreakdown
    entities_before: int
    relations_before: int
    entities_after: int
    relations_after: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "tool": self.tool,
            "accepted": self.accepted,
            "reason": self.reason,
            "request_digest": self.request_digest,
            "response_digest": self.response_digest,
            "quality": self.quality,
            "reward": self.reward.to_dict(),
            "graph_before": [self.entities_before, self.relations_before],
            "graph_after": [self.entities_after, self.relations_after],
        }


@dataclass
class EpisodeTrace:
    agent: str
    doc_id: str
    steps: list[StepRecord]
    stored: bool
    protocol_ok: bool
    discounted_return: float
    alpha: float
    final_extraction: dict | None
    final_quality: float | None
    env_total: float
    toolcall_total: float
    result: ResultReward
    trajectory_total: float
    task_total: float

    def to_record(self) -> dict:
        return {
            "kind": "episode",
            "agent": self.agent,
            "doc_id": self.doc_id,
            "alpha": self.alpha,
            "stored": self.stored,
            "protocol_ok": self.protocol_ok,
            "return": self.discounted_return,
            "env_total": self.env_total,
            "toolcall_total": self.toolcall_total,
            "result": self.result.to_dict(),
            "trajectory_total": self.trajectory_total,
            "task_total": self.task_total,
            "final_quality": self.final_quality,
            "steps": [s.to_dict() for s in self.steps],
        }


_ZERO_RESULT = ResultReward(0.0, 0.0, 0.0, 0.0)


def _constraints_for(cfg: EpisodeConfig, schema: Schema):
    if cfg.update.constraints:
        return cfg.update.constraints
    return default_constraints(schema.relation_types, schema.selfloop_whitelist)


def _entropy(view, mu: float) -> float:
    return 0.0 if view.n == 0 else von_neumann_entropy(view, mu)


def _env_step_reward(prev_kg: KnowledgeGraph, next_kg: KnowledgeGraph, cfg: EpisodeConfig) -> float:
    # Same formula as the reward engine's environmental term, with the empty
    # store's entropy taken as 0 so the first write measures from a zero base.
    sp, rc = cfg.spectral, cfg.reward
    pv, nv = graph_view(prev_kg), graph_view(next_kg)
    d_cov = coverage(nv, sp.kappa, sp.h) - coverage(pv, sp.kappa, sp.h)
    d_ent = _entropy(nv, sp.mu) - _entropy(pv, sp.mu)
    contr = constraint_penalty(sorted(next_kg.relations), _constraints_for(cfg, next_kg.schema))
    t_cons = temporal_consistency(pv, nv, sp.beta_t)
    return d_cov + d_ent - rc.lambda_contr * contr - rc.lambda_T * t_cons


def _allowed(phase: str, kind: str, tool: str | None) -> tuple[bool, str | None]:
    if kind == "extract":
        if phase == "after_extract":
            return False, "extraction must be density-checked before extracting again"
        return True, None
    if kind == "finish":
        if phase == "after_extract":
            return False, "extraction must be density-checked before finishing"
        return True, None
    if kind != "tool":
        return False, f"unknown action kind {kind!r}"
    if phase == "idle":
        return False, "no extraction to run tools against"
    if tool == T_DENSITY:
        return True, None
    if phase == "after_extract":
        return False, "density check required immediately after extraction"
    if tool in (T_COVERAGE, T_QUALITY, T_ITERATIVE):
        return True, None
    if tool == T_DISAMBIG:
        return True, None
    if tool == T_STORAGE:
        if phase != "disambiguated":
            return False, "storage requires disambiguation of the current extraction"
        return True, None
    return False, f"unknown tool {tool!r}"


def _copy_graph(kg: KnowledgeGraph) -> KnowledgeGraph:
    return copy.deepcopy(kg)


def _storage_write(
    extraction: ExtractionResult,
    store: KnowledgeGraph,
    cfg: EpisodeConfig,
    now: datetime,
    source: str,
) -> tuple[dict, dict, int]:
    """Route the write through the update operator, then the storage tool.

    Operator-accepted relations go to the store; well-formed candidates the
    operator declines are staged for later promotion; malformed relations stay
    in the payload so the tool reports their failures. Within an episode only
    additions are taken from the operator.
    """
    schema = store.schema
    whitelist = set(schema.selfloop_whitelist)
    cands: list[EdgeCandidate] = []
    table: dict[tuple[str, str, str], tuple[str, Triple, str, str, float]] = {}
    passthrough: list[tuple[str, Triple]] = []
    for rtype, triples in extraction.relations.items():
        for t in triples:
            st = extraction.type_of(t.subject)
            ot = extraction.type_of(t.object)
            ok = (
                st in schema.entity_types
                and ot in schema.entity_types
                and rtype in schema.relation_types
            )
            if ok:
                key = (entity_id(t.subject, st), entity_id(t.object, ot), rtype)
                if key[0] == key[1] and rtype not in whitelist:
                    ok = False
            if not ok:
                passthrough.append((rtype, t))
                continue
            conf = t.confidence if t.confidence is not None else 0.5
            cands.append(EdgeCandidate(*key, confidence=conf))
            table[key] = (rtype, t, st, ot, conf)
    g_t = sorted(store.relations)
    ages = {k: float(relation_age_days(rel, now)) for k, rel in store.relations.items()}
    params = replace(cfg.update, constraints=_constraints_for(cfg, schema))
    accepted, _ = apply_update(g_t, cands, ages, params, mode="greedy")
    write_rel: dict[str, list[Triple]] = {}
    for key in sorted(set(table) & accepted):
        rtype, t, _, _, _ = table[key]
        write_rel.setdefault(rtype, []).append(t)
    for rtype, t in passthrough:
        write_rel.setdefault(rtype, []).append(t)
    write = ExtractionResult(
        entities={et: list(ns) for et, ns in extraction.entities.items()},
        relations=write_rel,
    )
    resp = query_kg_storage(write.to_wire(), store, now=now, source=source)
    staged = sorted(set(table) - accepted)
    if staged:
        obs = [
            CandidateObservation(
                subject=table[k][1].subject,
                subject_type=table[k][2],
                rel_type=table[k][0],
                object=table[k][1].object,
                object_type=table[k][3],
                confidence=table[k][4],
                source=source,
            )
            for k in staged
        ]
        stage_candidates(store, obs, episode=store.last_episode, now=now)
    return write.to_wire(), resp, len(staged)


def run_episode(
    agent: AgentScript,
    doc: SyntheticDocument,
    store: KnowledgeGraph,
    cfg: EpisodeConfig,
    *,
    alpha: float | None = None,
    now: datetime | None = None,
    episode_index: int = 0,
) -> EpisodeTrace:
    if store.schema != doc.schema:
        raise ValueError("store schema does not match the document schema")
    a = cfg.reward.alpha if alpha is None else alpha
    if not 0.0 <= a <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    clock = EPISODE_EPOCH if now is None else now
    sw = schema_wire(doc.schema)
    source = f"{agent.name}#{episode_index}"
    store.last_episode = episode_index

    calls: list[tuple[str, str, bool]] = []
    steps: list[StepRecord] = []
    tsteps: list[TraceStep] = []
    extraction: ExtractionResult | None = None
    wire: dict | None = None
    history: list[dict] = []
    phase = "idle"
    needs_more: bool | None = None
    attempts = 0
    rejections = 0
    stored = False
    final_result = _ZERO_RESULT
    final_quality: float | None = None
    prev_tc = 0.0

    for t in range(cfg.max_steps):
        act = agent.decide(phase, needs_more, attempts, rejections, t)
        ok, reason = _allowed(phase, act.kind, act.tool)
        n_e0, n_r0 = len(store.entities), len(store.relations)
        req_digest: str | None = None
        resp_digest: str | None = None
        quality: float | None = None
        terminal = False
        snapshot: KnowledgeGraph | None = None

        if ok:
            if act.kind == "extract":
                extraction = agent_extraction(agent, doc, attempts, cfg.seed)
                attempts += 1
                wire = extraction.to_wire()
                history.append(wire)
                req_digest = payload_digest(wire)
                quality = float(
                    query_quality_metrics(wire, sw, doc.text)["overall_score"]
                )
                final_quality = quality
                phase = "after_extract"
                needs_more = None
            elif act.kind == "finish":
                terminal = True
            else:
                assert wire is not None
                if act.tool == T_DENSITY:
                    payload = {"text": doc.text, "schema": sw, "extracted_kg": wire}
                    resp = query_extraction_density(doc.text, sw, wire)
                    needs_more = bool(resp["needs_more_extraction"])
                    if phase == "after_extract":
                        phase = "assessed"
                elif act.tool == T_COVERAGE:
                    payload = {"text": doc.text, "schema": sw, "extracted_kg": wire}
                    resp = query_coverage_feedback(doc.text, sw, wire)
                elif act.tool == T_QUALITY:
                    payload = {"extracted_kg": wire, "schema": sw, "text": doc.text}
                    resp = query_quality_metrics(wire, sw, doc.text)
                elif act.tool == T_ITERATIVE:
                    payload = {
                        "extraction_history": list(history),
                        "extracted_kg": wire,
                        "text": doc.text,
                        "schema": sw,
                    }
                    resp = query_iterative_feedback(list(history), wire, doc.text, sw)
                elif act.tool == T_DISAMBIG:
                    payload = {
                        "extracted_kg": wire,
                        "disambiguation_strategy": "exact_match",
                    }
                    resp = query_entity_disambiguation(wire, store)
                    phase = "disambiguated"
                elif act.tool == T_STORAGE:
                    assert extraction is not None
                    snapshot = _copy_graph(store)
                    payload, resp, _ = _storage_write(
                        extraction, store, cfg, clock, source
                    )
                    payload = {"extracted_kg": payload, "source": source}
                    stored = bool(resp["storage_status"]["overall_success"])
                    terminal = stored
                else:  # pragma: no cover - gated by _allowed
                    raise AssertionError(act.tool)
                req_digest = payload_digest(payload)
                resp_digest = payload_digest(resp)
                calls.append((act.tool, req_digest, True))
        else:
            rejections += 1
            if act.kind == "tool":
                req_digest = payload_digest({"tool": act.tool, "phase": phase})
                calls.append((act.tool, req_digest, False))

        tc_total = toolcall_reward(calls, cfg.reward)
        tc_inc = tc_total - prev_tc
        prev_tc = tc_total
        tsteps.append(TraceStep(protocol_ok=ok, quality=quality))
        at_end = terminal or t == cfg.max_steps - 1
        result_r = _ZERO_RESULT
        traj_r = 0.0
        if at_end:
            if extraction is not None:
                result_r = result_reward(extraction, doc.gold, True, cfg.reward)
            final_result = result_r
            traj_r = trajectory_reward(
                RewardTrace(steps=tuple(tsteps), storage_success=stored), cfg.reward
            )
        env_r = _env_step_reward(snapshot if snapshot is not None else store, store, cfg)
        bd = compose_breakdown(env_r, tc_inc, result_r, traj_r, a)
        steps.append(
            StepRecord(
                index=t,
                kind=act.kind,
                tool=act.tool,
                accepted=ok,
                reason=reason,
                request_digest=req_digest,
                response_digest=resp_digest,
                quality=quality,
                reward=bd,
                entities_before=n_e0,
                relations_before=n_r0,
                entities_after=len(store.entities),
                relations_after=len(store.relations),
            )
        )
        if terminal:
            break

    ret = sum(cfg.gamma**i * s.reward.mixed for i, s in enumerate(steps))
    return EpisodeTrace(
        agent=agent.name,
        doc_id=doc.doc_id,
        steps=steps,
        stored=stored,
        protocol_ok=all(s.accepted for s in steps),
        discounted_return=float(ret),
        alpha=a,
        final_extraction=wire,
        final_quality=final_quality,
        env_total=float(sum(s.reward.env for s in steps)),
        toolcall_total=float(sum(s.reward.toolcall for s in steps)),
        result=final_result,
        trajectory_total=float(sum(s.reward.trajectory for s in steps)),
        task_total=float(sum(s.reward.task_total for s in steps)),
    )


@dataclass
class ExperimentReport:
    """Chronological records: header, episodes, mixing-weight updates, summary."""

    records: list[dict]

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def episodes(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "episode"]

    @property
    def alpha_updates(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "alpha_update"]

    @property
    def summary(self) -> dict:
        return self.records[-1]

    @property
    def alpha_trajectory(self) -> list[float]:
        return list(self.summary["alpha_trajectory"])

    def to_json_lines(self) -> list[str]:
        return [
            json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records
        ]

    def to_jsonl(self) -> str:
        return "\n".join(self.to_json_lines()) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()[:16]

    def summary_table(self) -> str:
        rows = []
        per_agent = self.summary["per_agent"]
        header = f"{'agent':<12} {'episodes':>8} {'stored':>6} {'clean':>5} {'return':>9} {'task':>9} {'env':>9}"
        rows.append(header)
        rows.append("-" * len(header))
        for name in sorted(per_agent):
            s = per_agent[name]
            rows.append(
                f"{name:<12} {s['episodes']:>8d} {s['stored']:>6d} {s['clean']:>5d} "
                f"{s['mean_return']:>9.4f} {s['mean_task']:>9.4f} {s['mean_env']:>9.4f}"
            )
        traj = self.summary["alpha_trajectory"]
        rows.append(
            f"alpha: {traj[0]:.4f} -> {traj[-1]:.4f} ({len(traj) - 1} update(s))"
        )
        return "\n".join(rows)


def read_report(path: str) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if not records or records[0].get("kind") != "header":
        raise ValueError("not an experiment report")
    return ExperimentReport(records)


def run_experiment(
    agents: Sequence[AgentScript],
    corpus: Sequence[SyntheticDocument],
    episodes_per_doc: int,
    cfg: EpisodeConfig,
) -> ExperimentReport:
    """Run every agent over the corpus on its own evolving store.

    The mixing weight is shared across the chronological episode stream and
    updated after every ALPHA_BATCH episodes (remainder flushed at the end)
    using batch-mean environment/task totals as gradient surrogates. Staged
    promotion and aging run between episodes on a one-day-per-episode clock.
    """
    if not agents:
        raise ValueError("no agents")
    if not corpus:
        raise ValueError("no documents")
    if episodes_per_doc < 1:
        raise ValueError("episodes_per_doc must be >= 1")
    schema = corpus[0].schema
    for d in corpus:
        if d.schema != schema:
            raise ValueError("corpus documents must share one schema")

    alpha = cfg.reward.alpha
    traj = [alpha]
    records: list[dict] = [
        {
            "kind": "header",
            "seed": cfg.seed,
            "alpha_init": alpha,
            "agents": [ag.name for ag in agents],
            "docs": [d.doc_id for d in corpus],
            "episodes_per_doc": episodes_per_doc,
            "max_steps": cfg.max_steps,
            "gamma": cfg.gamma,
        }
    ]
    batch_env: list[float] = []
    batch_task: list[float] = []
    ordinal = 0
    per_agent: dict[str, dict] = {}

    def flush() -> None:
        nonlocal alpha
        if not batch_env:
            return
        grad_env = statistics.fmean(batch_env)
        grad_task = statistics.fmean(batch_task)
        new = update_alpha(alpha, grad_env, grad_task, cfg.reward.eta_alpha)
        records.append(
            {
                "kind": "alpha_update",
                "after_ordinal": ordinal - 1,
                "batch_size": len(batch_env),
                "grad_env": grad_env,
                "grad_task": grad_task,
                "alpha_before": alpha,
                "alpha_after": new,
            }
        )
        alpha = new
        traj.append(alpha)
        batch_env.clear()
        batch_task.clear()

    for ag in agents:
        store = KnowledgeGraph(schema=schema)
        stats = per_agent.setdefault(
            ag.name,
            {"episodes": 0, "stored": 0, "clean": 0, "returns": [], "tasks": [], "envs": []},
        )
        local = 0
        for doc in corpus:
            for _ in range(episodes_per_doc):
                day = EPISODE_EPOCH + timedelta(days=local)
                trace = run_episode(
                    ag, doc, store, cfg, alpha=alpha, now=day, episode_index=local
                )
                promote_staged(store, day)
                apply_aging(store, day)
                view = graph_view(store)
                n, m = len(store.entities), len(store.relations)
                rec = trace.to_record()
                rec.update(
                    {
                        "ordinal": ordinal,
                        "agent_episode": local,
                        "day": local,
                        "graph": {
                            "entities": n,
                            "relations": m,
                            "staged": len(store.staged),
                            "relation_density": m / max(1, n * (n - 1)),
                            "coverage": float(
                                coverage(view, cfg.spectral.kappa, cfg.spectral.h)
                            ),
                            "quality": trace.final_quality,
                        },
                    }
                )
                records.append(rec)
                batch_env.append(trace.env_total)
                batch_task.append(trace.task_total)
                stats["episodes"] += 1
                stats["stored"] += int(trace.stored)
                stats["clean"] += int(trace.protocol_ok)
                stats["returns"].append(trace.discounted_return)
                stats["tasks"].append(trace.task_total)
                stats["envs"].append(trace.env_total)
                local += 1
                ordinal += 1
                if len(batch_env) == ALPHA_BATCH:
                    flush()
    flush()

    summary_agents = {
        name: {
            "episodes": s["episodes"],
            "stored": s["stored"],
            "clean": s["clean"],
            "mean_return": statistics.fmean(s["returns"]),
            "mean_task": statistics.fmean(s["tasks"]),
            "mean_env": statistics.fmean(s["envs"]),
        }
        for name, s in per_agent.items()
    }
    records.append(
        {
            "kind": "summary",
            "episodes": ordinal,
            "alpha_trajectory": traj,
            "per_agent": summary_agents,
        }
    )
    return ExperimentReport(records)
