"""Embedded knowledge-graph store with staging, promotion, aging and snapshots.

Semantics mirror a property-graph database: entities are merged on
(name, etype), promoted relations are unique per (src_id, dst_id, rel_type),
low-confidence observations accumulate votes in a staging layer until
thresholds promote them. Persistence is line-delimited JSON; export is a
re-runnable Cypher script. Staged rows are invisible to metrics/retrieval:
only promoted relations form the graph view.

Concurrency contract: mutating operations must be serialized by the caller
(the HTTP service holds a write lock); reads can share a store snapshot.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable

from .extraction import ExtractionResult
from .metrics import GraphView

__all__ = [
    "Entity",
    "Relation",
    "StagedRelation",
    "SnapshotRecord",
    "Schema",
    "KnowledgeGraph",
    "CandidateObservation",
    "UpsertReport",
    "StagingReport",
    "PromotionReport",
    "AgingReport",
    "ConstraintViolation",
    "entity_id",
    "upsert_extraction",
    "stage_candidates",
    "promote_staged",
    "apply_aging",
    "create_snapshot",
    "validate_graph",
    "graph_view",
    "save_store",
    "load_store",
    "export_cypher",
    "utc_now",
]

DEFAULT_TAU_CONF = 0.72
DEFAULT_TAU_VOTES = 3
DEFAULT_SOFT_WINDOW = 7
DEFAULT_HARD_WINDOW = 45
DEFAULT_DECAY_RATE = 0.08
DEFAULT_UPSERT_CONFIDENCE = 0.5

_DAY_SECONDS = 86400.0


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def entity_id(name: str, etype: str) -> str:
    """Stable id derived from (name, etype)."""
    digest = hashlib.blake2b(f"{etype}\x1f{name}".encode("utf-8"), digest_size=8)
    return "e" + digest.hexdigest()


@dataclass
class Entity:
    id: str
    name: str
    etype: str
    created_at: datetime
    last_seen: datetime
    source: str
    episode_tag: int | None = None
    snapshot: str | None = None


@dataclass
class Relation:
    src_id: str
    dst_id: str
    rel_type: str
    confidence: float
    evidence: list[str]
    created_at: datetime
    last_seen: datetime
    episode_tag: int | None = None
    snapshot: str | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.src_id, self.dst_id, self.rel_type)


@dataclass
class StagedRelation:
    src_id: str
    dst_id: str
    rel_type: str
    confidence: float
    votes: int
    sources: list[str]
    episode_tag: int | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.src_id, self.dst_id, self.rel_type)


@dataclass
class SnapshotRecord:
    tag: str
    timestamp: datetime
    note: str = ""


@dataclass(frozen=True)
class Schema:
    entity_types: tuple[str, ...]
    relation_types: tuple[str, ...]
    selfloop_whitelist: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for label, values in (
            ("entity_types", self.entity_types),
            ("relation_types", self.relation_types),
        ):
            if any(not t for t in values):
                raise ValueError(f"{label} contains an empty name")
            if len(set(values)) != len(values):
                raise ValueError(f"{label} contains duplicates")

    @classmethod
    def make(
        cls,
        entity_types: Iterable[str],
        relation_types: Iterable[str],
        selfloop_whitelist: Iterable[str] = (),
    ) -> "Schema":
        return cls(tuple(entity_types), tuple(relation_types), tuple(selfloop_whitelist))


@dataclass
class KnowledgeGraph:
    """In-memory store. `schema = None` means unconstrained types."""

    schema: Schema | None = None
    entities: dict[str, Entity] = field(default_factory=dict)
    relations: dict[tuple[str, str, str], Relation] = field(default_factory=dict)
    staged: dict[tuple[str, str, str], StagedRelation] = field(default_factory=dict)
    snapshots: list[SnapshotRecord] = field(default_factory=list)
    last_episode: int | None = None

    def entity_types_of(self, name: str) -> list[str]:
        return sorted({e.etype for e in self.entities.values() if e.name == name})


@dataclass(frozen=True)
class CandidateObservation:
    subject: str
    subject_type: str
    rel_type: str
    object: str
    object_type: str
    confidence: float
    source: str


@dataclass
class UpsertReport:
    entities_stored: int = 0
    entities_skipped: int = 0
    entities_failed: int = 0
    relations_stored: int = 0
    relations_skipped: int = 0
    relations_failed: int = 0
    failures: list[tuple[str, str, str]] = field(default_factory=list)  # (kind, reason, detail)


@dataclass
class StagingReport:
    staged_new: int = 0
    staged_updated: int = 0
    rejected: int = 0
    entities_created: int = 0


@dataclass
class PromotionReport:
    promoted_new: int = 0
    promoted_merged: int = 0
    remaining_staged: int = 0


@dataclass
class AgingReport:
    decayed: int = 0
    deleted: int = 0


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str  # self_loop | invalid_entity_type | invalid_relation_type | orphaned_endpoint | duplicate_key
    key: str
    detail: str


def _dedup_keep_order(items: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def _touch_entity(
    kg: KnowledgeGraph,
    name: str,
    etype: str,
    now: datetime,
    source: str,
    episode_tag: int | None,
) -> tuple[str, bool]:
    """Merge an entity by (name, etype); returns (id, created)."""
    eid = entity_id(name, etype)
    ent = kg.entities.get(eid)
    if ent is None:
        kg.entities[eid] = Entity(
            id=eid,
            name=name,
            etype=etype,
            created_at=now,
            last_seen=now,
            source=source,
            episode_tag=episode_tag,
        )
        return eid, True
    if now > ent.last_seen:
        ent.last_seen = now
    if episode_tag is not None:
        ent.episode_tag = episode_tag
    return eid, False


def _resolve_endpoint(kg: KnowledgeGraph, delta: ExtractionResult, name: str) -> str | None:
    """Entity type for a relation endpoint: the delta's lists first, then a
    unique name match in the store."""
    etype = delta.type_of(name)
    if etype is not None:
        return etype
    matches = kg.entity_types_of(name)
    if len(matches) == 1:
        return matches[0]
    return None


def upsert_extraction(
    kg: KnowledgeGraph,
    delta: ExtractionResult,
    source: str,
    now: datetime,
    episode: int | None = None,
) -> UpsertReport:
    """Merge an extraction into the store.

    Entities merge on (name, etype); relations merge on the triple key with
    confidence maximized and the source appended to evidence. Unknown types
    fail with "schema violation"; unresolvable endpoints fail with
    "orphaned reference". Report counts sum to the delta's sizes.
    """
    report = UpsertReport()
    if episode is not None:
        kg.last_episode = episode
    schema = kg.schema
    for etype, names in delta.entities.items():
        type_ok = schema is None or etype in schema.entity_types
        for name in names:
            if not type_ok or not name:
                report.entities_failed += 1
                report.failures.append(("entity", "schema violation", f"{etype}:{name}"))
                continue
            _, created = _touch_entity(kg, name, etype, now, source, episode)
            if created:
                report.entities_stored += 1
            else:
                report.entities_skipped += 1
    for rel_type, triples in delta.relations.items():
        type_ok = schema is None or rel_type in schema.relation_types
        for t in triples:
            detail = f"{rel_type}:{t.subject}->{t.object}"
            if not type_ok:
                report.relations_failed += 1
                report.failures.append(("relation", "schema violation", detail))
                continue
            s_type = _resolve_endpoint(kg, delta, t.subject)
            o_type = _resolve_endpoint(kg, delta, t.object)
            if s_type is None or o_type is None:
                report.relations_failed += 1
                report.failures.append(("relation", "orphaned reference", detail))
                continue
            src = entity_id(t.subject, s_type)
            dst = entity_id(t.object, o_type)
            if src == dst and schema is not None and rel_type not in schema.selfloop_whitelist:
                report.relations_failed += 1
                report.failures.append(("relation", "schema violation", f"self-loop {detail}"))
                continue
            conf = t.confidence if t.confidence is not None else DEFAULT_UPSERT_CONFIDENCE
            conf = min(1.0, max(0.0, float(conf)))
            key = (src, dst, rel_type)
            rel = kg.relations.get(key)
            if rel is None:
                kg.relations[key] = Relation(
                    src_id=src,
                    dst_id=dst,
                    rel_type=rel_type,
                    confidence=conf,
                    evidence=[source],
                    created_at=now,
                    last_seen=now,
                    episode_tag=episode,
                )
                report.relations_stored += 1
            else:
                rel.confidence = max(rel.confidence, conf)
                rel.last_seen = max(rel.last_seen, now)
                rel.evidence = _dedup_keep_order(rel.evidence + [source])
                if episode is not None:
                    rel.episode_tag = episode
                report.relations_skipped += 1
    return report


def stage_candidates(
    kg: KnowledgeGraph,
    cands: Iterable[CandidateObservation],
    episode: int | None,
    now: datetime,
) -> StagingReport:
    """Stage relation observations; endpoints are auto-created as entities.

    Per key: votes increment, confidence keeps the maximum, sources append
    (de-duplicated, order preserved). Confidence outside [0,1] rejects the
    entry.
    """
    report = StagingReport()
    if episode is not None:
        kg.last_episode = episode
    for c in cands:
        if not (0.0 <= c.confidence <= 1.0):
            report.rejected += 1
            continue
        _, s_created = _touch_entity(kg, c.subject, c.subject_type, now, c.source, episode)
        _, o_created = _touch_entity(kg, c.object, c.object_type, now, c.source, episode)
        report.entities_created += int(s_created) + int(o_created)
        src = entity_id(c.subject, c.subject_type)
        dst = entity_id(c.object, c.object_type)
        key = (src, dst, c.rel_type)
        row = kg.staged.get(key)
        if row is None:
            kg.staged[key] = StagedRelation(
                src_id=src,
                dst_id=dst,
                rel_type=c.rel_type,
                confidence=float(c.confidence),
                votes=1,
                sources=[c.source],
                episode_tag=episode,
            )
            report.staged_new += 1
        else:
            row.votes += 1
            row.confidence = max(row.confidence, float(c.confidence))
            row.sources = _dedup_keep_order(row.sources + [c.source])
            if episode is not None:
                row.episode_tag = episode
            report.staged_updated += 1
    return report


def promote_staged(
    kg: KnowledgeGraph,
    now: datetime,
    tau_conf: float = DEFAULT_TAU_CONF,
    tau_votes: int = DEFAULT_TAU_VOTES,
) -> PromotionReport:
    """Move staged rows meeting confidence >= tau_conf and votes >= tau_votes
    into the promoted set, merging evidence (set-union, order preserved)."""
    report = PromotionReport()
    for key in sorted(kg.staged):
        row = kg.staged[key]
        if row.confidence >= tau_conf and row.votes >= tau_votes:
            rel = kg.relations.get(key)
            if rel is None:
                kg.relations[key] = Relation(
                    src_id=row.src_id,
                    dst_id=row.dst_id,
                    rel_type=row.rel_type,
                    confidence=row.confidence,
                    evidence=list(row.sources),
                    created_at=now,
                    last_seen=now,
                    episode_tag=row.episode_tag,
                )
                report.promoted_new += 1
            else:
                rel.confidence = max(rel.confidence, row.confidence)
                rel.evidence = _dedup_keep_order(rel.evidence + list(row.sources))
                rel.last_seen = max(rel.last_seen, now)
                report.promoted_merged += 1
            del kg.staged[key]
    report.remaining_staged = len(kg.staged)
    return report


def relation_age_days(rel: Relation, now: datetime) -> int:
    return int(math.floor((now - rel.last_seen).total_seconds() / _DAY_SECONDS))


def apply_aging(
    kg: KnowledgeGraph,
    now: datetime,
    soft_window: int = DEFAULT_SOFT_WINDOW,
    hard_window: int = DEFAULT_HARD_WINDOW,
    decay_rate: float = DEFAULT_DECAY_RATE,
) -> AgingReport:
    """Decay confidences of relations aged in (soft, hard] days and delete
    relations aged beyond hard_window. Ages are whole days since last_seen."""
    if not soft_window < hard_window:
        raise ValueError("soft_window must be < hard_window")
    report = AgingReport()
    for key in sorted(kg.relations):
        rel = kg.relations[key]
        age = relation_age_days(rel, now)
        if age > hard_window:
            del kg.relations[key]
            report.deleted += 1
        elif age > soft_window:
            rel.confidence *= math.exp(-decay_rate * (age - soft_window))
            report.decayed += 1
    return report


def create_snapshot(kg: KnowledgeGraph, tag: str, note: str, now: datetime) -> SnapshotRecord:
    """Record a snapshot boundary; duplicate tags are an error. Items carrying
    the store's current episode tag get labeled with the snapshot tag."""
    if any(s.tag == tag for s in kg.snapshots):
        raise ValueError("snapshot exists")
    record = SnapshotRecord(tag=tag, timestamp=now, note=note)
    kg.snapshots.append(record)
    if kg.last_episode is not None:
        for ent in kg.entities.values():
            if ent.episode_tag == kg.last_episode:
                ent.snapshot = tag
        for rel in kg.relations.values():
            if rel.episode_tag == kg.last_episode:
                rel.snapshot = tag
    return record


def validate_graph(kg: KnowledgeGraph, schema: Schema | None = None) -> list[ConstraintViolation]:
    """Complete list of invariant/schema violations; empty iff the store is
    consistent with the (possibly open) schema."""
    schema = schema if schema is not None else kg.schema
    out: list[ConstraintViolation] = []
    seen_name_type: dict[tuple[str, str], str] = {}
    for eid in sorted(kg.entities):
        ent = kg.entities[eid]
        nk = (ent.name, ent.etype)
        if nk in seen_name_type:
            out.append(
                ConstraintViolation("duplicate_key", eid, f"(name, etype) {nk} already used by {seen_name_type[nk]}")
            )
        else:
            seen_name_type[nk] = eid
        if schema is not None and ent.etype not in schema.entity_types:
            out.append(ConstraintViolation("invalid_entity_type", eid, ent.etype))
    whitelist = set(schema.selfloop_whitelist) if schema is not None else None
    for kind, rows in (("relation", kg.relations), ("staged", kg.staged)):
        for key in sorted(rows):
            row = rows[key]
            keystr = f"{kind}:{key[0]}->{key[1]}:{key[2]}"
            if row.src_id not in kg.entities or row.dst_id not in kg.entities:
                out.append(ConstraintViolation("orphaned_endpoint", keystr, "endpoint id not in store"))
            if schema is not None and row.rel_type not in schema.relation_types:
                out.append(ConstraintViolation("invalid_relation_type", keystr, row.rel_type))
            if row.src_id == row.dst_id and (whitelist is not None and row.rel_type not in whitelist):
                out.append(ConstraintViolation("self_loop", keystr, row.rel_type))
    return out


def graph_view(kg: KnowledgeGraph) -> GraphView:
    """Undirected 0/1 view: vertices are all entities, edges are promoted
    relations (staged rows excluded)."""
    edges = [(r.src_id, r.dst_id) for r in kg.relations.values()]
    return GraphView.from_edges(kg.entities.keys(), edges)


# ---------------------------------------------------------------------------
# persistence (line-delimited JSON)


def _dt_to_wire(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _dt_from_wire(s: str) -> datetime:
    return datetime.fromisoformat(s.replace("Z", "+00:00")).astimezone(timezone.utc)


def save_store(kg: KnowledgeGraph, path: str) -> None:
    lines: list[str] = []
    for eid in sorted(kg.entities):
        e = kg.entities[eid]
        lines.append(
            json.dumps(
                {
                    "kind": "entity",
                    "id": e.id,
                    "name": e.name,
                    "etype": e.etype,
                    "created_at": _dt_to_wire(e.created_at),
                    "last_seen": _dt_to_wire(e.last_seen),
                    "source": e.source,
                    "episode_tag": e.episode_tag,
                    "snapshot": e.snapshot,
                },
                sort_keys=True,
            )
        )
    for key in sorted(kg.relations):
        r = kg.relations[key]
        lines.append(
            json.dumps(
                {
                    "kind": "relation",
                    "src_id": r.src_id,
                    "dst_id": r.dst_id,
                    "rel_type": r.rel_type,
                    "confidence": r.confidence,
                    "evidence": r.evidence,
                    "created_at": _dt_to_wire(r.created_at),
                    "last_seen": _dt_to_wire(r.last_seen),
                    "episode_tag": r.episode_tag,
                    "snapshot": r.snapshot,
                },
                sort_keys=True,
            )
        )
    for key in sorted(kg.staged):
        p = kg.staged[key]
        lines.append(
            json.dumps(
                {
                    "kind": "staged",
                    "src_id": p.src_id,
                    "dst_id": p.dst_id,
                    "rel_type": p.rel_type,
                    "confidence": p.confidence,
                    "votes": p.votes,
                    "sources": p.sources,
                    "episode_tag": p.episode_tag,
                },
                sort_keys=True,
            )
        )
    for s in kg.snapshots:
        lines.append(
            json.dumps(
                {
                    "kind": "snapshot",
                    "tag": s.tag,
                    "timestamp": _dt_to_wire(s.timestamp),
                    "note": s.note,
                },
                sort_keys=True,
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_store(path: str, schema: Schema | None = None) -> KnowledgeGraph:
    kg = KnowledgeGraph(schema=schema)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "entity":
                ent = Entity(
                    id=rec["id"],
                    name=rec["name"],
                    etype=rec["etype"],
                    created_at=_dt_from_wire(rec["created_at"]),
                    last_seen=_dt_from_wire(rec["last_seen"]),
                    source=rec["source"],
                    episode_tag=rec.get("episode_tag"),
                    snapshot=rec.get("snapshot"),
                )
                kg.entities[ent.id] = ent
            elif kind == "relation":
                rel = Relation(
                    src_id=rec["src_id"],
                    dst_id=rec["dst_id"],
                    rel_type=rec["rel_type"],
                    confidence=float(rec["confidence"]),
                    evidence=list(rec["evidence"]),
                    created_at=_dt_from_wire(rec["created_at"]),
                    last_seen=_dt_from_wire(rec["last_seen"]),
                    episode_tag=rec.get("episode_tag"),
                    snapshot=rec.get("snapshot"),
                )
                kg.relations[rel.key] = rel
            elif kind == "staged":
                row = StagedRelation(
                    src_id=rec["src_id"],
                    dst_id=rec["dst_id"],
                    rel_type=rec["rel_type"],
                    confidence=float(rec["confidence"]),
                    votes=int(rec["votes"]),
                    sources=list(rec["sources"]),
                    episode_tag=rec.get("episode_tag"),
                )
                kg.staged[row.key] = row
            elif kind == "snapshot":
                kg.snapshots.append(
                    SnapshotRecord(
                        tag=rec["tag"],
                        timestamp=_dt_from_wire(rec["timestamp"]),
                        note=rec.get("note", ""),
                    )
                )
            else:
                raise ValueError(f"unknown record kind {kind!r} at line {line_no}")
    return kg


# ---------------------------------------------------------------------------
# Cypher export


def sanitize_label(name: str) -> str:
    out = re.sub(r"[^0-9A-Za-z_]", "_", name)
    if not out or out[0].isdigit():
        out = "T_" + out
    return out


def _q(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _lit(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, datetime):
        return f"datetime({_q(_dt_to_wire(value))})"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_lit(v) for v in value) + "]"
    return _q(str(value))


def export_cypher(kg: KnowledgeGraph) -> str:
    """Re-runnable script: uniqueness constraints plus one MERGE per record,
    parameters inlined as literals. Type names become extra labels after
    sanitization; stored property values keep the original names."""
    lines = [
        "CREATE CONSTRAINT entity_id_unique IF NOT EXISTS FOR (n:Entity) REQUIRE n.id IS UNIQUE;",
        "CREATE CONSTRAINT entity_name_type_unique IF NOT EXISTS FOR (n:Entity) REQUIRE (n.name, n.type) IS UNIQUE;",
    ]
    for eid in sorted(kg.entities):
        e = kg.entities[eid]
        props = (
            f"SET n.name = {_lit(e.name)}, n.type = {_lit(e.etype)}, "
            f"n.created_at = {_lit(e.created_at)}, n.last_seen = {_lit(e.last_seen)}, "
            f"n.source = {_lit(e.source)}, n.episode_tag = {_lit(e.episode_tag)}, "
            f"n.snapshot = {_lit(e.snapshot)} SET n:`{sanitize_label(e.etype)}`"
        )
        lines.append(f"MERGE (n:Entity {{id: {_lit(e.id)}}}) {props};")
    for key in sorted(kg.relations):
        r = kg.relations[key]
        lines.append(
            f"MATCH (s:Entity {{id: {_lit(r.src_id)}}}) MATCH (o:Entity {{id: {_lit(r.dst_id)}}}) "
            f"MERGE (s)-[r:REL {{src_id: {_lit(r.src_id)}, dst_id: {_lit(r.dst_id)}, rel_type: {_lit(r.rel_type)}}}]->(o) "
            f"SET r.confidence = {_lit(r.confidence)}, r.evidence = {_lit(r.evidence)}, "
            f"r.created_at = {_lit(r.created_at)}, r.last_seen = {_lit(r.last_seen)}, "
            f"r.episode_tag = {_lit(r.episode_tag)}, r.snapshot = {_lit(r.snapshot)};"
        )
    for key in sorted(kg.staged):
        p = kg.staged[key]
        lines.append(
            f"MATCH (s:Entity {{id: {_lit(p.src_id)}}}) MATCH (o:Entity {{id: {_lit(p.dst_id)}}}) "
            f"MERGE (s)-[p:PENDING_REL {{src_id: {_lit(p.src_id)}, dst_id: {_lit(p.dst_id)}, rel_type: {_lit(p.rel_type)}}}]->(o) "
            f"SET p.confidence = {_lit(p.confidence)}, p.votes = {_lit(p.votes)}, "
            f"p.sources = {_lit(p.sources)}, p.episode_tag = {_lit(p.episode_tag)};"
        )
    for s in kg.snapshots:
        lines.append(
            f"MERGE (ss:GraphSnapshot {{sid: {_lit(s.tag)}}}) "
            f"SET ss.created_at = {_lit(s.timestamp)}, ss.note = {_lit(s.note)};"
        )
    return "\n".join(lines) + "\n"
