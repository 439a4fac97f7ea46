"""The six knowledge-graph tools behind the JSON interface.

Every function returns a plain dict matching the response schema shipped
under ``kgrenv/schemas``.  Inputs arrive in wire shape: ``extracted_kg``
as ``{"entities": {...}, "relations": {...}}`` and ``schema`` as
``{"entity_schema": [...], "relation_schema": [...]}``.
"""

from __future__ import annotations

import json
import math
import re
import time
from datetime import datetime
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping, Sequence

import jsonschema

from .extraction import ExtractionResult, parse_extraction
from .store import KnowledgeGraph, entity_id, upsert_extraction, utc_now

TOOL_NAMES = (
    "query_extraction_density",
    "query_coverage_feedback",
    "query_quality_metrics",
    "query_iterative_feedback",
    "query_entity_disambiguation",
    "query_kg_storage",
)

ASPECTS = ("consistency", "completeness", "accuracy", "schema_compliance")


@lru_cache(maxsize=None)
def load_schema(tool: str, direction: str) -> dict:
    if tool not in TOOL_NAMES:
        raise KeyError(f"unknown tool {tool!r}")
    if direction not in ("request", "response"):
        raise KeyError(f"direction must be request or response, got {direction!r}")
    path = resources.files("kgrenv") / "schemas" / f"{tool}.{direction}.json"
    return json.loads(path.read_text(encoding="utf-8"))


def validate_payload(tool: str, direction: str, payload: Mapping[str, Any]) -> None:
    jsonschema.validate(payload, load_schema(tool, direction))


def _parse_schema(schema: Mapping[str, Any]) -> tuple[list[str], list[str]]:
    ent = list(schema.get("entity_schema", []))
    rel = list(schema.get("relation_schema", []))
    return ent, rel


_PUNCT = ".,;:!?()[]{}\"'`"


def _tokens(text: str) -> list[str]:
    return [t for t in (piece.strip(_PUNCT) for piece in text.split()) if t]


def _is_technical(token: str) -> bool:
    if len(token) >= 2 and token.isupper():
        return True
    if any(ch.isdigit() for ch in token):
        return True
    if "-" in token or "_" in token or "/" in token:
        return True
    return any(ch.isupper() for ch in token[1:])


def _text_stats(text: str) -> dict:
    tokens = _tokens(text)
    sentences = [s for s in re.split(r"[.!?]+", text) if s.strip()]
    return {
        "token_count": len(text.split()),
        "sentence_count": max(1, len(sentences)),
        "word_count": len(tokens),
        "character_count": len(text),
    }


def _density_internals(
    text: str,
    entity_types: Sequence[str],
    relation_types: Sequence[str],
    kg: ExtractionResult,
) -> dict:
    stats = _text_stats(text)
    tokens = _tokens(text)
    technical = sum(1 for t in tokens if _is_technical(t))
    mentions = sum(1 for t in tokens if t and t[0].isupper())
    avg_sentence = stats["word_count"] / stats["sentence_count"]
    tech_ratio = technical / max(1, stats["token_count"])
    total_types = len(entity_types) + len(relation_types)
    complexity = 0.4 * tech_ratio + 0.3 * min(avg_sentence / 25.0, 1.0) + 0.3 * min(
        total_types / 30.0, 1.0
    )
    complexity = min(1.0, max(0.0, complexity))

    ent_factor = 1.0 + 0.25 * math.log(1 + len(entity_types))
    rel_factor = 1.0 + 0.25 * math.log(1 + len(relation_types))
    exp_ent = 8.0 * ent_factor * (0.5 + complexity)
    exp_rel = 5.0 * rel_factor * (0.5 + complexity)

    total_e = kg.entity_count()
    total_r = kg.relation_count()
    per_1k = 1000.0 / max(1, stats["token_count"])
    ent_per_1k = total_e * per_1k
    rel_per_1k = total_r * per_1k

    dr_e = ent_per_1k / exp_ent
    dr_r = rel_per_1k / exp_rel
    hi, lo = max(dr_e, dr_r), min(dr_e, dr_r)
    balance = lo / hi if hi > 0 else 0.0
    overall = 0.5 * min(dr_e, 1.0) + 0.5 * min(dr_r, 1.0)
    tau_adq = 0.65 + 0.15 * complexity

    ent_min_met = ent_per_1k >= 0.5 * exp_ent
    rel_min_met = rel_per_1k >= 0.5 * exp_rel
    over = ent_per_1k > 2.5 * exp_ent or rel_per_1k > 2.5 * exp_rel
    lacking = (
        not ent_min_met or not rel_min_met or balance < 0.3 or overall < tau_adq
    )
    needs_more = lacking and not over

    if over:
        level = "over_extraction"
    elif not ent_min_met and not rel_min_met:
        level = "insufficient"
    elif needs_more:
        level = "moderate"
    elif overall >= 0.9 and ent_per_1k >= exp_ent and rel_per_1k >= exp_rel:
        level = "excellent"
    else:
        level = "adequate"

    return {
        "text_stats": stats,
        "current_density": {
            "total_entities": total_e,
            "total_relations": total_r,
            "total_kg_elements": total_e + total_r,
            "entity_type_count": sum(1 for v in kg.entities.values() if v),
            "relation_type_count": sum(1 for v in kg.relations.values() if v),
            "entities_per_1k_tokens": ent_per_1k,
            "relations_per_1k_tokens": rel_per_1k,
            "kg_density_per_1k_tokens": (total_e + total_r) * per_1k,
            "entity_relation_ratio": total_e / total_r if total_r else float(total_e),
        },
        "expected_density": {
            "expected_entities_per_1k": exp_ent,
            "expected_relations_per_1k": exp_rel,
            "min_entities_per_1k": 0.5 * exp_ent,
            "min_relations_per_1k": 0.5 * exp_rel,
            "max_entities_per_1k": 2.5 * exp_ent,
            "max_relations_per_1k": 2.5 * exp_rel,
            "schema_complexity": total_types,
            "entity_complexity_factor": ent_factor,
            "relation_complexity_factor": rel_factor,
        },
        "complexity_features": {
            "entity_mentions": mentions,
            "avg_sentence_length": avg_sentence,
            "technical_terms": technical,
            "schema_entity_types": len(entity_types),
            "schema_relation_types": len(relation_types),
            "complexity_score": complexity,
        },
        "density_assessment": {
            "entity_density_ratio": dr_e,
            "relation_density_ratio": dr_r,
            "overall_density_score": overall,
            "assessment_level": level,
            "is_adequate": not needs_more and not over,
            "meets_minimum_thresholds": ent_min_met and rel_min_met,
            "potential_over_extraction": over,
            "balance_score": balance,
        },
        "needs_more_extraction": needs_more,
    }


def query_extraction_density(
    text: str,
    schema: Mapping[str, Any],
    extracted_kg: Mapping[str, Any],
    domain: str | None = None,
) -> dict:
    if not text:
        raise ValueError("no text")
    entity_types, relation_types = _parse_schema(schema)
    if not entity_types and not relation_types:
        raise ValueError("no schema")
    kg = parse_extraction(extracted_kg)
    body = _density_internals(text, entity_types, relation_types, kg)

    recs: list[str] = []
    assess = body["density_assessment"]
    exp = body["expected_density"]
    cur = body["current_density"]
    if assess["potential_over_extraction"]:
        recs.append(
            "Extraction exceeds the maximum density thresholds; prune "
            "low-confidence items instead of extracting more."
        )
    if body["needs_more_extraction"]:
        if cur["entities_per_1k_tokens"] < exp["min_entities_per_1k"]:
            recs.append(
                f"Entity density {cur['entities_per_1k_tokens']:.2f}/1k is below "
                f"the minimum {exp['min_entities_per_1k']:.2f}/1k; extract more entities."
            )
        if cur["relations_per_1k_tokens"] < exp["min_relations_per_1k"]:
            recs.append(
                f"Relation density {cur['relations_per_1k_tokens']:.2f}/1k is below "
                f"the minimum {exp['min_relations_per_1k']:.2f}/1k; extract more relations."
            )
        if assess["balance_score"] < 0.3:
            recs.append(
                "Entity and relation extraction are imbalanced; extract more of "
                "the lagging kind."
            )
        if assess["overall_density_score"] < 0.65 + 0.15 * body[
            "complexity_features"
        ]["complexity_score"]:
            recs.append(
                "Overall density is below the complexity-adjusted adequacy "
                "threshold; continue extraction."
            )
    if not recs:
        recs.append("Extraction density is adequate; proceed to entity disambiguation.")
    body["recommendations"] = recs
    return body


def query_coverage_feedback(
    text: str,
    schema: Mapping[str, Any],
    extracted_kg: Mapping[str, Any],
    priority_types: Sequence[str] | None = None,
) -> dict:
    entity_types, relation_types = _parse_schema(schema)
    if not entity_types and not relation_types:
        raise ValueError("no schema")
    kg = parse_extraction(extracted_kg)

    covered_e = [t for t in entity_types if kg.entities.get(t)]
    covered_r = [t for t in relation_types if kg.relations.get(t)]
    missing_e = [t for t in entity_types if t not in covered_e]
    missing_r = [t for t in relation_types if t not in covered_r]
    ratio_e = len(covered_e) / len(entity_types) if entity_types else 1.0
    ratio_r = len(covered_r) / len(relation_types) if relation_types else 1.0
    score = 0.6 * ratio_e + 0.4 * ratio_r

    total_types = len(entity_types) + len(relation_types)
    if total_types <= 5:
        qual = "simple"
    elif total_types <= 15:
        qual = "moderate"
    else:
        qual = "complex"

    prio = list(priority_types) if priority_types else []
    covered_set = set(covered_e) | set(covered_r)
    covered_prio = [t for t in prio if t in covered_set]
    missing_prio = [t for t in prio if t not in covered_set]
    prio_ratio = len(covered_prio) / len(prio) if prio else 1.0

    recs: list[str] = []
    for t in missing_prio:
        recs.append(f"Priority type '{t}' has no extracted instances; extract it first.")
    for t in missing_e:
        if t not in missing_prio:
            recs.append(f"No entities of type '{t}' extracted; scan the text for them.")
    for t in missing_r:
        if t not in missing_prio:
            recs.append(f"No relations of type '{t}' extracted; scan the text for them.")
    if not recs:
        recs.append("All schema types are covered; coverage is complete.")

    return {
        "schema_info": {
            "entity_types": list(entity_types),
            "relation_types": list(relation_types),
            "total_types": total_types,
            "schema_complexity": qual,
        },
        "type_coverage": {
            "entity_coverage": {
                "covered_types": covered_e,
                "total_types": len(entity_types),
                "coverage_ratio": ratio_e,
            },
            "relation_coverage": {
                "covered_types": covered_r,
                "total_types": len(relation_types),
                "coverage_ratio": ratio_r,
            },
            "overall_coverage": score,
        },
        "missing_types": {
            "missing_entity_types": missing_e,
            "missing_relation_types": missing_r,
        },
        "priority_analysis": {
            "has_priority": bool(prio),
            "priority_types": prio,
            "covered_priority": covered_prio,
            "missing_priority": missing_prio,
            "priority_coverage_ratio": prio_ratio,
        },
        "coverage_score": score,
        "recommendations": recs,
    }


def _duplicate_entities(kg: ExtractionResult) -> int:
    dups = 0
    for etype, names in kg.entities.items():
        seen: set[str] = set()
        for name in names:
            key = name.lower()
            if key in seen:
                dups += 1
            seen.add(key)
    return dups


def _duplicate_relations(kg: ExtractionResult) -> int:
    dups = 0
    for rtype, triples in kg.relations.items():
        seen: set[tuple[str, str]] = set()
        for t in triples:
            key = (t.subject.lower(), t.object.lower())
            if key in seen:
                dups += 1
            seen.add(key)
    return dups


def query_quality_metrics(
    extracted_kg: Mapping[str, Any],
    schema: Mapping[str, Any],
    text: str,
    evaluation_aspects: Sequence[str] | None = None,
) -> dict:
    entity_types, relation_types = _parse_schema(schema)
    kg = parse_extraction(extracted_kg)
    aspects = list(evaluation_aspects) if evaluation_aspects else list(ASPECTS)

    total_e = kg.entity_count()
    total_r = kg.relation_count()
    total = total_e + total_r

    # consistency
    dup_e = _duplicate_entities(kg)
    dup_r = _duplicate_relations(kg)
    conflicts = 0  # no mutually-exclusive relation metadata in Schema
    naming = 1.0 - dup_e / total_e if total_e else 1.0
    rel_cons = 1.0 - dup_r / total_r if total_r else 1.0
    cons_score = 1.0 - (dup_e + dup_r + conflicts) / total if total else 1.0
    cons_issues = []
    if dup_e:
        cons_issues.append(f"{dup_e} duplicate entity mention(s) within a type.")
    if dup_r:
        cons_issues.append(f"{dup_r} duplicate relation triple(s) within a type.")
    consistency = {
        "score": cons_score,
        "issues": cons_issues,
        "details": {
            "entity_naming_consistency": naming,
            "relation_consistency": rel_cons,
            "duplicate_entities": dup_e,
            "conflicting_relations": conflicts,
        },
    }

    # completeness
    covered_e = [t for t in entity_types if kg.entities.get(t)]
    covered_r = [t for t in relation_types if kg.relations.get(t)]
    etc = len(covered_e) / len(entity_types) if entity_types else 1.0
    rtc = len(covered_r) / len(relation_types) if relation_types else 1.0
    density_score = _density_internals(text, entity_types, relation_types, kg)[
        "density_assessment"
    ]["overall_density_score"] if text else 0.0
    comp_score = 0.5 * (0.6 * etc + 0.4 * rtc) + 0.5 * density_score
    missing_e = [t for t in entity_types if t not in covered_e]
    missing_r = [t for t in relation_types if t not in covered_r]
    comp_issues = []
    if missing_e:
        comp_issues.append(f"Missing entity types: {', '.join(missing_e)}.")
    if missing_r:
        comp_issues.append(f"Missing relation types: {', '.join(missing_r)}.")
    completeness = {
        "score": comp_score,
        "issues": comp_issues,
        "details": {
            "missing_entity_types": missing_e,
            "missing_relation_types": missing_r,
            "entity_type_coverage": etc,
            "relation_type_coverage": rtc,
            "extraction_density": density_score,
        },
    }

    # accuracy
    ents_missing = sum(
        1
        for _, names in kg.entities.items()
        for name in names
        if name not in text
    )
    rels_missing = sum(
        1
        for _, triples in kg.relations.items()
        for t in triples
        if t.subject not in text or t.object not in text
    )
    in_text = total - ents_missing - rels_missing
    acc_score = in_text / total if total else 0.0
    acc_issues = []
    if ents_missing:
        acc_issues.append(f"{ents_missing} extracted entity name(s) not found in the text.")
    if rels_missing:
        acc_issues.append(f"{rels_missing} relation(s) reference names not found in the text.")
    if total == 0:
        acc_issues.append("Nothing extracted; accuracy cannot be established.")
    accuracy = {
        "score": acc_score,
        "issues": acc_issues,
        "details": {
            "entities_not_in_text": ents_missing,
            "relations_not_in_text": rels_missing,
            "boundary_errors": 0,
            "type_misclassifications": 0,
        },
    }

    # schema compliance
    ent_type_set = set(entity_types)
    rel_type_set = set(relation_types)
    valid_e = sum(len(v) for t, v in kg.entities.items() if t in ent_type_set)
    invalid_e = total_e - valid_e
    valid_r = sum(len(v) for t, v in kg.relations.items() if t in rel_type_set)
    invalid_r = total_r - valid_r
    structure = sum(1 for _, names in kg.entities.items() for n in names if not n)
    structure += sum(
        1
        for _, triples in kg.relations.items()
        for t in triples
        if not t.subject or not t.object
    )
    compliant = valid_e + valid_r
    comp_total = total + structure
    schema_score = compliant / comp_total if comp_total else 1.0
    schema_issues = []
    if invalid_e:
        schema_issues.append(f"{invalid_e} entity item(s) under types outside the schema.")
    if invalid_r:
        schema_issues.append(f"{invalid_r} relation item(s) under types outside the schema.")
    if structure:
        schema_issues.append(f"{structure} item(s) with empty names.")
    schema_compliance = {
        "score": schema_score,
        "issues": schema_issues,
        "details": {
            "valid_entity_types": valid_e,
            "invalid_entity_types": invalid_e,
            "valid_relation_types": valid_r,
            "invalid_relation_types": invalid_r,
            "structure_violations": structure,
        },
    }

    results = {
        "consistency": consistency,
        "completeness": completeness,
        "accuracy": accuracy,
        "schema_compliance": schema_compliance,
    }
    overall = (
        0.25 * cons_score
        + 0.30 * comp_score
        + 0.30 * acc_score
        + 0.15 * schema_score
    )
    if overall >= 0.9:
        level = "excellent"
    elif overall >= 0.8:
        level = "good"
    elif overall >= 0.7:
        level = "fair"
    elif overall >= 0.6:
        level = "poor"
    else:
        level = "very_poor"

    suggestions = []
    if cons_score < 0.8:
        suggestions.append("Deduplicate entity mentions and standardize names.")
    if comp_score < 0.8:
        suggestions.append("Cover the missing schema types and raise extraction density.")
    if acc_score < 0.8:
        suggestions.append("Ground every extracted name in the source text.")
    if schema_score < 0.8:
        suggestions.append("Keep extracted items within the declared schema types.")
    if not suggestions:
        suggestions.append("Quality is high; no corrective action needed.")

    return {
        "evaluation_aspects": aspects,
        "evaluation_results": results,
        "overall_score": overall,
        "quality_level": level,
        "improvement_suggestions": suggestions,
        "detailed_metrics": {
            name: {
                "score": block["score"],
                "details": block["details"],
                "issues": block["issues"],
            }
            for name, block in results.items()
        },
    }


_STRATEGIES = [
    {
        "type": "quality_focus",
        "description": "Improve accuracy and consistency of what is already extracted.",
        "actions": [
            "Re-check extracted names against the source text.",
            "Merge duplicate entity mentions.",
        ],
    },
    {
        "type": "coverage_expansion",
        "description": "Extract instances of schema types that are still missing.",
        "actions": [
            "Scan the text for entities of the missing types.",
            "Add relations connecting newly found entities.",
        ],
    },
    {
        "type": "balanced_improvement",
        "description": "Raise quality and coverage together in small steps.",
        "actions": [
            "Alternate between adding new items and cleaning existing ones.",
        ],
    },
    {
        "type": "pattern_specific",
        "description": "Target the recurring problem patterns detected in the history.",
        "actions": [
            "Apply the suggested solution for each detected pattern.",
        ],
    },
]


def query_iterative_feedback(
    extraction_history: Sequence[Mapping[str, Any]],
    extracted_kg: Mapping[str, Any],
    text: str,
    schema: Mapping[str, Any],
    feedback_history: Sequence[Mapping[str, Any]] | None = None,
    max_iterations: int = 5,
) -> dict:
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    sequence = [parse_extraction(e) for e in extraction_history]
    sequence.append(parse_extraction(extracted_kg))
    current_iteration = len(sequence)

    qualities = [
        query_quality_metrics(kg.to_wire(), schema, text)["overall_score"]
        for kg in sequence
    ]
    trend_vals = [
        (qualities[i] - qualities[i - 1]) / max(qualities[i - 1], 1e-9) * 100.0
        for i in range(1, len(qualities))
    ]
    recent = trend_vals[-1] if trend_vals else 0.0
    avg_imp = sum(trend_vals) / len(trend_vals) if trend_vals else 0.0

    if current_iteration < 2:
        effectiveness = "insufficient_data"
    elif avg_imp > 10.0:
        effectiveness = "high"
    elif avg_imp >= 5.0:
        effectiveness = "medium"
    elif avg_imp > 0.0:
        effectiveness = "low"
    else:
        effectiveness = "stagnant"

    if recent > 1.0:
        trend = "improving"
    elif recent < -1.0:
        trend = "declining"
    else:
        trend = "stagnant"

    if current_iteration < 2:
        convergence = "insufficient_data"
    elif len(trend_vals) >= 2 and abs(trend_vals[-1]) < 1.0 and abs(trend_vals[-2]) < 1.0:
        convergence = "converged"
    elif abs(recent) < 5.0:
        convergence = "converging"
    else:
        convergence = "exploring"

    # problem patterns over the whole sequence
    entity_types, relation_types = _parse_schema(schema)
    dup_iters = sum(
        1 for kg in sequence if _duplicate_entities(kg) + _duplicate_relations(kg) > 0
    )
    cur = sequence[-1]
    missing_now = [t for t in entity_types if not cur.entities.get(t)] + [
        t for t in relation_types if not cur.relations.get(t)
    ]
    volumes = [kg.item_count() for kg in sequence]
    deltas = [volumes[i] - volumes[i - 1] for i in range(1, len(volumes))]
    sign_changes = sum(
        1
        for i in range(1, len(deltas))
        if deltas[i] * deltas[i - 1] < 0
    )

    patterns: list[str] = []
    issues: list[str] = []
    solutions: list[str] = []
    freq: dict[str, int] = {}
    severity: dict[str, str] = {}
    if dup_iters:
        patterns.append("duplicates")
        issues.append("Duplicate items recur across iterations.")
        solutions.append("Deduplicate before re-extraction.")
        freq["duplicates"] = dup_iters
        severity["duplicates"] = "medium"
    if missing_now:
        patterns.append("missing_types")
        issues.append("Schema types remain uncovered after iteration.")
        solutions.append("Target the uncovered types explicitly.")
        freq["missing_types"] = len(missing_now)
        severity["missing_types"] = "high"
    if sign_changes:
        patterns.append("density_oscillation")
        issues.append("Extraction volume oscillates between iterations.")
        solutions.append("Stabilize by keeping confirmed items across rounds.")
        freq["density_oscillation"] = sign_changes
        severity["density_oscillation"] = "low"

    third = math.ceil(max_iterations / 3)
    if current_iteration <= third:
        focus = "coverage_expansion"
    elif current_iteration <= 2 * third:
        focus = "quality_improvement"
    else:
        focus = "refinement"

    if trend == "declining":
        prio_type = "quality_focus"
    elif missing_now:
        prio_type = "coverage_expansion"
    elif patterns:
        prio_type = "pattern_specific"
    else:
        prio_type = "balanced_improvement"
    priority = next(s for s in _STRATEGIES if s["type"] == prio_type)

    stop = (
        current_iteration >= max_iterations
        or (trend == "declining" and current_iteration <= third)
        or (current_iteration >= 2 and recent < 1.0)
    )
    should_continue = not stop

    if should_continue:
        next_steps = list(priority["actions"])
        next_steps.append(f"Current focus phase: {focus.replace('_', ' ')}.")
    else:
        next_steps = [
            "Run query_quality_metrics for a final assessment.",
            "Invoke query_entity_disambiguation before storage.",
        ]

    return {
        "progress_analysis": {
            "trend": trend,
            "recent_improvement": recent,
            "overall_quality_change": qualities[-1] - qualities[0],
            "extraction_volume_change": float(volumes[-1] - volumes[0]),
            "convergence_status": convergence,
        },
        "problem_patterns": {
            "recurring_issues": issues,
            "pattern_types": patterns,
            "suggested_solutions": solutions,
            "issue_frequency": freq,
            "severity_levels": severity,
        },
        "optimization_strategy": {
            "strategies": [dict(s) for s in _STRATEGIES],
            "priority_strategy": dict(priority),
            "iteration_focus": focus,
        },
        "iteration_effectiveness": {
            "effectiveness": effectiveness,
            "average_improvement": avg_imp,
            "improvement_trend": trend_vals,
            "total_iterations": current_iteration,
        },
        "should_continue_iteration": should_continue,
        "current_iteration": current_iteration,
        "max_iterations": max_iterations,
        "next_steps": next_steps,
    }


def _trigrams(s: str) -> frozenset[str]:
    s = s.lower()
    if len(s) < 3:
        return frozenset((s,)) if s else frozenset()
    return frozenset(s[i : i + 3] for i in range(len(s) - 2))


def trigram_similarity(a: str, b: str) -> float:
    ta, tb = _trigrams(a), _trigrams(b)
    if not ta and not tb:
        return 1.0
    union = ta | tb
    if not union:
        return 0.0
    return len(ta & tb) / len(union)


def query_entity_disambiguation(
    extracted_kg: Mapping[str, Any],
    store: KnowledgeGraph,
    strategy: str = "exact_match",
    similarity_threshold: float = 0.8,
    context: str | None = None,
) -> dict:
    if strategy not in ("exact_match", "semantic_similarity"):
        raise ValueError("invalid strategy")
    kg = parse_extraction(extracted_kg)

    by_type: dict[str, list] = {}
    for ent in store.entities.values():
        by_type.setdefault(ent.etype, []).append(ent)
    for ents in by_type.values():
        ents.sort(key=lambda e: (e.name, e.id))

    queried: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for etype, names in kg.entities.items():
        for name in names:
            key = (etype, name)
            if key not in seen:
                seen.add(key)
                queried.append(key)

    results = []
    matched_ids: list[str] = []
    confidences: list[float] = []
    for etype, name in queried:
        pool = by_type.get(etype, [])
        if strategy == "exact_match":
            scored = [
                (1.0, ent) for ent in pool if ent.name.lower() == name.lower()
            ]
        else:
            scored = [
                (trigram_similarity(name, ent.name), ent) for ent in pool
            ]
            scored = [(s, ent) for s, ent in scored if s >= similarity_threshold]
        scored.sort(key=lambda pair: (-pair[0], pair[1].name, pair[1].id))
        candidates = [
            {
                "candidate": {
                    "name": ent.name,
                    "properties": {"id": ent.id, "type": ent.etype},
                },
                "confidence": sim,
            }
            for sim, ent in scored
        ]
        best = candidates[0] if candidates else None
        conf = scored[0][0] if scored else 0.0
        ok = bool(scored)
        if ok:
            matched_ids.append(scored[0][1].id)
            confidences.append(conf)
        results.append(
            {
                "original_entity": {"type": etype, "name": name},
                "candidates": candidates,
                "best_match": best,
                "is_disambiguated": ok,
                "confidence": conf,
            }
        )

    rel_results = []
    listed: set[str] = set()
    for eid in matched_ids:
        if eid in listed:
            continue
        listed.add(eid)
        ent = store.entities[eid]
        rels = []
        for key in sorted(store.relations):
            rel = store.relations[key]
            if rel.src_id != eid and rel.dst_id != eid:
                continue
            other_id = rel.dst_id if rel.src_id == eid else rel.src_id
            other = store.entities.get(other_id)
            rels.append(
                {
                    "type": rel.rel_type,
                    "target": {
                        "id": other_id,
                        "name": other.name if other else other_id,
                        "type": other.etype if other else "",
                    },
                    "properties": {
                        "confidence": rel.confidence,
                        "evidence": list(rel.evidence),
                    },
                }
            )
        rel_results.append(
            {
                "entity": {"id": ent.id, "name": ent.name, "type": ent.etype},
                "relationships": rels,
            }
        )

    total = len(queried)
    matched = sum(1 for r in results if r["is_disambiguated"])
    avg_conf = sum(confidences) / len(confidences) if confidences else 0.0
    rate = matched / total if total else 0.0
    quality = 0.6 * rate + 0.4 * avg_conf

    suggestions = []
    for r in results:
        name = r["original_entity"]["name"]
        if not r["is_disambiguated"]:
            suggestions.append(
                f"No knowledge-base match for '{name}'; consider adding it."
            )
        elif r["confidence"] < 0.9:
            suggestions.append(
                f"Match for '{name}' has confidence {r['confidence']:.2f} < 0.9; verify it."
            )
        elif r["best_match"]["candidate"]["name"] != name:
            suggestions.append(
                f"Standardize '{name}' to stored form "
                f"'{r['best_match']['candidate']['name']}'."
            )
    if not suggestions:
        suggestions.append("All entities disambiguated cleanly; no changes suggested.")

    return {
        "disambiguation_results": results,
        "relationships_results": rel_results,
        "quality_score": quality,
        "disambiguation_strategy": strategy,
        "similarity_threshold": float(similarity_threshold),
        "standardization_suggestions": suggestions,
        "summary": {
            "total_entities": total,
            "disambiguated_entities": matched,
            "disambiguation_rate": rate,
            "average_confidence": avg_conf,
            "unmatched_entities": total - matched,
        },
    }


def query_kg_storage(
    extracted_kg: Mapping[str, Any],
    store: KnowledgeGraph | None,
    now: datetime | None = None,
    source: str = "agentic_kgr_tool",
    database: str = "embedded",
) -> dict:
    kg = parse_extraction(extracted_kg, default_confidence=1.0)
    final = kg.to_wire()

    if store is None:
        phase = {
            "code": -1,
            "message": "storage layer unavailable",
            "stored_count": 0,
            "skipped_count": 0,
            "failed_count": 0,
        }
        return {
            "storage_status": {
                "overall_success": False,
                "entities_storage": dict(phase),
                "relations_storage": dict(phase),
            },
            "storage_details": {
                "total_entities": kg.entity_count(),
                "total_relations": kg.relation_count(),
                "entity_types_processed": [],
                "relation_types_processed": [],
                "duplicates_detected": {
                    "entity_duplicates": 0,
                    "relation_duplicates": 0,
                },
                "processing_time": {
                    "entities_time": 0.0,
                    "relations_time": 0.0,
                    "total_time": 0.0,
                },
            },
            "final_kg": final,
            "storage_summary": {
                "operation_timestamp": "",
                "database_config": {"host": "none", "database": database},
                "performance_metrics": {
                    "entities_per_second": 0.0,
                    "relations_per_second": 0.0,
                    "overall_throughput": 0.0,
                },
            },
            "warnings": ["Storage layer unavailable; nothing was written."],
            "recommendations": ["Start the service with a reachable store and retry."],
        }

    stamp = now or utc_now()
    t0 = time.perf_counter()
    ent_report = upsert_extraction(
        store,
        ExtractionResult(entities=dict(kg.entities)),
        source,
        stamp,
        episode=store.last_episode,
    )
    t1 = time.perf_counter()
    rel_report = upsert_extraction(store, kg, source, stamp, episode=store.last_episode)
    t2 = time.perf_counter()

    # entity failures repeat in the second pass; report each phase's own kind
    warnings: list[str] = []
    for kind, reason, detail in ent_report.failures:
        if kind == "entity":
            warnings.append(f"Entity rejected ({reason}): {detail}")
    for kind, reason, detail in rel_report.failures:
        if kind == "relation" and reason == "orphaned reference":
            warnings.append(f"Missing entity references: {detail}")
        elif kind == "relation":
            warnings.append(f"Relation rejected ({reason}): {detail}")

    e_types = sorted(
        {
            etype
            for etype, names in kg.entities.items()
            if any(entity_id(n, etype) in store.entities for n in names)
        }
    )
    r_types = sorted(
        {
            rtype
            for rtype, triples in kg.relations.items()
            if any(k[2] == rtype for k in store.relations)
        }
    )

    ent_phase = {
        "code": 0,
        "message": "entity storage completed",
        "stored_count": ent_report.entities_stored,
        "skipped_count": ent_report.entities_skipped,
        "failed_count": ent_report.entities_failed,
    }
    rel_phase = {
        "code": 0,
        "message": "relation storage completed",
        "stored_count": rel_report.relations_stored,
        "skipped_count": rel_report.relations_skipped,
        "failed_count": rel_report.relations_failed,
    }
    elapsed_e = t1 - t0
    elapsed_r = t2 - t1
    total_elapsed = t2 - t0
    n_items = kg.item_count()

    recs = (
        ["Review the failed items before retrying storage."]
        if warnings
        else ["Storage complete; no follow-up needed."]
    )

    return {
        "storage_status": {
            "overall_success": True,
            "entities_storage": ent_phase,
            "relations_storage": rel_phase,
        },
        "storage_details": {
            "total_entities": kg.entity_count(),
            "total_relations": kg.relation_count(),
            "entity_types_processed": e_types,
            "relation_types_processed": r_types,
            "duplicates_detected": {
                "entity_duplicates": ent_report.entities_skipped,
                "relation_duplicates": rel_report.relations_skipped,
            },
            "processing_time": {
                "entities_time": elapsed_e,
                "relations_time": elapsed_r,
                "total_time": total_elapsed,
            },
        },
        "final_kg": final,
        "storage_summary": {
            "operation_timestamp": stamp.isoformat().replace("+00:00", "Z"),
            "database_config": {"host": "embedded", "database": database},
            "performance_metrics": {
                "entities_per_second": kg.entity_count() / max(elapsed_e, 1e-9),
                "relations_per_second": kg.relation_count() / max(elapsed_r, 1e-9),
                "overall_throughput": n_items / max(total_elapsed, 1e-9),
            },
        },
        "warnings": warnings,
        "recommendations": recs,
    }
