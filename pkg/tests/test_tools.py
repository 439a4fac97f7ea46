import math

import jsonschema
import pytest

from kgrenv import tools
from kgrenv.extraction import parse_extraction
from kgrenv.store import KnowledgeGraph, Schema, upsert_extraction, utc_now

SCHEMA = {
    "entity_schema": ["device", "protocol", "document"],
    "relation_schema": ["connects_to", "implements"],
}

WORDS = (
    "the system routes packets through layered queues while monitors sample "
    "load and emit counters for later analysis of drift under heavy traffic"
).split()
TECH = ["API-3", "RFC-3411", "SNMPv3", "ACME_CORE", "HTTP/2"]


def make_text(n_tokens, rng):
    toks = [WORDS[int(rng.integers(len(WORDS)))] for _ in range(n_tokens)]
    for i in range(0, n_tokens, 17):
        toks[i] = TECH[int(rng.integers(len(TECH)))]
    for i in range(0, n_tokens, 23):
        toks[i] = toks[i].capitalize() + "."
    return " ".join(toks)


def make_kg(n_entities, n_relations, etype="device", rtype="connects_to"):
    names = [f"Node{i}" for i in range(n_entities)]
    ref = names if names else ["P0", "P1"]
    rels = [
        {"subject": ref[i % len(ref)], "object": ref[(i + 1) % len(ref)]}
        for i in range(n_relations)
    ]
    kg = {"entities": {}, "relations": {}}
    if names:
        kg["entities"][etype] = names
    if rels:
        kg["relations"][rtype] = rels
    return kg


def vp(tool, direction, payload):
    tools.validate_payload(tool, direction, payload)
    return payload


# --- schemas -----------------------------------------------------------------


def test_all_schema_files_load():
    for name in tools.TOOL_NAMES:
        for direction in ("request", "response"):
            s = tools.load_schema(name, direction)
            assert s["$schema"] == "http://json-schema.org/draft-07/schema#"
            assert s["additionalProperties"] is False
            assert s["type"] == "object"


def test_unknown_request_field_rejected():
    req = {
        "text": "a b c",
        "schema": SCHEMA,
        "extracted_kg": {"entities": {}, "relations": {}},
        "bogus": 1,
    }
    with pytest.raises(jsonschema.ValidationError):
        tools.validate_payload("query_extraction_density", "request", req)


def test_load_schema_unknown_tool():
    with pytest.raises(KeyError):
        tools.load_schema("query_nonexistent", "request")


# --- density -----------------------------------------------------------------


def test_density_rejects_empty_inputs():
    with pytest.raises(ValueError, match="no text"):
        tools.query_extraction_density("", SCHEMA, {"entities": {}, "relations": {}})
    with pytest.raises(ValueError, match="no schema"):
        tools.query_extraction_density(
            "some text", {"entity_schema": [], "relation_schema": []}, {"entities": {}, "relations": {}}
        )


def test_density_empty_extraction_insufficient(rng):
    text = make_text(1000, rng)
    rep = vp(
        "query_extraction_density",
        "response",
        tools.query_extraction_density(text, SCHEMA, {"entities": {}, "relations": {}}),
    )
    assert rep["needs_more_extraction"] is True
    assert rep["density_assessment"]["assessment_level"] == "insufficient"
    assert rep["current_density"]["total_kg_elements"] == 0
    assert rep["text_stats"]["token_count"] == 1000


def test_density_near_expected_is_adequate(rng):
    text = make_text(1000, rng)
    probe = tools.query_extraction_density(text, SCHEMA, {"entities": {}, "relations": {}})
    n_e = round(probe["expected_density"]["expected_entities_per_1k"])
    n_r = round(probe["expected_density"]["expected_relations_per_1k"])
    rep = vp(
        "query_extraction_density",
        "response",
        tools.query_extraction_density(text, SCHEMA, make_kg(n_e, n_r)),
    )
    assert rep["needs_more_extraction"] is False
    assert rep["density_assessment"]["assessment_level"] in ("adequate", "excellent")


def test_density_over_extraction_never_needs_more(rng):
    text = make_text(40, rng)
    rep = vp(
        "query_extraction_density",
        "response",
        tools.query_extraction_density(text, SCHEMA, make_kg(30, 25)),
    )
    assert rep["density_assessment"]["potential_over_extraction"] is True
    assert rep["density_assessment"]["assessment_level"] == "over_extraction"
    assert rep["needs_more_extraction"] is False


def test_density_per_1k_arithmetic(rng):
    text = make_text(400, rng)
    rep = tools.query_extraction_density(text, SCHEMA, make_kg(7, 4))
    tokens = len(text.split())
    assert rep["text_stats"]["token_count"] == tokens
    assert rep["current_density"]["entities_per_1k_tokens"] == pytest.approx(7 * 1000.0 / tokens)
    assert rep["current_density"]["relations_per_1k_tokens"] == pytest.approx(4 * 1000.0 / tokens)
    assert rep["current_density"]["kg_density_per_1k_tokens"] == pytest.approx(11 * 1000.0 / tokens)


def test_density_decision_logic_oracle(rng):
    for _ in range(60):
        text = make_text(int(rng.integers(30, 500)), rng)
        kg = make_kg(int(rng.integers(0, 40)), int(rng.integers(0, 30)))
        rep = vp(
            "query_extraction_density",
            "response",
            tools.query_extraction_density(text, SCHEMA, kg),
        )
        cur = rep["current_density"]
        exp = rep["expected_density"]
        assess = rep["density_assessment"]
        tau = 0.65 + 0.15 * rep["complexity_features"]["complexity_score"]
        over = (
            cur["entities_per_1k_tokens"] > exp["max_entities_per_1k"]
            or cur["relations_per_1k_tokens"] > exp["max_relations_per_1k"]
        )
        lacking = (
            cur["entities_per_1k_tokens"] < exp["min_entities_per_1k"]
            or cur["relations_per_1k_tokens"] < exp["min_relations_per_1k"]
            or assess["balance_score"] < 0.3
            or assess["overall_density_score"] < tau
        )
        assert assess["potential_over_extraction"] is over
        assert rep["needs_more_extraction"] is (lacking and not over)
        dr_e = cur["entities_per_1k_tokens"] / exp["expected_entities_per_1k"]
        dr_r = cur["relations_per_1k_tokens"] / exp["expected_relations_per_1k"]
        assert assess["overall_density_score"] == pytest.approx(
            0.5 * min(dr_e, 1.0) + 0.5 * min(dr_r, 1.0)
        )


# --- coverage ----------------------------------------------------------------


def test_coverage_all_types_covered():
    kg = {
        "entities": {"device": ["A"], "protocol": ["P"], "document": ["D"]},
        "relations": {"connects_to": [{"subject": "A", "object": "A"}],
                      "implements": [{"subject": "A", "object": "P"}]},
    }
    rep = vp("query_coverage_feedback", "response",
             tools.query_coverage_feedback("t", SCHEMA, kg))
    assert rep["coverage_score"] == 1.0
    assert rep["missing_types"]["missing_entity_types"] == []
    assert rep["missing_types"]["missing_relation_types"] == []


def test_coverage_half_entities_all_relations():
    schema = {"entity_schema": ["device", "protocol"], "relation_schema": ["connects_to"]}
    kg = {
        "entities": {"device": ["A"]},
        "relations": {"connects_to": [{"subject": "A", "object": "A"}]},
    }
    rep = tools.query_coverage_feedback("t", schema, kg)
    assert rep["coverage_score"] == pytest.approx(0.6 * 0.5 + 0.4 * 1.0)
    assert rep["coverage_score"] == pytest.approx(0.7)


def test_coverage_random_recomputation(rng):
    for _ in range(40):
        ents = {t: ["X"] for t in SCHEMA["entity_schema"] if rng.random() < 0.5}
        rels = {
            t: [{"subject": "X", "object": "X"}]
            for t in SCHEMA["relation_schema"]
            if rng.random() < 0.5
        }
        rep = vp(
            "query_coverage_feedback",
            "response",
            tools.query_coverage_feedback("t", SCHEMA, {"entities": ents, "relations": rels}),
        )
        want = 0.6 * (len(ents) / 3) + 0.4 * (len(rels) / 2)
        assert rep["coverage_score"] == pytest.approx(want)


def test_coverage_monotone_under_new_type(rng):
    for _ in range(40):
        ents = {t: ["X"] for t in SCHEMA["entity_schema"] if rng.random() < 0.5}
        kg = {"entities": ents, "relations": {}}
        before = tools.query_coverage_feedback("t", SCHEMA, kg)["coverage_score"]
        missing = [t for t in SCHEMA["entity_schema"] if t not in ents]
        if not missing:
            continue
        grown = {"entities": {**ents, missing[0]: ["Y"]}, "relations": {}}
        after = tools.query_coverage_feedback("t", SCHEMA, grown)["coverage_score"]
        assert after >= before


def test_coverage_priority_analysis():
    kg = {"entities": {"device": ["A"]}, "relations": {}}
    rep = tools.query_coverage_feedback("t", SCHEMA, kg, priority_types=["device", "protocol"])
    pa = rep["priority_analysis"]
    assert pa["has_priority"] is True
    assert pa["covered_priority"] == ["device"]
    assert pa["missing_priority"] == ["protocol"]
    assert pa["priority_coverage_ratio"] == 0.5
    assert any("protocol" in r for r in rep["recommendations"])


# --- quality -----------------------------------------------------------------


def quality_overall(results):
    return (
        0.25 * results["consistency"]["score"]
        + 0.30 * results["completeness"]["score"]
        + 0.30 * results["accuracy"]["score"]
        + 0.15 * results["schema_compliance"]["score"]
    )


def level_of(score):
    if score >= 0.9:
        return "excellent"
    if score >= 0.8:
        return "good"
    if score >= 0.7:
        return "fair"
    if score >= 0.6:
        return "poor"
    return "very_poor"


def test_quality_weighted_recomposition(rng):
    for _ in range(30):
        text = make_text(int(rng.integers(40, 300)), rng)
        kg = make_kg(int(rng.integers(0, 12)), int(rng.integers(0, 8)))
        rep = vp("query_quality_metrics", "response",
                 tools.query_quality_metrics(kg, SCHEMA, text))
        res = rep["evaluation_results"]
        assert rep["overall_score"] == pytest.approx(quality_overall(res), abs=1e-12)
        scores = [res[a]["score"] for a in tools.ASPECTS]
        assert min(scores) - 1e-12 <= rep["overall_score"] <= max(scores) + 1e-12
        assert rep["quality_level"] == level_of(rep["overall_score"])


def test_quality_engineered_good_band():
    # half the extracted names absent from text pulls only accuracy down
    text = "Alpha Beta Gamma connect together"
    kg = {
        "entities": {"device": ["Alpha", "Beta", "Gamma", "Zeta9", "Eta8", "Theta7"]},
        "relations": {"connects_to": [
            {"subject": "Alpha", "object": "Beta"},
            {"subject": "Beta", "object": "Gamma"},
        ]},
    }
    schema = {"entity_schema": ["device"], "relation_schema": ["connects_to"]}
    rep = tools.query_quality_metrics(kg, schema, text)
    res = rep["evaluation_results"]
    assert res["accuracy"]["score"] == pytest.approx(5 / 8)
    assert res["consistency"]["score"] == 1.0
    assert res["schema_compliance"]["score"] == 1.0
    assert rep["overall_score"] == pytest.approx(quality_overall(res), abs=1e-12)
    assert rep["quality_level"] == level_of(rep["overall_score"])


def test_quality_empty_extraction():
    rep = vp("query_quality_metrics", "response",
             tools.query_quality_metrics({"entities": {}, "relations": {}}, SCHEMA, "text here"))
    res = rep["evaluation_results"]
    assert res["accuracy"]["score"] == 0.0
    assert res["consistency"]["score"] == 1.0
    assert res["schema_compliance"]["score"] == 1.0
    assert any("Nothing extracted" in i for i in res["accuracy"]["issues"])


def test_quality_flags_out_of_schema_types():
    kg = {"entities": {"vehicle": ["Car1"]}, "relations": {}}
    rep = tools.query_quality_metrics(kg, SCHEMA, "Car1 drives")
    res = rep["evaluation_results"]["schema_compliance"]
    assert res["score"] == 0.0
    assert res["details"]["invalid_entity_types"] == 1


def test_quality_duplicate_entities_hit_consistency():
    kg = {"entities": {"device": ["Hub", "hub", "Router"]}, "relations": {}}
    rep = tools.query_quality_metrics(kg, SCHEMA, "Hub hub Router")
    details = rep["evaluation_results"]["consistency"]["details"]
    assert details["duplicate_entities"] == 1
    assert rep["evaluation_results"]["consistency"]["score"] == pytest.approx(1 - 1 / 3)


# --- iterative feedback ------------------------------------------------------


def hist_kg(step):
    # strictly growing extraction; the long text keeps density unsaturated
    names = ["Alpha", "Beta", "Gamma", "Delta"][: step + 1]
    rels = [{"subject": names[i], "object": names[i + 1]} for i in range(len(names) - 1)]
    out = {"entities": {"device": names}, "relations": {}}
    if step >= 2:
        out["entities"]["protocol"] = ["SNMP"]
    if rels:
        out["relations"]["connects_to"] = rels
    return out

HIST_TEXT = "Alpha Beta Gamma Delta SNMP " + " ".join(
    ["the link carries frames across the mesh and back"] * 120
)
HIST_SCHEMA = {"entity_schema": ["device", "protocol"], "relation_schema": ["connects_to"]}


def test_iterative_max_iterations_stops():
    history = [hist_kg(i) for i in range(4)]
    rep = vp(
        "query_iterative_feedback",
        "response",
        tools.query_iterative_feedback(history, hist_kg(3), HIST_TEXT, HIST_SCHEMA, max_iterations=5),
    )
    assert rep["current_iteration"] == 5
    assert rep["max_iterations"] == 5
    assert rep["should_continue_iteration"] is False


def test_iterative_empty_history_continues():
    rep = vp(
        "query_iterative_feedback",
        "response",
        tools.query_iterative_feedback([], hist_kg(0), HIST_TEXT, HIST_SCHEMA, max_iterations=5),
    )
    assert rep["current_iteration"] == 1
    assert rep["iteration_effectiveness"]["effectiveness"] == "insufficient_data"
    assert rep["should_continue_iteration"] is True


def test_iterative_improving_history():
    history = [hist_kg(0), hist_kg(1)]
    rep = tools.query_iterative_feedback(history, hist_kg(3), HIST_TEXT, HIST_SCHEMA)
    assert rep["progress_analysis"]["trend"] == "improving"
    assert rep["iteration_effectiveness"]["average_improvement"] > 0
    assert rep["iteration_effectiveness"]["effectiveness"] in ("high", "medium", "low")


def effectiveness_of(avg, iters):
    if iters < 2:
        return "insufficient_data"
    if avg > 10.0:
        return "high"
    if avg >= 5.0:
        return "medium"
    if avg > 0.0:
        return "low"
    return "stagnant"


def test_iterative_stop_and_band_oracle(rng):
    pool = [hist_kg(i) for i in range(4)]
    for _ in range(50):
        n_hist = int(rng.integers(0, 5))
        history = [pool[int(rng.integers(len(pool)))] for _ in range(n_hist)]
        current = pool[int(rng.integers(len(pool)))]
        max_it = int(rng.integers(1, 7))
        rep = vp(
            "query_iterative_feedback",
            "response",
            tools.query_iterative_feedback(
                history, current, HIST_TEXT, HIST_SCHEMA, max_iterations=max_it
            ),
        )
        it = rep["current_iteration"]
        assert it == n_hist + 1
        eff = rep["iteration_effectiveness"]
        assert eff["effectiveness"] == effectiveness_of(eff["average_improvement"], it)
        assert eff["total_iterations"] == it
        trend = rep["progress_analysis"]["trend"]
        recent = rep["progress_analysis"]["recent_improvement"]
        third = math.ceil(max_it / 3)
        stop = (
            it >= max_it
            or (trend == "declining" and it <= third)
            or (it >= 2 and recent < 1.0)
        )
        assert rep["should_continue_iteration"] is (not stop)
        if it <= third:
            assert rep["optimization_strategy"]["iteration_focus"] == "coverage_expansion"
        elif it <= 2 * third:
            assert rep["optimization_strategy"]["iteration_focus"] == "quality_improvement"
        else:
            assert rep["optimization_strategy"]["iteration_focus"] == "refinement"


def test_iterative_trend_values_match_quality_series():
    history = [hist_kg(0), hist_kg(2)]
    current = hist_kg(3)
    rep = tools.query_iterative_feedback(history, current, HIST_TEXT, HIST_SCHEMA)
    qualities = [
        tools.query_quality_metrics(kg, HIST_SCHEMA, HIST_TEXT)["overall_score"]
        for kg in history + [current]
    ]
    want = [
        (qualities[i] - qualities[i - 1]) / max(qualities[i - 1], 1e-9) * 100.0
        for i in range(1, len(qualities))
    ]
    assert rep["iteration_effectiveness"]["improvement_trend"] == pytest.approx(want)
    assert rep["progress_analysis"]["overall_quality_change"] == pytest.approx(
        qualities[-1] - qualities[0]
    )


# --- disambiguation ----------------------------------------------------------


def seeded_store(entries, rels=None):
    kg = KnowledgeGraph()
    wire = {"entities": {}, "relations": {}}
    for etype, name in entries:
        wire["entities"].setdefault(etype, []).append(name)
    for rtype, subj, obj in rels or []:
        wire["relations"].setdefault(rtype, []).append({"subject": subj, "object": obj})
    upsert_extraction(kg, parse_extraction(wire, default_confidence=0.9), "seed", utc_now())
    return kg


def test_exact_match_is_case_insensitive():
    store = seeded_store([("device", "bws")])
    rep = vp(
        "query_entity_disambiguation",
        "response",
        tools.query_entity_disambiguation(
            {"entities": {"device": ["BWS"]}, "relations": {}}, store
        ),
    )
    r = rep["disambiguation_results"][0]
    assert r["is_disambiguated"] is True
    assert r["confidence"] == 1.0
    assert r["best_match"]["candidate"]["name"] == "bws"


def test_exact_match_confidences_binary(rng):
    store = seeded_store([("device", "alpha"), ("device", "beta"), ("protocol", "alpha")])
    names = ["alpha", "ALPHA", "beta", "gamma", "alphax"]
    queried = {"entities": {"device": [names[int(rng.integers(len(names)))] for _ in range(4)]},
               "relations": {}}
    rep = tools.query_entity_disambiguation(queried, store)
    for r in rep["disambiguation_results"]:
        assert r["confidence"] in (0.0, 1.0)
        for c in r["candidates"]:
            assert c["confidence"] == 1.0


def test_disambiguation_type_scoped():
    store = seeded_store([("protocol", "alpha")])
    rep = tools.query_entity_disambiguation(
        {"entities": {"device": ["alpha"]}, "relations": {}}, store
    )
    assert rep["disambiguation_results"][0]["is_disambiguated"] is False


def test_quality_score_worked_case():
    # two semantic matches at similarity 0.9 and two misses: 0.6*0.5 + 0.4*0.9
    store = seeded_store([("device", "abcdefghijkl"), ("device", "mnopqrstuvwx")])
    queried = {
        "entities": {"device": ["abcdefghijk", "mnopqrstuvw", "zz11", "qq22"]},
        "relations": {},
    }
    rep = tools.query_entity_disambiguation(
        queried, store, strategy="semantic_similarity", similarity_threshold=0.8
    )
    s = rep["summary"]
    assert s["total_entities"] == 4
    assert s["disambiguated_entities"] == 2
    assert s["average_confidence"] == pytest.approx(0.9)
    assert rep["quality_score"] == pytest.approx(0.66)


def test_semantic_matches_equal_pairwise_oracle(rng):
    pool = ["alpha", "alphas", "alpine", "beta", "betamax", "gamma", "gamut", "delta-1"]
    for _ in range(25):
        stored = [("t", pool[i]) for i in sorted(set(rng.integers(0, len(pool), size=4).tolist()))]
        store = seeded_store(stored)
        q = pool[int(rng.integers(len(pool)))] + ("" if rng.random() < 0.5 else "x")
        rep = tools.query_entity_disambiguation(
            {"entities": {"t": [q]}, "relations": {}},
            store,
            strategy="semantic_similarity",
            similarity_threshold=0.5,
        )
        r = rep["disambiguation_results"][0]
        scored = sorted(
            (
                (tools.trigram_similarity(q, e.name), e.name)
                for e in store.entities.values()
                if tools.trigram_similarity(q, e.name) >= 0.5
            ),
            key=lambda p: (-p[0], p[1]),
        )
        assert [c["candidate"]["name"] for c in r["candidates"]] == [n for _, n in scored]
        if scored:
            assert r["confidence"] == pytest.approx(scored[0][0])
        else:
            assert r["is_disambiguated"] is False


def test_disambiguation_lists_relationships():
    store = seeded_store(
        [("device", "hub"), ("device", "leaf")],
        rels=[("connects_to", "hub", "leaf")],
    )
    rep = vp(
        "query_entity_disambiguation",
        "response",
        tools.query_entity_disambiguation(
            {"entities": {"device": ["HUB"]}, "relations": {}}, store
        ),
    )
    assert len(rep["relationships_results"]) == 1
    block = rep["relationships_results"][0]
    assert block["entity"]["name"] == "hub"
    assert block["relationships"][0]["type"] == "connects_to"
    assert block["relationships"][0]["target"]["name"] == "leaf"


def test_invalid_strategy_rejected():
    with pytest.raises(ValueError, match="invalid strategy"):
        tools.query_entity_disambiguation(
            {"entities": {}, "relations": {}}, KnowledgeGraph(), strategy="fuzzy"
        )


# --- storage -----------------------------------------------------------------

STORE_SCHEMA = Schema.make(
    ["device", "protocol", "document"], ["connects_to", "implements"], ()
)


def test_storage_fresh_extraction_succeeds():
    store = KnowledgeGraph(schema=STORE_SCHEMA)
    kg = {
        "entities": {"device": ["A", "B"], "protocol": ["P"]},
        "relations": {"connects_to": [{"subject": "A", "object": "B"}]},
    }
    rep = vp("query_kg_storage", "response",
             tools.query_kg_storage(kg, store, now=utc_now()))
    status = rep["storage_status"]
    assert status["overall_success"] is True
    assert status["entities_storage"]["code"] == 0
    assert status["relations_storage"]["code"] == 0
    assert status["entities_storage"]["stored_count"] == 3
    assert status["relations_storage"]["stored_count"] == 1
    assert rep["final_kg"] == parse_extraction(kg).to_wire()
    assert rep["storage_details"]["entity_types_processed"] == ["device", "protocol"]


def test_storage_restore_skips_duplicates():
    store = KnowledgeGraph(schema=STORE_SCHEMA)
    kg = {
        "entities": {"device": ["A", "B"]},
        "relations": {"connects_to": [{"subject": "A", "object": "B"}]},
    }
    tools.query_kg_storage(kg, store, now=utc_now())
    rep = tools.query_kg_storage(kg, store, now=utc_now())
    status = rep["storage_status"]
    assert status["entities_storage"]["code"] == 0
    assert status["entities_storage"]["skipped_count"] == 2
    assert status["entities_storage"]["stored_count"] == 0
    assert status["relations_storage"]["skipped_count"] == 1
    assert rep["storage_details"]["duplicates_detected"]["entity_duplicates"] == 2


def test_storage_orphaned_relation_warns():
    store = KnowledgeGraph(schema=STORE_SCHEMA)
    kg = {
        "entities": {"device": ["A"]},
        "relations": {"connects_to": [{"subject": "A", "object": "GhostX"}]},
    }
    rep = vp("query_kg_storage", "response",
             tools.query_kg_storage(kg, store, now=utc_now()))
    status = rep["storage_status"]
    assert status["relations_storage"]["failed_count"] == 1
    assert status["relations_storage"]["code"] == 0
    assert any(w.startswith("Missing entity references") for w in rep["warnings"])


def test_storage_schema_violation_still_code_zero():
    store = KnowledgeGraph(schema=STORE_SCHEMA)
    kg = {"entities": {"vehicle": ["Car1"], "device": ["A"]}, "relations": {}}
    rep = tools.query_kg_storage(kg, store, now=utc_now())
    status = rep["storage_status"]
    assert status["entities_storage"]["failed_count"] == 1
    assert status["entities_storage"]["stored_count"] == 1
    assert status["entities_storage"]["code"] == 0
    assert status["overall_success"] is True
    assert any("schema violation" in w for w in rep["warnings"])


def test_storage_unavailable_store():
    rep = vp("query_kg_storage", "response",
             tools.query_kg_storage({"entities": {"device": ["A"]}, "relations": {}}, None))
    status = rep["storage_status"]
    assert status["overall_success"] is False
    assert status["entities_storage"]["code"] == -1
    assert status["relations_storage"]["code"] == -1
