"""Command line front end.

Exit codes: 0 on success, 1 on a runtime failure (message on stderr),
2 on bad usage (argparse prints the usage text).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .compression import bound_check, reports_jsonl, seeded_mdp
from .episode import (
    AGENT_PRESETS,
    EpisodeConfig,
    generate_corpus,
    run_episode,
    run_experiment,
    scripted_agent,
)
from .metrics import coverage, degree_entropy, spectral_terms, von_neumann_entropy
from .service import ServiceConfig, run_server
from .store import (
    KnowledgeGraph,
    Schema,
    export_cypher,
    graph_view,
    load_store,
    save_store,
)
from .update import EdgeCandidate, cover_select, coverage_gain

DEFAULT_ENTITY_TYPES = ("device", "protocol", "vendor")
DEFAULT_RELATION_TYPES = ("connects_to", "supplied_by")


class CliError(Exception):
    pass


def _service_config(args: argparse.Namespace) -> ServiceConfig:
    overrides = {
        "host": getattr(args, "host", None),
        "port": getattr(args, "port", None),
        "store_path": getattr(args, "store", None),
        "seed": getattr(args, "seed", None),
        "log_level": getattr(args, "log_level", None),
    }
    config_path = getattr(args, "config", None)
    if config_path is not None and not Path(config_path).exists():
        raise CliError(f"config file not found: {config_path}")
    try:
        return ServiceConfig.load(config_path, overrides=overrides)
    except ValueError as err:
        raise CliError(str(err))


def _load_schema(path: str | None) -> Schema:
    if path is None:
        return Schema.make(DEFAULT_ENTITY_TYPES, DEFAULT_RELATION_TYPES)
    if not Path(path).exists():
        raise CliError(f"schema file not found: {path}")
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CliError(f"schema file is not valid JSON: {err}")
    try:
        return Schema.make(
            data["entity_schema"],
            data["relation_schema"],
            data.get("selfloop_whitelist", ()),
        )
    except KeyError as err:
        raise CliError(f"schema file missing key {err}")


def _load_store_file(path: str, schema: Schema | None = None) -> KnowledgeGraph:
    if not Path(path).exists():
        raise CliError(f"store not found: {path}")
    try:
        return load_store(path, schema=schema)
    except (json.JSONDecodeError, KeyError, ValueError) as err:
        raise CliError(f"store file {path} is unreadable: {err}")


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _service_config(args)
    try:
        run_server(cfg)
    except OSError as err:
        raise CliError(f"cannot bind {cfg.host}:{cfg.port}: {err}")
    return 0


def _episode_config(args: argparse.Namespace, cfg: ServiceConfig) -> EpisodeConfig:
    return EpisodeConfig(
        max_steps=getattr(args, "max_steps", 10),
        gamma=cfg.reward.gamma,
        reward=cfg.reward,
        spectral=cfg.spectral,
        update=cfg.update,
        seed=cfg.seed,
    )


def cmd_episode(args: argparse.Namespace) -> int:
    cfg = _service_config(args)
    schema = _load_schema(args.schema)
    corpus = generate_corpus(cfg.seed, args.docs, schema)
    if not 0 <= args.doc_index < len(corpus):
        raise CliError(f"doc index {args.doc_index} outside corpus of {len(corpus)}")
    if args.store is not None and Path(args.store).exists():
        store = _load_store_file(args.store, schema=schema)
    else:
        store = KnowledgeGraph(schema=schema)
    trace = run_episode(
        scripted_agent(args.agent),
        corpus[args.doc_index],
        store,
        _episode_config(args, cfg),
        alpha=args.alpha,
        episode_index=args.doc_index,
    )
    if args.store is not None:
        save_store(store, args.store)
    _write_text(args.out, json.dumps(trace.to_record(), sort_keys=True, indent=2))
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = _service_config(args)
    schema = _load_schema(args.schema)
    names = [n.strip() for n in args.agents.split(",") if n.strip()]
    if not names:
        raise CliError("no agents given")
    for name in names:
        if name not in AGENT_PRESETS:
            raise CliError(
                f"unknown agent {name!r}; choose from {', '.join(sorted(AGENT_PRESETS))}"
            )
    agents = [scripted_agent(n) for n in names]
    corpus = generate_corpus(cfg.seed, args.docs, schema)
    report = run_experiment(agents, corpus, args.episodes_per_doc, _episode_config(args, cfg))
    report.write(args.out)
    print(report.summary_table())
    print(f"wrote {len(report.episodes)} episode records to {args.out}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    cfg = _service_config(args)
    kg = _load_store_file(args.store)
    view = graph_view(kg)
    n = len(kg.entities)
    m = len(kg.relations)
    body: dict = {
        "entities": n,
        "relations": m,
        "staged": len(kg.staged),
        "relation_density": m / max(1, n * (n - 1)),
    }
    if n >= 1:
        sp = cfg.spectral
        terms = spectral_terms(view, sp.eps)
        body.update(
            coverage=coverage(view, sp.kappa, sp.h),
            von_neumann_entropy=von_neumann_entropy(view, sp.mu),
            degree_entropy=degree_entropy(view),
            trace_pinv=terms.tr_pinv,
            logdet_shifted=terms.logdet,
        )
    else:
        body.update(
            coverage=None,
            von_neumann_entropy=None,
            degree_entropy=None,
            trace_pinv=None,
            logdet_shifted=None,
        )
    print(json.dumps(body, sort_keys=True, indent=2))
    return 0


def _load_candidates(path: str) -> list[EdgeCandidate]:
    if not Path(path).exists():
        raise CliError(f"candidates file not found: {path}")
    try:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CliError(f"candidates file is not valid JSON: {err}")
    if not isinstance(rows, list):
        raise CliError("candidates file must hold a JSON array")
    out = []
    for i, row in enumerate(rows):
        try:
            out.append(
                EdgeCandidate(
                    src=row["src"],
                    dst=row["dst"],
                    rel_type=row["rel_type"],
                    confidence=row.get("confidence", 1.0),
                )
            )
        except (TypeError, KeyError, ValueError) as err:
            raise CliError(f"candidates[{i}] is malformed: {err}")
    return out


def cmd_cover(args: argparse.Namespace) -> int:
    kg = _load_store_file(args.store)
    if not kg.entities:
        raise CliError(f"store {args.store} holds no entities")
    cands = _load_candidates(args.candidates)
    view = graph_view(kg)
    try:
        chosen = cover_select(view, cands, args.k, args.kappa, args.radius, mode=args.mode)
        gain = coverage_gain(view, chosen, args.kappa, args.radius)
    except ValueError as err:
        raise CliError(str(err))
    body = {
        "mode": args.mode,
        "k": args.k,
        "selected": [
            {"src": c.src, "dst": c.dst, "rel_type": c.rel_type, "confidence": c.confidence}
            for c in chosen
        ],
        "coverage_gain": gain,
    }
    print(json.dumps(body, sort_keys=True, indent=2))
    return 0


def cmd_bound_check(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise CliError("--n must be >= 1")
    reports = [bound_check(seeded_mdp(s)) for s in range(args.seed, args.seed + args.n)]
    held = sum(1 for r in reports if r.holds)
    _write_text(args.out, reports_jsonl(reports))
    summary = f"wrote {len(reports)} reports to {args.out}: {held}/{len(reports)} hold"
    print(summary, file=sys.stderr if args.out == "-" else sys.stdout)
    return 0


def cmd_export_cypher(args: argparse.Namespace) -> int:
    kg = _load_store_file(args.store)
    _write_text(args.out, export_cypher(kg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrenv",
        description="Knowledge-graph environment engine: tool service, episodes, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="deterministic seed")

    p = sub.add_parser("serve", help="run the HTTP tool service")
    common(p)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--store", default=None, help="store file (JSON lines), created on write")
    p.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("episode", help="run one scripted episode")
    common(p)
    p.add_argument("--agent", default="perfect", choices=sorted(AGENT_PRESETS))
    p.add_argument("--docs", type=int, default=3, help="corpus size to generate")
    p.add_argument("--doc-index", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None, help="reward mixing weight")
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--schema", default=None, help="JSON file with entity_schema/relation_schema")
    p.add_argument("--store", default=None, help="store file to reuse and update")
    p.add_argument("--out", default="-", help="trace destination (- for stdout)")
    p.set_defaults(func=cmd_episode)

    p = sub.add_parser("experiment", help="run an episode stream and write a report")
    common(p)
    p.add_argument("--agents", default="perfect,noisy,lazy", help="comma-separated presets")
    p.add_argument("--docs", type=int, default=3)
    p.add_argument("--episodes-per-doc", type=int, default=2)
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", default="report.jsonl")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metrics", help="graph diagnostics for a store file")
    common(p)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("cover", help="bounded edge selection by coverage gain")
    p.add_argument("--store", required=True)
    p.add_argument("--candidates", required=True, help="JSON array of src/dst/rel_type rows")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--mode", default="greedy", choices=["greedy", "exhaustive"])
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--radius", type=int, default=1, help="neighborhood radius")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("bound-check", help="verify the return-gap bound on seeded MDPs")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bound_reports.jsonl")
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("export-cypher", help="dump a store as Cypher statements")
    p.add_argument("--store", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export_cypher)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return int(args.func(args))
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
