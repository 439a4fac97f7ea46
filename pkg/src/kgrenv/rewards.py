"""Reward components: toolcall, result, trajectory, environmental, and the
dual mixture with its mirror-descent alpha update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .extraction import ExtractionResult
from .metrics import SpectralParams, coverage, temporal_consistency, von_neumann_entropy
from .store import KnowledgeGraph, graph_view
from .update import UpdateParams, constraint_penalty


@dataclass(frozen=True)
class ToolcallConfig:
    success: float = 0.05
    failure: float = -0.1
    cap: float = 0.5
    redundancy_decay: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.redundancy_decay < 1.0:
            raise ValueError("redundancy_decay must be in (0, 1)")


@dataclass(frozen=True)
class ResultConfig:
    format_weight: float = 1.0
    full_match: float = 1.5
    over_rate: float = 0.15
    under_rate: float = 0.8


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    gamma: float = 0.95
    lambda_contr: float = 0.1
    lambda_T: float = 0.1
    eta_alpha: float = 0.05
    toolcall: ToolcallConfig = field(default_factory=ToolcallConfig)
    result: ResultConfig = field(default_factory=ResultConfig)

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.lambda_contr < 0 or self.lambda_T < 0:
            raise ValueError("lambda weights must be >= 0")
        if self.eta_alpha <= 0:
            raise ValueError("eta_alpha must be > 0")


def toolcall_reward(
    calls: Sequence[tuple[str, str, bool]], cfg: RewardConfig
) -> float:
    tc = cfg.toolcall
    seen: dict[tuple[str, str], int] = {}
    total = 0.0
    for tool, query_key, success in calls:
        key = (tool, query_key)
        k = seen.get(key, 0)
        seen[key] = k + 1
        if success:
            total += tc.success * tc.redundancy_decay**k
        else:
            total += tc.failure
    return min(total, tc.cap)


@dataclass(frozen=True)
class ResultReward:
    format: float
    accuracy: float
    density_penalty: float
    total: float
    degenerate_gold: bool = False

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "accuracy": self.accuracy,
            "density_penalty": self.density_penalty,
            "total": self.total,
        }


def _tagged_items(kg: ExtractionResult) -> set[tuple]:
    items: set[tuple] = set()
    for etype, name in kg.entity_items():
        items.add(("e", etype, name))
    for rtype, subj, obj in kg.relation_items():
        items.add(("r", rtype, subj, obj))
    return items


def result_reward(
    pred: ExtractionResult,
    gold: ExtractionResult,
    format_ok: bool,
    cfg: RewardConfig,
) -> ResultReward:
    rc = cfg.result
    fmt = rc.format_weight if format_ok else -rc.format_weight
    p_items = _tagged_items(pred)
    g_items = _tagged_items(gold)
    if p_items == g_items:
        accuracy = rc.full_match
    else:
        hit = len(p_items & g_items)
        accuracy = 2.0 * hit / (len(p_items) + len(g_items))
    a = pred.item_count()
    b = gold.item_count()
    degenerate = b == 0
    if degenerate or a == b:
        penalty = 0.0
    else:
        rate = rc.over_rate if a > b else rc.under_rate
        penalty = abs(a - b) / b * rate
    total = fmt + accuracy - penalty
    return ResultReward(fmt, accuracy, penalty, total, degenerate_gold=degenerate)


@dataclass(frozen=True)
class TraceStep:
    protocol_ok: bool = True
    quality: float | None = None


@dataclass(frozen=True)
class RewardTrace:
    steps: tuple[TraceStep, ...]
    storage_success: bool = False


def trajectory_reward(trace: RewardTrace, cfg: RewardConfig) -> float:
    if not trace.steps:
        raise ValueError("empty trace")
    protocol = 0.2 if all(s.protocol_ok for s in trace.steps) else -0.2
    improvements = 0
    prev: float | None = None
    for step in trace.steps:
        if step.quality is None:
            continue
        if prev is not None and step.quality > prev:
            improvements += 1
        prev = step.quality
    storage = 0.2 if trace.storage_success else 0.0
    return protocol + 0.1 * improvements + storage


def environmental_reward(
    kg_prev: KnowledgeGraph,
    kg_next: KnowledgeGraph,
    sp: SpectralParams,
    up: UpdateParams,
    cfg: RewardConfig,
) -> float:
    prev_view = graph_view(kg_prev)
    next_view = graph_view(kg_next)
    d_cov = coverage(next_view, sp.kappa, sp.h) - coverage(prev_view, sp.kappa, sp.h)
    d_ent = von_neumann_entropy(next_view, sp.mu) - von_neumann_entropy(
        prev_view, sp.mu
    )
    edges = sorted(kg_next.relations)
    contr = constraint_penalty(edges, up.constraints)
    t_cons = temporal_consistency(prev_view, next_view, sp.beta_t)
    return d_cov + d_ent - cfg.lambda_contr * contr - cfg.lambda_T * t_cons


def dual_reward(env: float, task: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return alpha * env + (1.0 - alpha) * task


def update_alpha(
    alpha: float, grad_env: float, grad_task: float, eta_alpha: float
) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return min(1.0, max(0.0, alpha + eta_alpha * (grad_env - grad_task)))


@dataclass(frozen=True)
class RewardBreakdown:
    env: float
    toolcall: float
    result: ResultReward
    trajectory: float
    task_total: float
    mixed: float
    alpha_used: float

    def to_dict(self) -> dict:
        return {
            "env": self.env,
            "toolcall": self.toolcall,
            "result": self.result.to_dict(),
            "trajectory": self.trajectory,
            "task_total": self.task_total,
            "mixed": self.mixed,
            "alpha_used": self.alpha_used,
        }


def compose_breakdown(
    env: float,
    toolcall: float,
    result: ResultReward,
    trajectory: float,
    alpha: float,
) -> RewardBreakdown:
    task_total = toolcall + result.total + trajectory
    mixed = dual_reward(env, task_total, alpha)
    out = RewardBreakdown(
        env=env,
        toolcall=toolcall,
        result=result,
        trajectory=trajectory,
        task_total=task_total,
        mixed=mixed,
        alpha_used=alpha,
    )
    if abs(out.mixed - (alpha * env + (1 - alpha) * task_total)) > 1e-12:
        raise AssertionError("mixed reward does not reconcile")
    if abs(out.task_total - (toolcall + result.total + trajectory)) > 1e-12:
        raise AssertionError("task total does not reconcile")
    if abs(result.total - (result.format + result.accuracy - result.density_penalty)) > 1e-12:
        raise AssertionError("result total does not reconcile")
    return out
