"""Greedy baseline: start from equal-length segments, then repeatedly move
one interior breakpoint halfway toward a neighbour while that improves the
total.  Fast, deterministic and frequently stuck in local optima, which is
exactly its role in the engine comparison.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from trendseek.algebra import ShapeQueryAst
from trendseek.engines.core import (
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    ExprScorer,
    InfeasibleSegmentation,
    PairField,
    SegmentedViz,
    build_chain_plan,
    right_assoc_mean,
    solve,
)
from trendseek.ingest import CandidateViz


def greedy_chain(
    scorers: Sequence[ExprScorer], viz: CandidateViz
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    k = len(scorers)
    b = viz.size
    if b < k + 1:
        raise InfeasibleSegmentation(f"{k} exprs need at least {k + 1} bins, viz has {b}")
    field = PairField(viz)

    def expr_score(j: int, lo: int, hi: int) -> float:
        return float(scorers[j].eval_pairs(field, np.array([lo]), np.array([hi]))[0])

    bps = [round(t * (b - 1) / k) for t in range(k + 1)]
    # Equal split can collide at tiny sizes; force strict monotonicity.
    for t in range(1, k + 1):
        bps[t] = max(bps[t], bps[t - 1] + 1)
    bps[k] = b - 1
    for t in range(k - 1, 0, -1):
        bps[t] = min(bps[t], bps[t + 1] - 1)

    scores = [expr_score(j, bps[j], bps[j + 1]) for j in range(k)]
    total = right_assoc_mean(scores)

    while True:
        best_gain = 0.0
        best_move: tuple[int, int, float, float] | None = None
        for t in range(1, k):
            for target in ((bps[t - 1] + bps[t]) // 2, (bps[t] + bps[t + 1]) // 2):
                if target == bps[t] or target <= bps[t - 1] or target >= bps[t + 1]:
                    continue
                left = expr_score(t - 1, bps[t - 1], target)
                right = expr_score(t, target, bps[t + 1])
                new_scores = list(scores)
                new_scores[t - 1] = left
                new_scores[t] = right
                gain = right_assoc_mean(new_scores) - total
                if gain > best_gain:
                    best_gain = gain
                    best_move = (t, target, left, right)
        if best_move is None:
            break
        t, target, left, right = best_move
        bps[t] = target
        scores[t - 1] = left
        scores[t] = right
        total = right_assoc_mean(scores)
    return tuple(bps), tuple(scores)


def solve_greedy(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    viz: CandidateViz,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SegmentedViz:
    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    return solve(plan, viz, greedy_chain, config)
