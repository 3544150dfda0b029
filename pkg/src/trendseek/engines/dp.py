"""Optimal fuzzy segmentation by dynamic programming, O(B^2 k).

The table is built on score sums rather than running means: maximizing
sum(s_1..s_k)/k is the same as maximizing the sum, and keeping raw sums
makes the recovered total bit-identical to the exhaustive oracle's
right-associated summation, so tie-breaking lines up exactly.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from trendseek.algebra import ShapeQueryAst, normalize_ast
from trendseek.engines.core import (
    NEG_INF,
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    ExprScorer,
    InfeasibleSegmentation,
    PairField,
    SegmentedViz,
    build_chain_plan,
    solve,
)
from trendseek.ingest import CandidateViz
from trendseek.scoring import ScoreContext


def dp_chain(
    scorers: Sequence[ExprScorer], viz: CandidateViz
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Best breakpoints for a fully fuzzy chain over the whole viz.

    suffix[t][l] = best score sum of exprs t..k-1 covering bins [l..B-1].
    Reconstruction walks forward picking the smallest breakpoint that still
    achieves the optimum (exact float equality holds because the optimum
    was computed from these very sums), which yields the lexicographically
    smallest optimal breakpoint vector.
    """
    k = len(scorers)
    b = viz.size
    if b < k + 1:
        raise InfeasibleSegmentation(f"{k} exprs need at least {k + 1} bins, viz has {b}")
    field = PairField(viz)

    if k == 1:
        score = float(scorers[0].eval_pairs(field, np.array([0]), np.array([b - 1]))[0])
        return (0, b - 1), (score,)

    # suffix[t] over start positions l; infeasible starts stay -inf because
    # the matrices are -inf wherever l >= m.
    mats = [scorer.matrix(field) for scorer in scorers]
    suffix = np.full((k, b), NEG_INF, dtype=np.float64)
    suffix[k - 1] = mats[k - 1][:, b - 1]
    for t in range(k - 2, -1, -1):
        cand = mats[t] + suffix[t + 1][None, :]  # [l, m]
        suffix[t] = np.max(cand, axis=1)

    total_sum = float(suffix[0][0])
    if total_sum == NEG_INF:
        raise InfeasibleSegmentation("no feasible segmentation")

    bps = [0]
    scores: list[float] = []
    l = 0
    for t in range(k - 1):
        cand = mats[t][l, :] + suffix[t + 1]
        target = suffix[t][l]
        matches = np.flatnonzero(cand == target)
        m = int(matches[0])
        scores.append(float(mats[t][l, m]))
        bps.append(m)
        l = m
    scores.append(float(mats[k - 1][l, b - 1]))
    bps.append(b - 1)
    return tuple(bps), tuple(scores)


def solve_dp(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    viz: CandidateViz,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SegmentedViz:
    """Optimal segmentation of one trendline for a validated query."""
    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    return solve(plan, viz, dp_chain, config)


# --- helpers used by the recursive scoring of nested expressions -----------


def solve_chain_on_range(
    children: Sequence[ShapeQueryAst], viz: CandidateViz, lo: int, hi: int, ctx: ScoreContext
) -> float:
    """Score a Concat subtree over one slice by solving it exactly."""
    sub = viz.slice(lo, hi)
    scorers = tuple(
        ExprScorer(c, j, ctx.threshold_quantifier) for j, c in enumerate(children)
    )
    try:
        _, scores = dp_chain(scorers, sub)
    except InfeasibleSegmentation:
        return -1.0
    acc = 0.0
    for s in reversed(scores):
        acc = s + acc
    return acc / len(scores)


def solve_query_on_range(
    ast: ShapeQueryAst, viz: CandidateViz, lo: int, hi: int, ctx: ScoreContext
) -> float:
    """Score a whole nested query over one slice (recursive fuzzy solve)."""
    sub = viz.slice(lo, hi)
    plan = build_chain_plan(normalize_ast(ast))
    try:
        result = solve(plan, sub, dp_chain)
    except InfeasibleSegmentation:
        return -1.0
    return result.total
