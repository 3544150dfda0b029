"""Brute-force oracle: enumerate every breakpoint assignment.

Test-scale only (C(B-2, k-1) candidates); the guard refuses anything past
B=64 or k=4.  Scores come from the same matrices the DP uses and are summed
right to left, so totals and tie-breaking match the DP bit for bit.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

from trendseek.algebra import ShapeQueryAst
from trendseek.engines.core import (
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    ExprScorer,
    InfeasibleSegmentation,
    PairField,
    SegmentedViz,
    TooLarge,
    build_chain_plan,
    solve,
)
from trendseek.ingest import CandidateViz

MAX_BINS = 64
MAX_EXPRS = 4


def exhaustive_chain(
    scorers: Sequence[ExprScorer], viz: CandidateViz
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    k = len(scorers)
    b = viz.size
    if b > MAX_BINS or k > MAX_EXPRS:
        raise TooLarge(f"exhaustive oracle is limited to B<={MAX_BINS}, k<={MAX_EXPRS}")
    if b < k + 1:
        raise InfeasibleSegmentation(f"{k} exprs need at least {k + 1} bins, viz has {b}")
    field = PairField(viz)
    mats = [scorer.matrix(field) for scorer in scorers]

    best_sum = float("-inf")
    best_bps: tuple[int, ...] = ()
    best_scores: tuple[float, ...] = ()
    # Lexicographic enumeration plus strict improvement keeps the
    # lexicographically smallest vector among exact ties.
    for interior in combinations(range(1, b - 1), k - 1):
        bps = (0,) + interior + (b - 1,)
        scores = [float(mats[j][bps[j], bps[j + 1]]) for j in range(k)]
        acc = 0.0
        for s in reversed(scores):
            acc = s + acc
        if acc > best_sum:
            best_sum = acc
            best_bps = bps
            best_scores = tuple(scores)
    if not best_bps:
        raise InfeasibleSegmentation("no feasible segmentation")
    return best_bps, best_scores


def enumerate_exhaustive(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    viz: CandidateViz,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SegmentedViz:
    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    return solve(plan, viz, exhaustive_chain, config)
