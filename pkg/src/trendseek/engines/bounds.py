"""Score bounds from the per-level node fits of the segment tree.

A slope pattern's score over the final segmentation is bracketed by its
best and worst score across the nodes of any materialized level; flat and
angle targets get an upper bound of 1 whenever the level's slopes straddle
the target, because some union of nodes may then hit it exactly.  Operator
bounds combine childrens' bounds; a concat averages them.  The brackets
tighten as levels coarsen, which is what stage-2 pruning exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from trendseek.algebra import (
    And,
    Not,
    Or,
    Pattern,
    PatternKind,
    Seg,
    ShapeQueryAst,
    ShapeSegment,
)
from trendseek.engines.core import (
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    build_chain_plan,
    _effective_pattern,
)
from trendseek.ingest import CandidateViz
from trendseek.scoring import pattern_score_array


@dataclass(frozen=True)
class ScoreBounds:
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")


def _slope_pattern_bounds(pattern: Pattern, slopes: np.ndarray) -> ScoreBounds:
    scores = pattern_score_array(pattern, slopes)
    lo = float(np.min(scores))
    hi = float(np.max(scores))
    if pattern.kind is PatternKind.FLAT:
        if not (np.all(slopes > 0.0) or np.all(slopes < 0.0)):
            hi = 1.0
    elif pattern.kind is PatternKind.THETA:
        target = math.tan(math.radians(pattern.angle or 0.0))
        if not (np.all(slopes > target) or np.all(slopes < target)):
            hi = 1.0
    return ScoreBounds(lo, hi)


_PLAIN_SLOPE = frozenset(
    {PatternKind.UP, PatternKind.DOWN, PatternKind.FLAT, PatternKind.THETA}
)


def _segment_bounds(segment: ShapeSegment, slopes: np.ndarray) -> ScoreBounds:
    pat = _effective_pattern(segment)
    kind = pat.kind
    if kind is PatternKind.ANY:
        return ScoreBounds(1.0, 1.0)
    if kind is PatternKind.EMPTY:
        return ScoreBounds(-1.0, -1.0)
    plain = (
        kind in _PLAIN_SLOPE
        and segment.modifier.quantifier is None
        and segment.location.iterator_width is None
    )
    if not plain:
        # Quantifiers and iterators score sub-node windows, references and
        # user patterns are unconstrained by node fits: stay safe.
        return ScoreBounds(-1.0, 1.0)
    b = _slope_pattern_bounds(pat, slopes)
    if not segment.location.is_empty():
        # A failed location gate can force -1 regardless of the fit.
        return ScoreBounds(-1.0, b.upper)
    return b


def expr_bounds(expr: ShapeQueryAst, slopes: np.ndarray) -> ScoreBounds:
    if isinstance(expr, Seg):
        return _segment_bounds(expr.segment, slopes)
    if isinstance(expr, Not):
        inner = expr_bounds(expr.child, slopes)
        return ScoreBounds(-inner.upper, -inner.lower)
    if isinstance(expr, (And, Or)):
        child = [expr_bounds(c, slopes) for c in expr.children]
        if isinstance(expr, And):
            return ScoreBounds(min(b.lower for b in child), min(b.upper for b in child))
        return ScoreBounds(max(b.lower for b in child), max(b.upper for b in child))
    # A nested concat re-segments its slice; no node-fit bracket applies.
    return ScoreBounds(-1.0, 1.0)


def chain_bounds(plan: ChainPlan, slopes: np.ndarray) -> ScoreBounds:
    per_expr = [expr_bounds(e, slopes) for e in plan.exprs]
    k = len(per_expr)
    return ScoreBounds(
        sum(b.lower for b in per_expr) / k,
        sum(b.upper for b in per_expr) / k,
    )


def level_bounds(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    viz: CandidateViz,
    level: int,
    config: EngineConfig = DEFAULT_CONFIG,
) -> ScoreBounds:
    """Bounds on the final total from the node fits ``level`` merge rounds
    above the leaves (level 0 = the adjacent-bin leaves)."""
    from trendseek.engines.segtree import SegTreeRun

    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    run = SegTreeRun(plan.scorers, viz)
    run.advance(level)
    return chain_bounds(plan, run.current_slopes())


# --- rigorous hull brackets ---------------------------------------------------
#
# A least-squares slope over any contiguous bin range is a convex combination
# of the adjacent-bin slopes inside it, so [hmin, hmax] over those leaf
# slopes rigorously brackets the fitted slope of every segment the range can
# produce.  These brackets back the pruning engine's sound upper bound.


def _hull_pattern_bounds(pattern: Pattern, hmin: float, hmax: float) -> ScoreBounds:
    kind = pattern.kind
    if kind is PatternKind.ANY:
        return ScoreBounds(1.0, 1.0)
    if kind is PatternKind.EMPTY:
        return ScoreBounds(-1.0, -1.0)
    from trendseek.scoring import flat_score, theta_score, up_score

    if kind is PatternKind.UP:
        return ScoreBounds(up_score(hmin), up_score(hmax))
    if kind is PatternKind.DOWN:
        return ScoreBounds(-up_score(hmax), -up_score(hmin))
    if kind is PatternKind.FLAT:
        lo = min(flat_score(hmin), flat_score(hmax))
        hi = 1.0 if hmin <= 0.0 <= hmax else max(flat_score(hmin), flat_score(hmax))
        return ScoreBounds(lo, hi)
    if kind is PatternKind.THETA:
        target = math.tan(math.radians(pattern.angle or 0.0))
        angle = pattern.angle or 0.0
        lo = min(theta_score(hmin, angle), theta_score(hmax, angle))
        hi = (
            1.0
            if hmin <= target <= hmax
            else max(theta_score(hmin, angle), theta_score(hmax, angle))
        )
        return ScoreBounds(lo, hi)
    return ScoreBounds(-1.0, 1.0)


def expr_hull_bounds(expr: ShapeQueryAst, hmin: float, hmax: float) -> ScoreBounds:
    """Sound score bracket for one expr over any segment whose adjacent-bin
    slopes all lie in [hmin, hmax]."""
    if isinstance(expr, Seg):
        segment = expr.segment
        pat = _effective_pattern(segment)
        b = _hull_pattern_bounds(pat, hmin, hmax)
        if segment.modifier.quantifier is not None:
            # Sub-segment scores are hull-bounded too; a violated count gives -1.
            return ScoreBounds(-1.0, b.upper)
        if not segment.location.is_empty():
            return ScoreBounds(-1.0, b.upper)
        return b
    if isinstance(expr, Not):
        inner = expr_hull_bounds(expr.child, hmin, hmax)
        return ScoreBounds(-inner.upper, -inner.lower)
    if isinstance(expr, (And, Or)):
        child = [expr_hull_bounds(c, hmin, hmax) for c in expr.children]
        if isinstance(expr, And):
            return ScoreBounds(min(b.lower for b in child), min(b.upper for b in child))
        return ScoreBounds(max(b.lower for b in child), max(b.upper for b in child))
    return ScoreBounds(-1.0, 1.0)
