"""Query-to-pipeline push-down planning.

Location constraints bound where each expr can land, so (a) EXTRACT can
drop records outside every referenced x range, (b) anchored up/down exprs
can be fit-and-tested before full segmentation (eager checks, off by
default because an all-negative anchored range changes top-k), and (c)
GROUP only materializes summarized statistics for referenced ranges; the
skipped raw values are kept for plotting the winners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from trendseek.algebra import (
    PatternKind,
    Seg,
    ShapeQueryAst,
)
from trendseek.engines.core import ChainPlan, build_chain_plan
from trendseek.ingest import VisualSpec

INF = math.inf


@dataclass(frozen=True)
class EagerCheck:
    expr_index: int
    x_start: float
    x_end: float
    want_up: bool  # True for up, False for down


@dataclass(frozen=True)
class ExecutionPlan:
    """What the ingest stages may skip for one query."""

    #: Referenced x ranges (None means the whole axis is referenced).
    ranges: Optional[tuple[tuple[float, float], ...]]
    eager_checks: tuple[EagerCheck, ...]

    @property
    def restricts(self) -> bool:
        return self.ranges is not None


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    intervals.sort()
    merged: list[tuple[float, float]] = []
    for lo, hi in intervals:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def pushdown_plan(ast_or_plan: ShapeQueryAst | ChainPlan, spec: VisualSpec) -> ExecutionPlan:
    plan = ast_or_plan if isinstance(ast_or_plan, ChainPlan) else build_chain_plan(ast_or_plan)
    k = plan.k
    anchors = plan.anchors

    if all(a is None for a in anchors):
        return ExecutionPlan(ranges=None, eager_checks=_eager(plan))

    # Each fuzzy expr is boxed by its nearest anchored neighbours.
    intervals: list[tuple[float, float]] = []
    unbounded = False
    for j in range(k):
        if anchors[j] is not None:
            intervals.append(anchors[j])
            continue
        lo = -INF
        for i in range(j - 1, -1, -1):
            if anchors[i] is not None:
                lo = anchors[i][1]
                break
        hi = INF
        for i in range(j + 1, k):
            if anchors[i] is not None:
                hi = anchors[i][0]
                break
        if lo == -INF and hi == INF:
            unbounded = True
            break
        intervals.append((lo, hi))

    if unbounded:
        return ExecutionPlan(ranges=None, eager_checks=_eager(plan))
    return ExecutionPlan(
        ranges=tuple(_merge_intervals(intervals)), eager_checks=_eager(plan)
    )


def _eager(plan: ChainPlan) -> tuple[EagerCheck, ...]:
    checks: list[EagerCheck] = []
    for j, expr in enumerate(plan.exprs):
        if not isinstance(expr, Seg):
            continue
        segment = expr.segment
        if segment.pattern.kind not in (PatternKind.UP, PatternKind.DOWN):
            continue
        loc = segment.location
        if loc.x_start is None or loc.x_end is None:
            continue
        checks.append(
            EagerCheck(
                expr_index=j,
                x_start=loc.x_start,
                x_end=loc.x_end,
                want_up=segment.pattern.kind is PatternKind.UP,
            )
        )
    return tuple(checks)
