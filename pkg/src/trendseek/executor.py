"""End-to-end query execution: extract, group, segment, score, rank."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from trendseek.algebra import (
    PatternKind,
    ShapeQueryAst,
    iter_segments,
    normalize_ast,
    validate_ast,
)
from trendseek.engines.core import (
    ChainPlan,
    EngineConfig,
    InfeasibleSegmentation,
    SegmentedViz,
    build_chain_plan,
    solve,
)
from trendseek.engines.dp import dp_chain
from trendseek.engines.dtw import dtw_distance
from trendseek.engines.exhaustive import exhaustive_chain
from trendseek.engines.greedy import greedy_chain
from trendseek.engines.prune import PruneStats, prune_run
from trendseek.engines.pushdown import ExecutionPlan, pushdown_plan
from trendseek.engines.segtree import segtree_chain
from trendseek.ingest import (
    CandidateViz,
    Dataset,
    VisualSpec,
    extract,
    group_and_bin,
)
from trendseek.scoring import LineFit, fit_line, normalize_sketch_distances, sketch_distance

_CHAIN_SOLVERS = {
    "dp": dp_chain,
    "exhaustive": exhaustive_chain,
    "greedy": greedy_chain,
    "segtree": segtree_chain,
}


@dataclass(frozen=True)
class RankedResult:
    """One ranked trendline with everything needed to draw it."""

    viz_id: str
    total: float
    breakpoint_bins: tuple[int, ...]
    breakpoint_x: tuple[float, ...]
    expr_scores: tuple[float, ...]
    fits: tuple[Optional[LineFit], ...]
    expr_ranges: tuple[tuple[int, int], ...]
    series_x: tuple[float, ...]
    series_y: tuple[float, ...]
    bin_x: tuple[float, ...]
    bin_y: tuple[float, ...]

    def to_json_dict(self, max_points: int = 1000) -> dict:
        xs, ys = self.series_x, self.series_y
        if max_points and len(xs) > max_points:
            idx = np.linspace(0, len(xs) - 1, max_points).round().astype(int)
            xs = tuple(xs[i] for i in idx)
            ys = tuple(ys[i] for i in idx)
        return {
            "viz_id": self.viz_id,
            "total": self.total,
            "breakpoint_bins": list(self.breakpoint_bins),
            "breakpoint_x": list(self.breakpoint_x),
            "expr_scores": list(self.expr_scores),
            "expr_ranges": [list(r) for r in self.expr_ranges],
            "fits": [
                None
                if f is None
                else {
                    "slope": f.slope,
                    "intercept": f.intercept,
                    "n_points": f.n_points,
                    "x_range": list(f.x_range),
                }
                for f in self.fits
            ],
            "series": {"x": list(xs), "y": list(ys)},
            "bins": {"x": list(self.bin_x), "y": list(self.bin_y)},
        }


@dataclass
class QueryOutcome:
    results: list[RankedResult]
    warnings: list[str]
    timings_ms: dict[str, float]
    prune_stats: Optional[PruneStats] = None


def query_has_y_constraints(ast: ShapeQueryAst) -> bool:
    return any(
        s.location.y_start is not None or s.location.y_end is not None
        for s in iter_segments(ast)
    )


def _sketch_only(plan: ChainPlan) -> Optional[tuple[tuple[float, float], ...]]:
    if plan.k != 1:
        return None
    segs = list(iter_segments(plan.exprs[0]))
    if len(segs) == 1 and segs[0].pattern.kind is PatternKind.SKETCH:
        return segs[0].pattern.points
    return None


def _ranked_from_segmented(viz: CandidateViz, segmented: SegmentedViz) -> RankedResult:
    bps = segmented.breakpoints()
    return RankedResult(
        viz_id=viz.id,
        total=segmented.total,
        breakpoint_bins=bps,
        breakpoint_x=tuple(float(viz.x_centers[b]) for b in bps),
        expr_scores=segmented.expr_scores,
        fits=segmented.fits,
        expr_ranges=segmented.expr_ranges,
        series_x=tuple(float(v) for v in viz.raw_x),
        series_y=tuple(float(v) for v in viz.raw_y),
        bin_x=tuple(float(v) for v in viz.x_centers),
        bin_y=tuple(float(v) for v in viz.values),
    )


def _eager_filter(
    plan: ChainPlan, exec_plan: ExecutionPlan, vizs: list[CandidateViz], warnings: list[str]
) -> list[CandidateViz]:
    if not exec_plan.eager_checks:
        return vizs
    kept: list[CandidateViz] = []
    for viz in vizs:
        ok = True
        for check in exec_plan.eager_checks:
            lo = int(np.argmin(np.abs(viz.x_centers - check.x_start)))
            hi = int(np.argmin(np.abs(viz.x_centers - check.x_end)))
            if hi <= lo:
                ok = False
                break
            slope = fit_line(viz.segment_stats(lo, hi)).slope
            score = slope if check.want_up else -slope
            if score < 0.0:
                ok = False
                break
        if ok:
            kept.append(viz)
        else:
            warnings.append(f"{viz.id!r} discarded by eager anchored-pattern check")
    return kept


def run_query(
    dataset: Dataset,
    spec: VisualSpec,
    ast: ShapeQueryAst,
    k: int = 10,
    config: EngineConfig = EngineConfig(),
) -> QueryOutcome:
    """Execute the full pipeline and return the top-k trendlines.

    Per-trendline failures (too short, degenerate) are skipped with a
    warning; identical inputs and config produce identical output across
    runs and thread counts.
    """
    import time

    if k < 1:
        raise ValueError("k must be at least 1")
    report = validate_ast(ast)
    if not report.ok:
        raise ValueError("invalid query: " + "; ".join(i.message for i in report.issues))

    warnings: list[str] = []
    timings: dict[str, float] = {}
    plan = build_chain_plan(normalize_ast(ast), config)
    exec_plan = pushdown_plan(plan, spec)

    t0 = time.perf_counter()
    ranges = exec_plan.ranges if config.apply_pushdown else None
    records = extract(dataset, spec, x_ranges=ranges)
    timings["extract_ms"] = (time.perf_counter() - t0) * 1000

    t0 = time.perf_counter()
    normalize = not query_has_y_constraints(plan.ast)
    vizs = group_and_bin(
        records,
        spec,
        normalize=normalize,
        materialize=ranges,
        norm_scope=exec_plan.ranges,
        warnings=warnings,
    )
    timings["group_ms"] = (time.perf_counter() - t0) * 1000

    t0 = time.perf_counter()
    outcome = QueryOutcome(results=[], warnings=warnings, timings_ms=timings)
    sketch = _sketch_only(plan)
    if sketch is not None:
        _run_sketch(sketch, vizs, k, config, outcome)
    elif config.engine == "dtw":
        _run_dtw(plan, vizs, k, config, outcome)
    elif config.engine == "segtree_prune":
        if config.eager_pushdown:
            vizs = _eager_filter(plan, exec_plan, vizs, warnings)
        ranked, stats = prune_run(plan, vizs, k, config)
        outcome.prune_stats = stats
        outcome.results = [_ranked_from_segmented(v, s) for v, s in ranked]
    else:
        if config.eager_pushdown:
            vizs = _eager_filter(plan, exec_plan, vizs, warnings)
        _run_chain_engine(plan, vizs, k, config, outcome)
    timings["solve_ms"] = (time.perf_counter() - t0) * 1000
    return outcome


def _run_chain_engine(
    plan: ChainPlan,
    vizs: list[CandidateViz],
    k: int,
    config: EngineConfig,
    outcome: QueryOutcome,
) -> None:
    solver = _CHAIN_SOLVERS[config.engine]

    def solve_one(viz: CandidateViz) -> Optional[tuple[CandidateViz, SegmentedViz]]:
        try:
            return viz, solve(plan, viz, solver, config)
        except InfeasibleSegmentation as exc:
            outcome.warnings.append(f"{viz.id!r} skipped: {exc}")
            return None

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            solved = list(pool.map(solve_one, vizs))
    else:
        solved = [solve_one(v) for v in vizs]
    pairs = [p for p in solved if p is not None]
    pairs.sort(key=lambda item: (-item[1].total, item[0].id))
    outcome.results = [_ranked_from_segmented(v, s) for v, s in pairs[:k]]


def _run_sketch(
    points: tuple[tuple[float, float], ...],
    vizs: list[CandidateViz],
    k: int,
    config: EngineConfig,
    outcome: QueryOutcome,
) -> None:
    usable = [v for v in vizs if v.size >= 2]
    distances = [sketch_distance(points, v, config.sketch_metric) for v in usable]
    scores = normalize_sketch_distances(distances)
    order = sorted(range(len(usable)), key=lambda i: (-scores[i], usable[i].id))
    results = []
    for i in order[:k]:
        viz = usable[i]
        try:
            fit = fit_line(viz.segment_stats(0, viz.size - 1), (0, viz.size - 1))
        except Exception:
            fit = None
        segmented = SegmentedViz(
            expr_ranges=((0, viz.size - 1),),
            expr_scores=(scores[i],),
            total=scores[i],
            fits=(fit,),
        )
        results.append(_ranked_from_segmented(viz, segmented))
    outcome.results = results


def _run_dtw(
    plan: ChainPlan,
    vizs: list[CandidateViz],
    k: int,
    config: EngineConfig,
    outcome: QueryOutcome,
) -> None:
    """Baseline: rank by elastic distance to an idealized query silhouette."""
    template = _chain_template(plan)
    usable = [v for v in vizs if v.size >= 2]
    distances = []
    for viz in usable:
        resampled = np.interp(
            np.linspace(0.0, 1.0, len(template)),
            np.linspace(0.0, 1.0, viz.size),
            viz.values,
        )
        std = float(np.std(resampled))
        series = (resampled - float(np.mean(resampled))) / std if std > 0 else resampled * 0.0
        distances.append(dtw_distance(series, template))
    scores = normalize_sketch_distances(distances)
    order = sorted(range(len(usable)), key=lambda i: (-scores[i], usable[i].id))
    results = []
    for i in order[:k]:
        viz = usable[i]
        try:
            fit = fit_line(viz.segment_stats(0, viz.size - 1), (0, viz.size - 1))
        except Exception:
            fit = None
        segmented = SegmentedViz(
            expr_ranges=((0, viz.size - 1),),
            expr_scores=(scores[i],),
            total=scores[i],
            fits=(fit,),
        )
        results.append(_ranked_from_segmented(viz, segmented))
    outcome.results = results


def _chain_template(plan: ChainPlan, per_expr: int = 16) -> np.ndarray:
    """Piecewise-linear silhouette of the queried shape for the DTW baseline."""
    import math

    from trendseek.algebra import Seg

    slopes: list[float] = []
    for expr in plan.exprs:
        angle = 0.0
        for segment in iter_segments(expr):
            kind = segment.pattern.kind
            if kind is PatternKind.UP:
                angle = 45.0
            elif kind is PatternKind.DOWN:
                angle = -45.0
            elif kind is PatternKind.THETA:
                angle = segment.pattern.angle or 0.0
            elif kind is PatternKind.FLAT:
                angle = 0.0
            break
        slopes.append(math.tan(math.radians(angle)))
    values = [0.0]
    for slope in slopes:
        for _ in range(per_expr):
            values.append(values[-1] + slope)
    arr = np.asarray(values)
    std = float(np.std(arr))
    return (arr - float(np.mean(arr))) / std if std > 0 else arr * 0.0
