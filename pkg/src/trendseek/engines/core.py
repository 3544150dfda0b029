"""Shared engine machinery: compiled expression scorers, the per-trendline
pair-scoring field, and the hybrid (anchored + fuzzy) solve driver.

A query normalizes into a chain of ShapeExprs (the top-level CONCAT
operands).  Each expr compiles to a scorer that can evaluate itself over a
candidate segment [lo..hi]; slope-only exprs additionally support fully
vectorized evaluation over all (lo, hi) pairs at once, which is what the
DP and segment-tree engines run on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from trendseek.algebra import (
    And,
    Concat,
    Not,
    Or,
    Pattern,
    PatternKind,
    Seg,
    ShapeQueryAst,
    ShapeSegment,
    iter_segments,
    normalize_ast,
    top_level_exprs,
)
from trendseek.ingest import CandidateViz
from trendseek.scoring import (
    LineFit,
    ScoreContext,
    evaluate_expr,
    fit_line,
    pattern_score_array,
    sharpness_target,
)

NEG_INF = float("-inf")


class EngineError(Exception):
    pass


class TooLarge(EngineError):
    pass


class InfeasibleSegmentation(EngineError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "segtree_prune"
    prune_sample: int = 32
    prune_points: int = 16
    prune_round_levels: int = 2
    eager_pushdown: bool = False
    quantifier_threshold: float = 0.0
    seed: int = 0
    threads: int = 1
    sketch_metric: str = "euclid"
    apply_pushdown: bool = True

    def __post_init__(self) -> None:
        for name in ("prune_sample", "prune_points", "prune_round_levels"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


ENGINE_NAMES = ("exhaustive", "dp", "segtree", "segtree_prune", "greedy", "dtw")

DEFAULT_CONFIG = EngineConfig()


@dataclass(frozen=True)
class SegmentedViz:
    """One breakpoint assignment for one trendline, with its scores.

    ``expr_ranges[j]`` is the dense bin range (inclusive) scored by expr j.
    For a fully fuzzy query the ranges tile the series with shared
    endpoints, i.e. breakpoints() yields b_0=0 < b_1 < ... < b_k = B-1.
    """

    expr_ranges: tuple[tuple[int, int], ...]
    expr_scores: tuple[float, ...]
    total: float
    fits: tuple[Optional[LineFit], ...]

    def breakpoints(self) -> tuple[int, ...]:
        pts = [self.expr_ranges[0][0]]
        for _, hi in self.expr_ranges:
            pts.append(hi)
        return tuple(pts)


# --- pair field -----------------------------------------------------------


class PairField:
    """Vectorized access to the line fit over any dense bin range of a viz."""

    def __init__(self, viz: CandidateViz):
        self.viz = viz
        self.size = viz.size
        self._prefix = viz.prefix_stats()
        self._slope_matrix: Optional[np.ndarray] = None

    def pair_fit(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Slopes and intercepts over segments [lo..hi]; requires lo < hi."""
        p = self._prefix
        d = p[hi + 1] - p[lo]
        n, sx, sy, sxy, sxx = d[..., 0], d[..., 1], d[..., 2], d[..., 3], d[..., 4]
        denom = n * sxx - sx * sx
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (n * sxy - sx * sy) / denom
            intercept = (sy - slope * sx) / n
        return slope, intercept

    def pair_slopes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        return self.pair_fit(lo, hi)[0]

    def slope_matrix(self) -> np.ndarray:
        """(B, B) matrix of slopes over [l..i]; cells with l >= i are garbage."""
        if self._slope_matrix is None:
            b = self.size
            l_idx = np.arange(b, dtype=np.int64)[:, None]
            i_idx = np.arange(b, dtype=np.int64)[None, :]
            self._slope_matrix = self.pair_fit(l_idx, i_idx)[0]
        return self._slope_matrix


# --- compiled expression scorers -------------------------------------------


_VECTOR_PATTERNS = frozenset(
    {
        PatternKind.UP,
        PatternKind.DOWN,
        PatternKind.FLAT,
        PatternKind.THETA,
        PatternKind.ANY,
        PatternKind.EMPTY,
        PatternKind.POSITION_REF,
    }
)


def _segment_supports_vector(segment: ShapeSegment) -> bool:
    if segment.pattern.kind not in _VECTOR_PATTERNS:
        return False
    if segment.modifier.quantifier is not None:
        return False
    if segment.location.iterator_width is not None:
        return False
    return True


def _expr_supports_vector(expr: ShapeQueryAst) -> bool:
    if isinstance(expr, Seg):
        return _segment_supports_vector(expr.segment)
    if isinstance(expr, Not):
        return _expr_supports_vector(expr.child)
    if isinstance(expr, Concat):
        return False
    return all(_expr_supports_vector(c) for c in expr.children)


def _effective_pattern(segment: ShapeSegment) -> Pattern:
    pat = segment.pattern
    cmp = segment.modifier.comparator
    if cmp is not None and pat.kind in (PatternKind.UP, PatternKind.DOWN):
        return Pattern.theta(sharpness_target(pat.kind, cmp))
    return pat


def _vector_eval(
    expr: ShapeQueryAst,
    field: PairField,
    slopes: np.ndarray,
    intercepts: Optional[np.ndarray],
    lo_idx: np.ndarray,
    hi_idx: np.ndarray,
    y_tol: float,
) -> np.ndarray:
    if isinstance(expr, Not):
        return -_vector_eval(expr.child, field, slopes, intercepts, lo_idx, hi_idx, y_tol)
    if isinstance(expr, (And, Or)):
        stacked = [
            _vector_eval(c, field, slopes, intercepts, lo_idx, hi_idx, y_tol)
            for c in expr.children
        ]
        combine = np.maximum if isinstance(expr, Or) else np.minimum
        out = stacked[0]
        for arr in stacked[1:]:
            out = combine(out, arr)
        return out
    assert isinstance(expr, Seg)
    segment = expr.segment
    pat = _effective_pattern(segment)
    if pat.kind is PatternKind.POSITION_REF:
        # Neutral during search; resolved in the final rescoring pass.
        base = np.zeros(np.broadcast(slopes, lo_idx).shape, dtype=np.float64)
    else:
        base = pattern_score_array(pat, slopes)
        base = np.broadcast_to(base, np.broadcast(base, lo_idx).shape).copy()

    loc = segment.location
    if not loc.is_empty():
        xc = field.viz.x_centers
        half = field.viz.bin_width / 2.0
        ok = np.ones(base.shape, dtype=bool)
        if loc.x_start is not None:
            ok &= np.abs(xc[lo_idx] - loc.x_start) <= half
        if loc.x_end is not None:
            ok &= np.abs(xc[hi_idx] - loc.x_end) <= half
        if loc.y_start is not None or loc.y_end is not None:
            if intercepts is None:
                intercepts = field.pair_fit(lo_idx, hi_idx)[1]
            if loc.y_start is not None:
                ok &= np.abs(intercepts + slopes * lo_idx - loc.y_start) <= y_tol
            if loc.y_end is not None:
                ok &= np.abs(intercepts + slopes * hi_idx - loc.y_end) <= y_tol
        base = np.where(ok, base, -1.0)
    return base


def _expr_needs_intercepts(expr: ShapeQueryAst) -> bool:
    for segment in iter_segments(expr):
        if segment.location.y_start is not None or segment.location.y_end is not None:
            return True
    return False


class ExprScorer:
    """One ShapeExpr compiled for both vectorized and scalar evaluation."""

    def __init__(self, expr: ShapeQueryAst, index: int, quantifier_threshold: float = 0.0):
        self.expr = expr
        self.index = index
        self.vector = _expr_supports_vector(expr)
        self.needs_intercepts = _expr_needs_intercepts(expr)
        self.has_posref = any(
            s.pattern.kind is PatternKind.POSITION_REF for s in iter_segments(expr)
        )
        self.quantifier_threshold = quantifier_threshold

    def _y_tol(self, viz: CandidateViz) -> float:
        values = viz.values
        span = float(np.max(values) - np.min(values)) if len(values) else 0.0
        return max(span * 0.05, 1e-9)

    def eval_pairs(self, field: PairField, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Search-mode scores over segments [lo..hi] (arrays, lo < hi)."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        if self.vector:
            slopes, intercepts = field.pair_fit(lo, hi)
            if not self.needs_intercepts:
                intercepts = None
            return _vector_eval(
                self.expr, field, slopes, intercepts, lo, hi, self._y_tol(field.viz)
            )
        out = np.empty(lo.shape, dtype=np.float64)
        flat_lo, flat_hi = lo.ravel(), hi.ravel()
        flat_out = out.ravel()
        ctx = self.search_context(field.viz)
        for idx in range(flat_lo.size):
            flat_out[idx] = evaluate_expr(
                self.expr, field.viz, int(flat_lo[idx]), int(flat_hi[idx]), ctx
            )
        return out

    def matrix(self, field: PairField) -> np.ndarray:
        """(B, B) search scores for all [l..i]; cells with l >= i are -inf."""
        b = field.size
        l_idx = np.arange(b, dtype=np.int64)[:, None]
        i_idx = np.arange(b, dtype=np.int64)[None, :]
        if self.vector:
            slopes = field.slope_matrix()
            intercepts = None
            if self.needs_intercepts:
                intercepts = field.pair_fit(l_idx, i_idx)[1]
            scores = _vector_eval(
                self.expr, field, slopes, intercepts, l_idx, i_idx, self._y_tol(field.viz)
            )
        else:
            scores = np.full((b, b), -1.0, dtype=np.float64)
            ctx = self.search_context(field.viz)
            for l in range(b - 1):
                for i in range(l + 1, b):
                    scores[l, i] = evaluate_expr(self.expr, field.viz, l, i, ctx)
        return np.where(l_idx < i_idx, scores, NEG_INF)

    def eval_one_search(self, viz: CandidateViz, lo: int, hi: int) -> float:
        ctx = self.search_context(viz)
        return evaluate_expr(self.expr, viz, lo, hi, ctx)

    def search_context(self, viz: CandidateViz) -> ScoreContext:
        ctx = ScoreContext(viz=viz, threshold_quantifier=self.quantifier_threshold)
        ctx.posref_neutral = True
        return ctx


@dataclass
class ChainPlan:
    """A normalized query compiled into its ShapeExpr chain."""

    ast: ShapeQueryAst
    exprs: tuple[ShapeQueryAst, ...]
    scorers: tuple[ExprScorer, ...]
    k: int
    anchors: tuple[Optional[tuple[float, float]], ...]
    seg_expr: tuple[int, ...]          # query segment index -> expr index
    has_posref: bool
    quantifier_threshold: float

    @property
    def fully_fuzzy(self) -> bool:
        return all(a is None for a in self.anchors)


def _expr_anchor(expr: ShapeQueryAst) -> Optional[tuple[float, float]]:
    """An expr is anchored when its segments agree on one full x range."""
    pairs = {
        (s.location.x_start, s.location.x_end)
        for s in iter_segments(expr)
        if s.location.is_x_anchored() and s.location.iterator_width is None
    }
    if len(pairs) == 1:
        xs, xe = next(iter(pairs))
        return (float(xs), float(xe))
    return None


def _resolve_relative_refs(ast: ShapeQueryAst) -> ShapeQueryAst:
    """Rewrite $- / $+ references into absolute segment indices."""
    counter = [0]

    def rewrite(node: ShapeQueryAst) -> ShapeQueryAst:
        if isinstance(node, Seg):
            idx = counter[0]
            counter[0] += 1
            pat = node.segment.pattern
            if pat.kind is PatternKind.POSITION_REF and isinstance(pat.ref, str):
                absolute = idx + (1 if pat.ref == "+" else -1)
                return Seg(replace(node.segment, pattern=replace(pat, ref=absolute)))
            return node
        if isinstance(node, Not):
            return Not(rewrite(node.child))
        return type(node)(tuple(rewrite(c) for c in node.children))

    return rewrite(ast)


def build_chain_plan(ast: ShapeQueryAst, config: EngineConfig = DEFAULT_CONFIG) -> ChainPlan:
    norm = normalize_ast(_resolve_relative_refs(normalize_ast(ast)))
    exprs = top_level_exprs(norm)
    scorers = tuple(
        ExprScorer(e, j, config.quantifier_threshold) for j, e in enumerate(exprs)
    )
    seg_expr: list[int] = []
    for j, e in enumerate(exprs):
        seg_expr.extend(j for _ in iter_segments(e))
    return ChainPlan(
        ast=norm,
        exprs=exprs,
        scorers=scorers,
        k=len(exprs),
        anchors=tuple(_expr_anchor(e) for e in exprs),
        seg_expr=tuple(seg_expr),
        has_posref=any(s.has_posref for s in scorers),
        quantifier_threshold=config.quantifier_threshold,
    )


# --- hybrid solve driver ----------------------------------------------------

ChainSolver = Callable[[Sequence[ExprScorer], CandidateViz], tuple[tuple[int, ...], tuple[float, ...]]]
"""Solves a fully fuzzy chain on a viz: returns (breakpoints b_0..b_k, search scores)."""


def _nearest_bin(viz: CandidateViz, x: float) -> int:
    return int(np.argmin(np.abs(viz.x_centers - x)))


def _final_scores(
    plan: ChainPlan, viz: CandidateViz, ranges: Sequence[tuple[int, int]], config: EngineConfig
) -> tuple[tuple[float, ...], tuple[Optional[LineFit]], float]:
    """Re-score every expr on its final range with sibling fits resolved."""
    fits: list[Optional[LineFit]] = []
    for lo, hi in ranges:
        try:
            fits.append(fit_line(viz.segment_stats(lo, hi), (lo, hi)))
        except Exception:
            fits.append(None)
    sibling_fits = [fits[plan.seg_expr[i]] for i in range(len(plan.seg_expr))]
    scores: list[float] = []
    for scorer, (lo, hi) in zip(plan.scorers, ranges):
        ctx = ScoreContext(
            viz=viz,
            sibling_fits=sibling_fits,
            threshold_quantifier=config.quantifier_threshold,
        )
        scores.append(evaluate_expr(scorer.expr, viz, lo, hi, ctx))
    total = right_assoc_mean(scores)
    return tuple(scores), tuple(fits), total


def right_assoc_mean(scores: Sequence[float]) -> float:
    """Mean with right-associated addition, shared by every engine so that
    equal segmentations produce bit-identical totals."""
    acc = 0.0
    for s in reversed(scores):
        acc = s + acc
    return acc / len(scores)


def solve(
    plan: ChainPlan,
    viz: CandidateViz,
    chain_solver: ChainSolver,
    config: EngineConfig = DEFAULT_CONFIG,
    search_scores_are_final: bool = True,
) -> SegmentedViz:
    """Resolve anchored exprs from their locations, run the fuzzy solver on
    every leftover gap, then score the assembled segmentation."""
    k = plan.k
    b = viz.size
    if b < 2:
        raise InfeasibleSegmentation("trendline has fewer than 2 bins")

    ranges: list[Optional[tuple[int, int]]] = [None] * k
    for j, anchor in enumerate(plan.anchors):
        if anchor is None:
            continue
        lo = _nearest_bin(viz, anchor[0])
        hi = _nearest_bin(viz, anchor[1])
        if hi <= lo:
            raise InfeasibleSegmentation(
                f"anchored range {anchor} collapses to a single bin"
            )
        ranges[j] = (lo, hi)

    search_scores: list[Optional[float]] = [None] * k
    if plan.fully_fuzzy:
        bps, scores = chain_solver(plan.scorers, viz)
        ranges = [(bps[j], bps[j + 1]) for j in range(k)]
        search_scores = list(scores)
    else:
        # Solve each fuzzy gap between anchored neighbours independently.
        j = 0
        while j < k:
            if ranges[j] is not None:
                search_scores[j] = plan.scorers[j].eval_one_search(viz, *ranges[j])
                j += 1
                continue
            start = j
            while j < k and ranges[j] is None:
                j += 1
            gap_lo = ranges[start - 1][1] if start > 0 else 0
            gap_hi = ranges[j][0] if j < k else b - 1
            length = gap_hi - gap_lo
            count = j - start
            if length < count:
                raise InfeasibleSegmentation(
                    f"{count} fuzzy exprs cannot fit in {length + 1} bins"
                )
            sub = viz.slice(gap_lo, gap_hi)
            bps, scores = chain_solver(plan.scorers[start:j], sub)
            for t in range(count):
                ranges[start + t] = (gap_lo + bps[t], gap_lo + bps[t + 1])
                search_scores[start + t] = scores[t]

    final_ranges = tuple(r for r in ranges if r is not None)
    assert len(final_ranges) == k
    if plan.has_posref or not search_scores_are_final or any(s is None for s in search_scores):
        expr_scores, fits, total = _final_scores(plan, viz, final_ranges, config)
    else:
        fits = []
        for lo, hi in final_ranges:
            try:
                fits.append(fit_line(viz.segment_stats(lo, hi), (lo, hi)))
            except Exception:
                fits.append(None)
        fits = tuple(fits)
        expr_scores = tuple(float(s) for s in search_scores)
        total = right_assoc_mean(expr_scores)
    return SegmentedViz(
        expr_ranges=final_ranges, expr_scores=expr_scores, total=total, fits=fits
    )
