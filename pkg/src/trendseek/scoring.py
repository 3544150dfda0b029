"""Perceptual scoring: line fitting, pattern and operator scores, quantifier
and sketch scoring, and the full per-segment dispatch used by the engines.

All scores live in [-1, 1]; 1 is a perfect match.  Pattern scores are
functions of the fitted slope only (arctan-compressed so that improvements
near the extremes matter less), which is what makes scoring additive over
the summarized statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from trendseek.algebra import (
    Comparator,
    Concat,
    Not,
    Or,
    Pattern,
    PatternKind,
    Seg,
    ShapeQueryAst,
    ShapeSegment,
)
from trendseek.ingest import CandidateViz, SummarizedStats

HALF_PI = math.pi / 2.0
#: Denominator guard for degenerate x spreads.
_DEGENERATE_EPS = 1e-12
#: y endpoints match within this fraction of the trendline's y range.
Y_LOCATION_TOLERANCE = 0.05


class ScoringError(Exception):
    pass


class SegmentTooSmall(ScoringError):
    pass


class DegenerateX(ScoringError):
    pass


class EmptySketch(ScoringError):
    pass


@dataclass(frozen=True)
class LineFit:
    """Least-squares line over one visual segment (x in bin positions)."""

    slope: float
    intercept: float
    n_points: int
    x_range: tuple[float, float] = (0.0, 0.0)

    def value_at(self, x: float) -> float:
        return self.intercept + self.slope * x


def fit_line(stats: SummarizedStats, x_range: tuple[float, float] = (0.0, 0.0)) -> LineFit:
    """Fit slope and intercept from summarized statistics.

    slope = (n*Sxy - Sx*Sy) / (n*Sxx - Sx^2); intercept = (Sy - slope*Sx)/n.
    Raises SegmentTooSmall for n < 2 and DegenerateX when all x coincide.
    """
    n = stats.n
    if n < 2:
        raise SegmentTooSmall(f"need at least 2 points, got {n}")
    denom = n * stats.sum_xx - stats.sum_x * stats.sum_x
    if denom <= _DEGENERATE_EPS:
        raise DegenerateX("all x values coincide")
    slope = (n * stats.sum_xy - stats.sum_x * stats.sum_y) / denom
    intercept = (stats.sum_y - slope * stats.sum_x) / n
    return LineFit(slope=slope, intercept=intercept, n_points=int(n), x_range=x_range)


def clamp_score(value: float) -> float:
    if value > 1.0:
        return 1.0
    if value < -1.0:
        return -1.0
    return value


# --- pattern scores ------------------------------------------------------


def up_score(slope: float) -> float:
    return 2.0 * math.atan(slope) / math.pi


def flat_score(slope: float) -> float:
    return clamp_score(1.0 - abs(4.0 * math.atan(slope) / math.pi))


def theta_score(slope: float, angle_deg: float) -> float:
    """1 at an exact angular match, falling to -1 at the far slope extreme."""
    x_rad = math.radians(angle_deg)
    return clamp_score(1.0 - 2.0 * abs(math.atan(slope) - x_rad) / (HALF_PI + abs(x_rad)))


def score_pattern(pattern: Pattern, fit: LineFit) -> float:
    """Score one of the slope-based patterns against a fitted segment."""
    kind = pattern.kind
    if kind is PatternKind.UP:
        return up_score(fit.slope)
    if kind is PatternKind.DOWN:
        return -up_score(fit.slope)
    if kind is PatternKind.FLAT:
        return flat_score(fit.slope)
    if kind is PatternKind.THETA:
        return theta_score(fit.slope, pattern.angle or 0.0)
    if kind is PatternKind.ANY:
        return 1.0
    if kind is PatternKind.EMPTY:
        return -1.0
    raise ScoringError(f"pattern {kind.value} has no slope-based score")


def pattern_score_array(pattern: Pattern, slopes: np.ndarray) -> np.ndarray:
    """Vectorized score_pattern over an array of slopes."""
    kind = pattern.kind
    if kind is PatternKind.UP:
        return 2.0 * np.arctan(slopes) / np.pi
    if kind is PatternKind.DOWN:
        return -2.0 * np.arctan(slopes) / np.pi
    if kind is PatternKind.FLAT:
        return np.maximum(1.0 - np.abs(4.0 * np.arctan(slopes) / np.pi), -1.0)
    if kind is PatternKind.THETA:
        x_rad = math.radians(pattern.angle or 0.0)
        raw = 1.0 - 2.0 * np.abs(np.arctan(slopes) - x_rad) / (HALF_PI + abs(x_rad))
        return np.clip(raw, -1.0, 1.0)
    if kind is PatternKind.ANY:
        return np.ones_like(slopes)
    if kind is PatternKind.EMPTY:
        return np.full_like(slopes, -1.0)
    raise ScoringError(f"pattern {kind.value} has no slope-based score")


def score_operator(kind: str, child_scores: Sequence[float]) -> float:
    """Combine child scores: concat averages, and takes min, or takes max,
    not negates its single child."""
    if not child_scores:
        raise ScoringError("operator needs at least one child score")
    if kind == "concat":
        return sum(child_scores) / len(child_scores)
    if kind == "and":
        return min(child_scores)
    if kind == "or":
        return max(child_scores)
    if kind == "not":
        if len(child_scores) != 1:
            raise ScoringError("not takes exactly one child")
        return -child_scores[0]
    raise ScoringError(f"unknown operator {kind!r}")


# Sharpness modifiers re-center up/down as a slope-angle target.
_SHARPNESS_ANGLE = {
    Comparator.GREATER_MUCH: 67.5,
    Comparator.GREATER: 45.0,
    Comparator.LESS: 22.5,
    Comparator.LESS_MUCH: 11.25,
}


def sharpness_target(pattern_kind: PatternKind, comparator: Comparator) -> float:
    angle = _SHARPNESS_ANGLE[comparator]
    return angle if pattern_kind is PatternKind.UP else -angle


# --- quantifier scoring --------------------------------------------------


def score_quantifier(
    viz: CandidateViz,
    lo: int,
    hi: int,
    pattern: Pattern,
    q_min: int,
    q_max: Optional[int],
    threshold: float = 0.0,
) -> float:
    """Count disjoint sub-segments matching the pattern above ``threshold``.

    Sub-segments of every length from 2 bins up to the segment length are
    scored; a maximal non-overlapping selection (sharing an endpoint is
    allowed) is picked greedily by descending score.  A count outside
    [q_min, q_max] scores -1; otherwise the mean of the best q_min selected
    scores (1.0 when q_min is 0, the vacuous constraint).
    """
    if hi <= lo:
        return -1.0 if q_min > 0 else 1.0
    candidates: list[tuple[float, int, int]] = []
    for i in range(lo, hi):
        for j in range(i + 1, hi + 1):
            fit = fit_line(viz.segment_stats(i, j), (i, j))
            s = score_pattern(pattern, fit)
            if s > threshold:
                candidates.append((s, i, j))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    selected: list[tuple[float, int, int]] = []
    for s, i, j in candidates:
        if all(max(i, i2) >= min(j, j2) for _, i2, j2 in selected):
            selected.append((s, i, j))
    count = len(selected)
    if count < q_min or (q_max is not None and count > q_max):
        return -1.0
    if q_min == 0:
        return 1.0
    top = sorted((s for s, _, _ in selected), reverse=True)[:q_min]
    return sum(top) / q_min


# --- sketch scoring ------------------------------------------------------


def _znorm(values: np.ndarray) -> np.ndarray:
    std = float(np.std(values))
    if std == 0.0:
        return np.zeros_like(values)
    return (values - float(np.mean(values))) / std


def sketch_distance(
    points: Sequence[tuple[float, float]],
    viz: CandidateViz,
    metric: str = "euclid",
    lo: int = 0,
    hi: Optional[int] = None,
) -> float:
    """Raw distance between a sketch and a trendline (or a slice of one).

    The sketch is linearly resampled onto the trendline's bin grid and both
    series are z-normalized before measuring, so the comparison is scale
    and translation invariant.
    """
    if len(points) < 2:
        raise EmptySketch("sketch needs at least 2 points")
    hi = viz.size - 1 if hi is None else hi
    grid = viz.x_centers[lo : hi + 1]
    sk_x = np.array([p[0] for p in points], dtype=np.float64)
    sk_y = np.array([p[1] for p in points], dtype=np.float64)
    resampled = np.interp(grid, sk_x, sk_y)
    a = _znorm(resampled)
    b = _znorm(viz.values[lo : hi + 1])
    if metric == "euclid":
        return float(np.sqrt(np.sum((a - b) ** 2)))
    if metric == "dtw":
        from trendseek.engines.dtw import dtw_distance

        return dtw_distance(a, b)
    raise ScoringError(f"unknown sketch metric {metric!r}")


def normalize_sketch_distances(distances: Sequence[float]) -> list[float]:
    """Map raw distances across the candidate set into scores in [-1, 1].

    score = 1 - 2*(d - d_min)/(d_max - d_min); an all-equal set maps to 1.
    The induced ranking is exactly the raw-distance ranking reversed.
    """
    if not distances:
        return []
    d_min = min(distances)
    d_max = max(distances)
    if d_max - d_min <= 0.0:
        return [1.0 for _ in distances]
    return [1.0 - 2.0 * (d - d_min) / (d_max - d_min) for d in distances]


def score_sketch(
    points: Sequence[tuple[float, float]],
    vizs: Sequence[CandidateViz],
    metric: str = "euclid",
) -> list[float]:
    """Distance-based scores for a sketch over a whole candidate set."""
    return normalize_sketch_distances([sketch_distance(points, v, metric) for v in vizs])


# --- user-defined patterns ------------------------------------------------


@dataclass(frozen=True)
class VisualSegment:
    """The slice of a trendline a user-defined pattern is scored on."""

    viz: CandidateViz
    lo: int
    hi: int
    fit: Optional[LineFit]

    @property
    def values(self) -> np.ndarray:
        return self.viz.values[self.lo : self.hi + 1]

    @property
    def x_centers(self) -> np.ndarray:
        return self.viz.x_centers[self.lo : self.hi + 1]


UdpScorer = Callable[[VisualSegment], float]

_UDP_REGISTRY: dict[str, UdpScorer] = {}


def register_udp(name: str, scorer: UdpScorer) -> None:
    """Register a named scoring callable: (VisualSegment) -> value in [-1, 1]."""
    _UDP_REGISTRY[name] = scorer


def get_udp(name: str) -> UdpScorer:
    try:
        return _UDP_REGISTRY[name]
    except KeyError:
        raise ScoringError(f"user-defined pattern {name!r} is not registered") from None


def registered_udps() -> tuple[str, ...]:
    return tuple(sorted(_UDP_REGISTRY))


# --- full segment dispatch -------------------------------------------------


@dataclass
class ScoreContext:
    """Cross-segment state needed while scoring one trendline."""

    viz: CandidateViz
    sibling_fits: list[Optional[LineFit]] = field(default_factory=list)
    threshold_quantifier: float = 0.0
    diagnostics: list[str] = field(default_factory=list)
    #: During breakpoint search sibling fits are not known yet; unresolved
    #: position references then score a neutral 0 instead of -1.
    posref_neutral: bool = False

    def y_tolerance(self) -> float:
        values = self.viz.values
        span = float(np.max(values) - np.min(values)) if len(values) else 0.0
        return max(span * Y_LOCATION_TOLERANCE, 1e-9)


def _location_gate(segment: ShapeSegment, viz: CandidateViz, lo: int, hi: int, fit: Optional[LineFit], ctx: ScoreContext) -> bool:
    loc = segment.location
    half = viz.bin_width / 2.0
    if loc.x_start is not None and abs(float(viz.x_centers[lo]) - loc.x_start) > half:
        return False
    if loc.x_end is not None and abs(float(viz.x_centers[hi]) - loc.x_end) > half:
        return False
    if loc.y_start is not None or loc.y_end is not None:
        if fit is None:
            return False
        tol = ctx.y_tolerance()
        if loc.y_start is not None and abs(fit.value_at(lo) - loc.y_start) > tol:
            return False
        if loc.y_end is not None and abs(fit.value_at(hi) - loc.y_end) > tol:
            return False
    return True


def _resolve_posref_index(segment: ShapeSegment, ctx: ScoreContext) -> Optional[int]:
    ref = segment.pattern.ref
    if isinstance(ref, int):
        return ref
    # Relative references were resolved to absolute indices during planning;
    # reaching here with one means the context was built by hand.
    return None


def _score_posref(segment: ShapeSegment, fit: LineFit, ctx: ScoreContext) -> float:
    idx = _resolve_posref_index(segment, ctx)
    if idx is None or idx >= len(ctx.sibling_fits) or ctx.sibling_fits[idx] is None:
        if ctx.posref_neutral:
            return 0.0
        ctx.diagnostics.append("position reference could not be resolved")
        return -1.0
    ref_slope = ctx.sibling_fits[idx].slope
    slope = fit.slope
    cmp = segment.modifier.comparator or Comparator.EQUAL
    mult = segment.modifier.multiplier
    if cmp is Comparator.GREATER:
        ok = slope > ref_slope * (mult if mult is not None else 1.0)
    elif cmp is Comparator.GREATER_MUCH:
        ok = slope > ref_slope * (mult if mult is not None else 2.0)
    elif cmp is Comparator.LESS:
        ok = slope < ref_slope * (mult if mult is not None else 1.0)
    elif cmp is Comparator.LESS_MUCH:
        ok = slope < ref_slope * (mult if mult is not None else 0.5)
    else:
        scale = max(abs(slope), abs(ref_slope), 1e-9)
        ok = abs(slope - ref_slope) <= 0.10 * scale
    return 1.0 if ok else -1.0


def score_shape_segment(
    segment: ShapeSegment, viz: CandidateViz, lo: int, hi: int, ctx: ScoreContext
) -> float:
    """Score one ShapeSegment over dense bins [lo..hi] of a trendline.

    Total by construction: failures (too few points, degenerate x) score -1
    with a diagnostic rather than raising, so ranking never aborts.
    """
    try:
        fit = fit_line(viz.segment_stats(lo, hi), (lo, hi))
    except (SegmentTooSmall, DegenerateX) as exc:
        ctx.diagnostics.append(f"segment [{lo}..{hi}]: {exc}")
        fit = None

    if not _location_gate(segment, viz, lo, hi, fit, ctx):
        return -1.0

    pat = segment.pattern
    mod = segment.modifier
    kind = pat.kind

    if kind is PatternKind.ANY:
        return 1.0
    if kind is PatternKind.EMPTY:
        return -1.0

    if kind is PatternKind.SKETCH:
        # Sketch scoring needs the whole candidate set for normalization;
        # engines route sketch queries through score_sketch instead.
        raise ScoringError("sketch segments are scored at the query level")

    if kind is PatternKind.NESTED and pat.sub is not None:
        from trendseek.engines.dp import solve_query_on_range

        w = segment.location.iterator_width
        if w is not None and hi - lo > w:
            # Scan the nested query over every width-w window.
            return max(
                solve_query_on_range(pat.sub, viz, i, i + w, ctx)
                for i in range(lo, hi - w + 1)
            )
        return solve_query_on_range(pat.sub, viz, lo, hi, ctx)

    if fit is None:
        return -1.0

    if kind is PatternKind.POSITION_REF:
        return _score_posref(segment, fit, ctx)

    if kind is PatternKind.UDP:
        scorer = get_udp(pat.name or "")
        return clamp_score(float(scorer(VisualSegment(viz, lo, hi, fit))))

    # Slope patterns, possibly refined by iterator / quantifier / sharpness.
    eff_pattern = pat
    if mod.comparator is not None and kind in (PatternKind.UP, PatternKind.DOWN):
        eff_pattern = Pattern.theta(sharpness_target(kind, mod.comparator))

    if segment.location.iterator_width is not None:
        w = segment.location.iterator_width
        if hi - lo <= w:
            return score_pattern(eff_pattern, fit)
        best = -1.0
        for i in range(lo, hi - w + 1):
            window_fit = fit_line(viz.segment_stats(i, i + w), (i, i + w))
            best = max(best, score_pattern(eff_pattern, window_fit))
        return best

    if mod.quantifier is not None:
        return score_quantifier(
            viz, lo, hi, eff_pattern, mod.quantifier.min, mod.quantifier.max,
            ctx.threshold_quantifier,
        )

    return score_pattern(eff_pattern, fit)


def evaluate_expr(
    expr: ShapeQueryAst, viz: CandidateViz, lo: int, hi: int, ctx: ScoreContext
) -> float:
    """Score an operator subtree over one visual segment.

    A Concat below the expression level re-segments the slice it is scored
    on (an exact sub-solve), matching the recursive semantics of nesting.
    """
    if isinstance(expr, Seg):
        return score_shape_segment(expr.segment, viz, lo, hi, ctx)
    if isinstance(expr, Not):
        return -evaluate_expr(expr.child, viz, lo, hi, ctx)
    if isinstance(expr, Concat):
        from trendseek.engines.dp import solve_chain_on_range

        return solve_chain_on_range(expr.children, viz, lo, hi, ctx)
    scores = [evaluate_expr(child, viz, lo, hi, ctx) for child in expr.children]
    return max(scores) if isinstance(expr, Or) else min(scores)
