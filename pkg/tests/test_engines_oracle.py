import numpy as np
import pytest

from trendseek.corpus import series_viz
from trendseek.engines import (
    InfeasibleSegmentation,
    TooLarge,
    enumerate_exhaustive,
    solve_dp,
    solve_greedy,
)
from trendseek.parser import parse_shapequery

UP_DOWN = parse_shapequery("u>>d")
UP_DOWN_UP = parse_shapequery("u>>d>>u")
OR_FLAT = parse_shapequery("(u|d)>>f")


def test_exhaustive_triangle(triangle_viz):
    res = enumerate_exhaustive(UP_DOWN, triangle_viz)
    assert res.breakpoints() == (0, 2, 4)
    assert res.total == pytest.approx(0.5, abs=1e-12)


def test_exhaustive_single_expr(triangle_viz):
    res = enumerate_exhaustive(parse_shapequery("u"), triangle_viz)
    assert res.breakpoints() == (0, 4)


def test_exhaustive_forced_chain():
    # B = k + 1 leaves exactly one breakpoint vector
    viz = series_viz([0.0, 1.0, 0.0])
    res = enumerate_exhaustive(UP_DOWN, viz)
    assert res.breakpoints() == (0, 1, 2)


def test_exhaustive_too_large():
    viz = series_viz(list(np.linspace(0, 1, 80)))
    with pytest.raises(TooLarge):
        enumerate_exhaustive(UP_DOWN, viz)


def test_infeasible_when_too_few_bins():
    viz = series_viz([0.0, 1.0, 0.0])
    with pytest.raises(InfeasibleSegmentation):
        solve_dp(UP_DOWN_UP, viz)


def test_dp_triangle(triangle_viz):
    res = solve_dp(UP_DOWN, triangle_viz)
    assert res.breakpoints() == (0, 2, 4)
    assert res.total == pytest.approx(0.5, abs=1e-12)


def test_dp_monotone_series_splits_somewhere():
    viz = series_viz([0.0, 1.0, 2.0, 3.0])
    res = solve_dp(UP_DOWN, viz)
    oracle = enumerate_exhaustive(UP_DOWN, viz)
    assert res.total == pytest.approx(oracle.total, abs=1e-12)
    assert res.total < 0.5  # the down part is forced onto a rising region
    assert res.breakpoints() == oracle.breakpoints()


def test_dp_single_expr_is_whole_series(triangle_viz):
    res = solve_dp(parse_shapequery("u"), triangle_viz)
    assert res.breakpoints() == (0, 4)
    assert res.expr_ranges == ((0, 4),)


def test_dp_matches_oracle_on_random_series(rng):
    queries = [UP_DOWN, UP_DOWN_UP, OR_FLAT]
    for trial in range(60):
        b = int(rng.integers(5, 13))
        viz = series_viz(list(rng.normal(size=b)))
        query = queries[trial % 3]
        oracle = enumerate_exhaustive(query, viz)
        got = solve_dp(query, viz)
        assert abs(got.total - oracle.total) <= 1e-9
        assert got.breakpoints() == oracle.breakpoints()


def test_dp_tie_break_lexicographic():
    # symmetric plateau: [0,1,3] and [0,2,3] tie exactly; lex-smaller wins
    viz = series_viz([0.0, 1.0, 1.0, 0.0])
    oracle = enumerate_exhaustive(UP_DOWN, viz)
    got = solve_dp(UP_DOWN, viz)
    assert oracle.breakpoints() == (0, 1, 3)
    assert got.breakpoints() == (0, 1, 3)


def test_dp_optimal_substructure_cells(rng):
    """Recomputing any suffix cell from its stated dependencies reproduces it."""
    from trendseek.engines.core import PairField, build_chain_plan

    viz = series_viz(list(rng.normal(size=10)))
    plan = build_chain_plan(UP_DOWN_UP)
    field = PairField(viz)
    mats = [s.matrix(field) for s in plan.scorers]
    b = viz.size
    k = plan.k
    suffix = np.full((k, b), -np.inf)
    suffix[k - 1] = mats[k - 1][:, b - 1]
    for t in range(k - 2, -1, -1):
        suffix[t] = np.max(mats[t] + suffix[t + 1][None, :], axis=1)
    for t in range(k - 1):
        for l in range(b):
            recomputed = max(
                (mats[t][l, m] + suffix[t + 1][m] for m in range(l + 1, b)),
                default=-np.inf,
            )
            assert recomputed == suffix[t][l] or (
                np.isneginf(recomputed) and np.isneginf(suffix[t][l])
            )


# --- greedy -------------------------------------------------------------------


def test_greedy_triangle_already_optimal(triangle_viz):
    res = solve_greedy(UP_DOWN, triangle_viz)
    assert res.breakpoints() == (0, 2, 4)
    assert res.total == pytest.approx(0.5, abs=1e-12)


def test_greedy_terminates_on_monotone():
    viz = series_viz(list(np.linspace(0, 5, 32)))
    res = solve_greedy(UP_DOWN, viz)
    assert res.total <= solve_dp(UP_DOWN, viz).total + 1e-9


def test_greedy_never_beats_dp(rng):
    for _ in range(40):
        b = int(rng.integers(8, 40))
        viz = series_viz(list(rng.normal(size=b).cumsum()))
        greedy = solve_greedy(UP_DOWN_UP, viz)
        optimal = solve_dp(UP_DOWN_UP, viz)
        assert greedy.total <= optimal.total + 1e-9


# --- segmentation contract ------------------------------------------------------


def test_segment_ranges_share_endpoints(rng):
    viz = series_viz(list(rng.normal(size=16)))
    res = solve_dp(UP_DOWN_UP, viz)
    ranges = res.expr_ranges
    assert ranges[0][0] == 0
    assert ranges[-1][1] == viz.size - 1
    for (a, b), (c, d) in zip(ranges, ranges[1:]):
        assert b == c  # shared boundary bin
        assert b - a >= 1 and d - c >= 1  # at least two bins each


def test_total_is_mean_of_expr_scores(rng):
    viz = series_viz(list(rng.normal(size=12)))
    res = solve_dp(UP_DOWN_UP, viz)
    assert res.total == pytest.approx(sum(res.expr_scores) / 3, abs=1e-12)
