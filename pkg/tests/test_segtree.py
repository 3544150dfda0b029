"""The fast array segment tree is checked against an independent dict-based
reference twin, against the optimal DP, and on closure-exact fixtures."""

from dataclasses import dataclass

import numpy as np
import pytest

from trendseek.corpus import series_viz
from trendseek.engines import solve_dp, solve_segment_tree
from trendseek.engines.core import PairField, build_chain_plan
from trendseek.engines.segtree import SegTreeRun, segtree_chain
from trendseek.parser import parse_shapequery

UP_DOWN = parse_shapequery("u>>d")
UP_DOWN_UP = parse_shapequery("u>>d>>u")
NESTED_OR = parse_shapequery("u >> (f | (u >> d))")


@dataclass(frozen=True)
class Entry:
    isum: float
    lpe: int
    rps: int
    bps: tuple


def slow_segtree(scorers, viz):
    """Readable reference: per-node dict of span -> best entry."""
    k = len(scorers)
    field = PairField(viz)

    def escore(j, lo, hi):
        return float(scorers[j].eval_pairs(field, np.array([lo]), np.array([hi]))[0])

    def entry_score(a, c, node_lo, node_hi, e):
        pend = escore(a, node_lo, e.lpe)
        if a < c:
            pend += escore(c, e.rps, node_hi)
        return (e.isum + pend) / (c - a + 1)

    b = viz.size
    nodes = [
        (t, t + 1, {(e, e): Entry(0.0, t + 1, t, ()) for e in range(k)})
        for t in range(b - 1)
    ]
    while len(nodes) > 1:
        nxt = []
        i = 0
        while i + 1 < len(nodes):
            lo1, mid, left = nodes[i]
            _, hi2, right = nodes[i + 1]
            merged = {}

            def consider(span, entry):
                score = entry_score(span[0], span[1], lo1, hi2, entry)
                old = merged.get(span)
                if (
                    old is None
                    or score > old[0]
                    or (
                        score == old[0]
                        and (entry.bps, entry.lpe, entry.rps)
                        < (old[1].bps, old[1].lpe, old[1].rps)
                    )
                ):
                    merged[span] = (score, entry)

            for (a, e), le in left.items():
                for (e2, c), re in right.items():
                    if e2 == e:  # overlapping merge: expr e spans the shared bin
                        isum = le.isum + re.isum
                        if a < e < c:
                            isum += escore(e, le.rps, re.lpe)
                        lpe = re.lpe if a == e else le.lpe
                        rps = le.rps if e == c else re.rps
                        consider((a, c), Entry(isum, lpe, rps, le.bps + re.bps))
                    elif e2 == e + 1:  # concatenating merge at the shared bin
                        isum = le.isum + re.isum
                        if e > a:
                            isum += escore(e, le.rps, mid)
                        if e + 1 < c:
                            isum += escore(e + 1, mid, re.lpe)
                        lpe = mid if a == e else le.lpe
                        rps = mid if e + 1 == c else re.rps
                        consider((a, c), Entry(isum, lpe, rps, le.bps + (mid,) + re.bps))
            nxt.append((lo1, hi2, {s: e for s, (_, e) in merged.items()}))
            i += 2
        if i < len(nodes):
            nxt.append(nodes[i])
        nodes = nxt
    _, _, root = nodes[0]
    entry = root[(0, k - 1)]
    bps = (0,) + entry.bps + (b - 1,)
    scores = tuple(escore(j, bps[j], bps[j + 1]) for j in range(k))
    return bps, scores


def test_fast_matches_reference_on_random_inputs(rng):
    queries = [UP_DOWN, UP_DOWN_UP, parse_shapequery("(u|d)>>f"), parse_shapequery("u")]
    for trial in range(120):
        b = int(rng.integers(4, 24))
        query = queries[trial % len(queries)]
        plan = build_chain_plan(query)
        if b < plan.k + 1:
            continue
        viz = series_viz(list(rng.normal(size=b)))
        fast = segtree_chain(plan.scorers, viz)
        slow = slow_segtree(plan.scorers, viz)
        assert fast[0] == slow[0], f"trial {trial}: {fast[0]} != {slow[0]}"
        for x, y in zip(fast[1], slow[1]):
            assert x == pytest.approx(y, abs=1e-12)


def test_never_beats_dp(rng):
    for trial in range(60):
        b = int(rng.integers(6, 40))
        viz = series_viz(list(rng.normal(size=b).cumsum()))
        st = solve_segment_tree(UP_DOWN_UP, viz)
        dp = solve_dp(UP_DOWN_UP, viz)
        assert st.total <= dp.total + 1e-9


def test_triangle_exact(triangle_viz):
    res = solve_segment_tree(UP_DOWN, triangle_viz)
    assert res.breakpoints() == (0, 2, 4)
    assert res.total == pytest.approx(0.5, abs=1e-12)


def test_closure_exact_on_clean_peaks(rng):
    """Strict local extrema at leaf granularity: segtree equals DP."""
    for _ in range(20):
        b = int(rng.integers(12, 48))
        peak = int(rng.integers(3, b - 3))
        up = np.linspace(0.0, float(peak), peak + 1)
        down = np.linspace(float(peak), 0.0, b - peak)[1:]
        viz = series_viz(list(np.concatenate([up, down])))
        st = solve_segment_tree(UP_DOWN, viz)
        dp = solve_dp(UP_DOWN, viz)
        assert st.total == pytest.approx(dp.total, abs=1e-9)


def test_single_expr_equals_dp(rng):
    viz = series_viz(list(rng.normal(size=17)))
    q = parse_shapequery("f")
    assert solve_segment_tree(q, viz).total == pytest.approx(solve_dp(q, viz).total, abs=1e-12)
    assert solve_segment_tree(q, viz).breakpoints() == (0, 16)


def test_nested_or_query_runs(rng):
    # a >> (bOR(c>>d)) has two top-level exprs; the second re-segments its slice
    viz = series_viz(list(rng.normal(size=20).cumsum()))
    res = solve_segment_tree(NESTED_OR, viz)
    assert len(res.expr_ranges) == 2
    assert -1.0 <= res.total <= 1.0
    dp = solve_dp(NESTED_OR, viz)
    assert res.total <= dp.total + 1e-9


def test_odd_leaf_count_promotion(rng):
    # 8 bins -> 7 leaves: odd at the first level
    viz = series_viz(list(rng.normal(size=8)))
    fast = segtree_chain(build_chain_plan(UP_DOWN).scorers, viz)
    slow = slow_segtree(build_chain_plan(UP_DOWN).scorers, viz)
    assert fast[0] == slow[0]


def test_run_advances_incrementally(rng):
    viz = series_viz(list(rng.normal(size=33)))
    plan = build_chain_plan(UP_DOWN_UP)
    run = SegTreeRun(plan.scorers, viz)
    levels = 0
    while not run.done:
        run.advance(1)
        levels += 1
        assert len(run.current_slopes()) == len(run.los)
    assert levels == run.levels_advanced
    bps, _ = run.result()
    assert bps[0] == 0 and bps[-1] == viz.size - 1
