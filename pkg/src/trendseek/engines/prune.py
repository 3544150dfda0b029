"""Two-stage collective pruning for top-k search over many trendlines.

Stage 1 runs the optimal solver on a uniform point subset of a random
sample of trendlines to seed a lower bound on the k-th best total.  Stage 2
advances every surviving trendline's segment tree a few levels per round,
recomputes its score bounds, and drops it as soon as its upper bound falls
below the current k-th best lower bound.  A stale bound can only
under-prune, so the output matches the unpruned run exactly.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from trendseek.engines.bounds import chain_bounds, expr_hull_bounds
from trendseek.engines.core import (
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    InfeasibleSegmentation,
    NEG_INF,
    SegmentedViz,
    build_chain_plan,
    right_assoc_mean,
    solve,
)
from trendseek.engines.dp import dp_chain
from trendseek.engines.segtree import SegTreeRun, segtree_chain
from trendseek.ingest import CandidateViz
from trendseek.algebra import ShapeQueryAst


@dataclass
class PruneStats:
    total_vizs: int = 0
    sampled: int = 0
    stage1_bound: float = float("-inf")
    dropped: int = 0
    root_completed: int = 0
    levels_advanced: int = 0
    full_level_budget: int = 0

    @property
    def root_fraction(self) -> float:
        return self.root_completed / self.total_vizs if self.total_vizs else 0.0

    @property
    def work_fraction(self) -> float:
        return self.levels_advanced / self.full_level_budget if self.full_level_budget else 0.0


class _SharedBound:
    """Monotone lower bound on the k-th best total, safe to update from
    worker threads; readers may see a stale (lower) value, which only makes
    pruning more conservative."""

    def __init__(self, k: int, initial: float):
        self._lock = threading.Lock()
        self._k = k
        self._totals: list[float] = []
        self.value = initial

    def push(self, total: float) -> None:
        with self._lock:
            self._totals.append(total)
            if len(self._totals) >= self._k:
                kth = sorted(self._totals, reverse=True)[self._k - 1]
                if kth > self.value:
                    self.value = kth


def uniform_subset(viz: CandidateViz, points: int) -> tuple[CandidateViz, np.ndarray]:
    """A light stand-in viz over ~``points`` uniformly spaced bins, plus the
    dense-index map back into the full series.

    Bin positions keep their original dense coordinates so slopes stay on
    the same scale as the full series.
    """
    b = viz.size
    if b <= points:
        return viz, np.arange(b, dtype=np.int64)
    idx = np.unique(np.round(np.linspace(0, b - 1, points)).astype(np.int64))
    pos = idx.astype(np.float64)
    vals = viz.values[idx]
    stats = np.column_stack((np.ones(len(idx)), pos, vals, pos * vals, pos * pos))
    sub = CandidateViz(
        id=viz.id,
        bin_index=viz.bin_index[idx],
        x_centers=viz.x_centers[idx],
        values=vals,
        stats=stats,
        covered=viz.covered,
        raw_x=viz.raw_x,
        raw_y=viz.raw_y,
        bin_width=viz.bin_width,
        point_count=len(idx),
    )
    return sub, idx


def _stage1_estimate(plan: ChainPlan, viz: CandidateViz, points: int) -> Optional[float]:
    """Solve on a uniform point subset, then score the found break points on
    the full series: a total some segmentation of this viz really achieves."""
    sub, idx = uniform_subset(viz, points)
    try:
        bps, _ = dp_chain(plan.scorers, sub)
    except InfeasibleSegmentation:
        return None
    full_bps = [int(idx[b]) for b in bps]
    from trendseek.engines.core import PairField

    field = PairField(viz)
    scores = [
        float(plan.scorers[j].eval_pairs(field, np.array([full_bps[j]]), np.array([full_bps[j + 1]]))[0])
        for j in range(plan.k)
    ]
    return right_assoc_mean(scores)


def commit_chain_upper(run, plan: ChainPlan) -> float:
    """Sound upper bound on the final total from the current level's state.

    Any completion chains one entry per node left to right; committed
    interior scores are fixed in the entries, while every still-open expr is
    bracketed by the rigorous leaf-slope hull of the node window it can
    occupy.  A small DP over (pending expr, running hull) maximizes the
    committed-plus-bracketed sum; dominated states (lower value, narrower
    hull) are discarded.
    """
    k = plan.k
    m_count = len(run.los)
    hmin, hmax = run.hull_min, run.hull_max
    uppers = {}

    def u(e: int, lo: float, hi: float) -> float:
        key = (e, lo, hi)
        if key not in uppers:
            uppers[key] = expr_hull_bounds(plan.exprs[e], lo, hi).upper
        return uppers[key]

    spans_from = {a: [] for a in range(k)}
    for (a, c), st in run.state.items():
        spans_from[a].append((c, st))

    # states[e] = list of (value, hull_min, hull_max), non-dominated
    states: dict[int, list[tuple[float, float, float]]] = {e: [] for e in range(k)}

    def push(bucket: dict, e: int, value: float, lo: float, hi: float) -> None:
        lst = bucket[e]
        for v2, l2, h2 in lst:
            if v2 >= value and l2 <= lo and h2 >= hi:
                return  # dominated: more value and wider hull
        lst[:] = [
            (v2, l2, h2)
            for v2, l2, h2 in lst
            if not (value >= v2 and lo <= l2 and hi >= h2)
        ] + [(value, lo, hi)]

    for c, st in spans_from[0]:
        if not st.valid[0]:
            continue
        if c == 0:
            push(states, 0, 0.0, float(hmin[0]), float(hmax[0]))
        else:
            head = u(0, float(hmin[0]), float(hmax[0]))
            push(states, c, head + float(st.isum[0]), float(hmin[0]), float(hmax[0]))

    for m in range(1, m_count):
        node_lo, node_hi = float(hmin[m]), float(hmax[m])
        new_states: dict[int, list[tuple[float, float, float]]] = {e: [] for e in range(k)}
        for e, lst in states.items():
            for value, lo, hi in lst:
                ext_lo, ext_hi = min(lo, node_lo), max(hi, node_hi)
                for c, st in spans_from.get(e, ()):  # overlapping continuation
                    if not st.valid[m]:
                        continue
                    if c == e:
                        push(new_states, e, value, ext_lo, ext_hi)
                    else:
                        v2 = value + u(e, ext_lo, ext_hi) + float(st.isum[m])
                        push(new_states, c, v2, node_lo, node_hi)
                if e + 1 < k:
                    for c, st in spans_from.get(e + 1, ()):  # concat at the boundary
                        if not st.valid[m]:
                            continue
                        v2 = value + u(e, lo, hi) + float(st.isum[m])
                        if c > e + 1:
                            v2 += u(e + 1, node_lo, node_hi)
                        push(new_states, c, v2, node_lo, node_hi)
        states = new_states

    best = NEG_INF
    for value, lo, hi in states.get(k - 1, ()):
        best = max(best, value + u(k - 1, lo, hi))
    return best / k if best > NEG_INF else NEG_INF


def prune_run(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    vizs: Sequence[CandidateViz],
    k: int,
    config: EngineConfig = DEFAULT_CONFIG,
) -> tuple[list[tuple[CandidateViz, SegmentedViz]], PruneStats]:
    """Top-k by segment tree with collective pruning.

    Returns at most k (viz, segmentation) pairs ordered by total descending
    then id ascending, identical to running the unpruned segment tree on
    every trendline.
    """
    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    stats = PruneStats(total_vizs=len(vizs))
    if not vizs:
        return [], stats

    if not plan.fully_fuzzy or any(not s.vector for s in plan.scorers):
        # Anchored or exotic queries segment cheaply per gap; run them
        # through the plain segment tree without collective pruning.
        ranked = _solve_all(plan, vizs, k, config)
        stats.root_completed = len(vizs)
        return ranked, stats

    # Stage 1: seed the bound from a sampled, point-thinned optimal solve,
    # re-scored on the full series so each estimate is a total the trendline
    # really achieves.
    rng = np.random.default_rng(config.seed)
    sample_size = min(config.prune_sample, len(vizs))
    sample_idx = sorted(int(i) for i in rng.choice(len(vizs), size=sample_size, replace=False))
    estimates: list[float] = []
    for i in sample_idx:
        estimate = _stage1_estimate(plan, vizs[i], config.prune_points)
        if estimate is not None:
            estimates.append(estimate)
    stats.sampled = len(estimates)
    initial = float("-inf")
    if len(estimates) >= k:
        initial = sorted(estimates, reverse=True)[k - 1]
    stats.stage1_bound = initial
    bound = _SharedBound(k, initial)

    runs: list[Optional[SegTreeRun]] = []
    leaf_uppers: list[float] = []
    for viz in vizs:
        try:
            run = SegTreeRun(plan.scorers, viz)
        except InfeasibleSegmentation:
            runs.append(None)
            leaf_uppers.append(NEG_INF)
            continue
        runs.append(run)
        leaf_uppers.append(chain_bounds(plan, run.level_slopes[0]).upper)
    stats.full_level_budget = sum(r.total_levels for r in runs if r is not None)

    completed: dict[int, tuple[tuple[int, ...], tuple[float, ...]]] = {}
    pending = [i for i, r in enumerate(runs) if r is not None]

    def advance_one(i: int) -> None:
        run = runs[i]
        assert run is not None
        run.advance(config.prune_round_levels)
        if run.done:
            bps, scores = run.result()
            completed[i] = (bps, scores)
            bound.push(right_assoc_mean(list(scores)))

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        while pending:
            if pool is not None:
                list(pool.map(advance_one, pending))
            else:
                for i in pending:
                    advance_one(i)
            survivors: list[int] = []
            for i in pending:
                if i in completed:
                    stats.root_completed += 1
                    continue
                run = runs[i]
                assert run is not None
                upper = min(leaf_uppers[i], commit_chain_upper(run, plan))
                if upper < bound.value:
                    stats.dropped += 1
                else:
                    survivors.append(i)
            pending = survivors
    finally:
        if pool is not None:
            pool.shutdown()

    stats.levels_advanced = sum(r.levels_advanced for r in runs if r is not None)
    results: list[tuple[CandidateViz, SegmentedViz]] = []
    for i, payload in completed.items():
        bps, scores = payload
        segmented = solve(
            plan, vizs[i], lambda _s, _v, _p=payload: _p, config
        )
        results.append((vizs[i], segmented))
    results.sort(key=lambda item: (-item[1].total, item[0].id))
    return results[:k], stats


def _solve_all(
    plan: ChainPlan, vizs: Sequence[CandidateViz], k: int, config: EngineConfig
) -> list[tuple[CandidateViz, SegmentedViz]]:
    results: list[tuple[CandidateViz, SegmentedViz]] = []
    for viz in vizs:
        try:
            results.append((viz, solve(plan, viz, segtree_chain, config)))
        except InfeasibleSegmentation:
            continue
    results.sort(key=lambda item: (-item[1].total, item[0].id))
    return results[:k]
