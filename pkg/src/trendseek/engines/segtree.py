"""Pattern-aware segmentation over a balanced binary tree of segments.

Leaves are adjacent-bin pairs; each node keeps, per contiguous ShapeExpr
span (a..c), its best-known entry: finalized scores for fully contained
exprs plus the stats extents of the two partially covered boundary exprs.
Parents merge children two ways: an overlapping merge (the same expr is
pending on both sides of the shared bin and its extents fuse) and a
concatenating merge (the shared bin becomes the break point between expr e
and e+1).  Duplicate spans keep the higher-scoring entry (the closure
heuristic), so work per node is bounded by the number of span pairs, and
the whole solve is linear in the number of bins.

State is kept as arrays across all nodes of a level, so one merge round is
a handful of vector operations per span combination instead of per-node
dict juggling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from trendseek.algebra import ShapeQueryAst
from trendseek.engines.core import (
    ChainPlan,
    DEFAULT_CONFIG,
    EngineConfig,
    ExprScorer,
    InfeasibleSegmentation,
    NEG_INF,
    PairField,
    SegmentedViz,
    build_chain_plan,
    solve,
)
from trendseek.ingest import CandidateViz


@dataclass
class _SpanState:
    """Per-node arrays for one expr span (a..c) at the current level."""

    valid: np.ndarray   # (M,) bool
    isum: np.ndarray    # (M,) float: sum of finalized interior expr scores
    lpe: np.ndarray     # (M,) int: left pending covers [node_lo .. lpe]
    rps: np.ndarray     # (M,) int: right pending covers [rps .. node_hi]
    score: np.ndarray   # (M,) float: dedup score with pendings closed at node edges
    bps: np.ndarray     # (M, k-1) int: interior break points, first c-a columns used


class SegTreeRun:
    """Incremental bottom-up solve of one trendline; advances level by level
    so the pruning engine can refine score bounds between rounds."""

    def __init__(self, scorers: Sequence[ExprScorer], viz: CandidateViz):
        self.scorers = list(scorers)
        self.viz = viz
        self.k = len(scorers)
        b = viz.size
        if b < self.k + 1:
            raise InfeasibleSegmentation(
                f"{self.k} exprs need at least {self.k + 1} bins, viz has {b}"
            )
        self.field = PairField(viz)
        self.merge_ops = 0
        self.levels_advanced = 0

        self.los = np.arange(b - 1, dtype=np.int64)
        self.his = self.los + 1
        k = self.k
        width = max(k - 1, 1)
        m = b - 1
        self.state: dict[tuple[int, int], _SpanState] = {}
        for e in range(k):
            self.state[(e, e)] = _SpanState(
                valid=np.ones(m, dtype=bool),
                isum=np.zeros(m),
                lpe=self.his.copy(),
                rps=self.los.copy(),
                score=np.asarray(self.scorers[e].eval_pairs(self.field, self.los, self.his), dtype=np.float64),
                bps=np.zeros((m, width), dtype=np.int64),
            )
        leaf_slopes = self.field.pair_slopes(self.los, self.his)
        self.level_slopes: list[np.ndarray] = [leaf_slopes]
        # Per-node hull of the leaf (adjacent-bin) slopes under each node;
        # any segment inside a node run has its fitted slope inside the
        # union of those hulls, which is what the sound prune bound uses.
        self.hull_min = leaf_slopes.copy()
        self.hull_max = leaf_slopes.copy()

    @property
    def done(self) -> bool:
        return len(self.los) == 1

    @property
    def total_levels(self) -> int:
        return max(1, math.ceil(math.log2(max(self.viz.size - 1, 2))))

    def current_slopes(self) -> np.ndarray:
        return self.level_slopes[-1]

    def _expr_pairs(self, j: int, lo: np.ndarray, hi: np.ndarray, valid: np.ndarray) -> np.ndarray:
        ok = valid & (lo < hi)
        lo_safe = np.where(ok, lo, 0)
        hi_safe = np.where(ok, hi, 1)
        scores = self.scorers[j].eval_pairs(self.field, lo_safe, hi_safe)
        return np.where(ok, scores, 0.0)

    class _Batch:
        """Collects per-expr segment evaluations across every merge combo of
        one level and runs them as one vector call per expr."""

        def __init__(self, run: "SegTreeRun"):
            self.run = run
            self.requests: dict[int, list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = {}
            self.results: dict[tuple[int, int], np.ndarray] = {}

        def add(self, j: int, lo: np.ndarray, hi: np.ndarray, valid: np.ndarray) -> tuple[int, int]:
            lst = self.requests.setdefault(j, [])
            lst.append((lo, hi, valid))
            return (j, len(lst) - 1)

        def execute(self) -> None:
            for j, reqs in self.requests.items():
                n2 = len(reqs[0][0])
                oks = [v & (lo < hi) for lo, hi, v in reqs]
                lo_all = np.concatenate([np.where(ok, lo, 0) for (lo, _, _), ok in zip(reqs, oks)])
                hi_all = np.concatenate([np.where(ok, hi, 1) for (_, hi, _), ok in zip(reqs, oks)])
                scores = self.run.scorers[j].eval_pairs(self.run.field, lo_all, hi_all)
                scores = np.where(np.concatenate(oks), scores, 0.0)
                for t in range(len(reqs)):
                    self.results[(j, t)] = scores[t * n2 : (t + 1) * n2]

        def get(self, handle: tuple[int, int]) -> np.ndarray:
            return self.results[handle]

    def advance(self, levels: int = 1) -> None:
        for _ in range(levels):
            if self.done:
                return
            self._merge_level()

    def run_to_root(self) -> None:
        while not self.done:
            self._merge_level()

    def _merge_level(self) -> None:
        m = len(self.los)
        evens = np.arange(0, m - 1, 2)
        odds = evens + 1
        n2 = len(evens)
        leftover = m - 1 if m % 2 == 1 else None
        p_los = self.los[evens]
        p_his = self.his[odds]
        mids = self.his[evens]
        k = self.k
        width = max(k - 1, 1)

        def stitched(left_bps: np.ndarray, left_n: int, middle: Optional[np.ndarray],
                     right_bps: np.ndarray, right_n: int) -> np.ndarray:
            parts = [left_bps[:, :left_n]]
            if middle is not None:
                parts.append(middle[:, None])
            parts.append(right_bps[:, :right_n])
            used = left_n + (1 if middle is not None else 0) + right_n
            pad = np.zeros((n2, width - used), dtype=np.int64)
            parts.append(pad)
            return np.hstack(parts)

        # Phase 1: lay out every merge candidate, queueing segment evals.
        batch = SegTreeRun._Batch(self)
        planned: dict[tuple[int, int], list[dict]] = {}
        for a in range(k):
            for c in range(a, k):
                cands: list[dict] = []
                for e in range(a, c + 1):  # overlapping merges
                    left = self.state.get((a, e))
                    right = self.state.get((e, c))
                    if left is None or right is None:
                        continue
                    valid = left.valid[evens] & right.valid[odds]
                    if not valid.any():
                        continue
                    l_rps = left.rps[evens]
                    r_lpe = right.lpe[odds]
                    closures = []
                    if a < e < c:
                        closures.append(batch.add(e, l_rps, r_lpe, valid))
                    lpe = r_lpe if a == e else left.lpe[evens]
                    rps = l_rps if e == c else right.rps[odds]
                    cands.append(
                        self._plan_candidate(
                            batch, a, c, valid,
                            left.isum[evens] + right.isum[odds], closures,
                            lpe, rps,
                            stitched(left.bps[evens], e - a, None, right.bps[odds], c - e),
                            p_los, p_his,
                        )
                    )
                for e in range(a, c):  # concatenating merges at the shared bin
                    left = self.state.get((a, e))
                    right = self.state.get((e + 1, c))
                    if left is None or right is None:
                        continue
                    valid = left.valid[evens] & right.valid[odds]
                    if not valid.any():
                        continue
                    closures = []
                    if e > a:
                        closures.append(batch.add(e, left.rps[evens], mids, valid))
                    if e + 1 < c:
                        closures.append(batch.add(e + 1, mids, right.lpe[odds], valid))
                    lpe = mids if a == e else left.lpe[evens]
                    rps = mids if e + 1 == c else right.rps[odds]
                    cands.append(
                        self._plan_candidate(
                            batch, a, c, valid,
                            left.isum[evens] + right.isum[odds], closures,
                            lpe, rps,
                            stitched(left.bps[evens], e - a, mids, right.bps[odds], c - e - 1),
                            p_los, p_his,
                        )
                    )
                if cands:
                    planned[(a, c)] = cands

        batch.execute()

        # Phase 2: resolve scores, dedup per span, carry the odd node over.
        new_state: dict[tuple[int, int], _SpanState] = {}
        for a in range(k):
            for c in range(a, k):
                cands = planned.get((a, c), [])
                old = self.state.get((a, c)) if leftover is not None else None
                if not cands and old is None:
                    continue
                if cands:
                    resolved = [self._resolve_candidate(batch, spec, a, c) for spec in cands]
                    merged = self._dedup(resolved, n2, width)
                else:
                    merged = _SpanState(
                        valid=np.zeros(n2, dtype=bool),
                        isum=np.zeros(n2),
                        lpe=np.zeros(n2, dtype=np.int64),
                        rps=np.zeros(n2, dtype=np.int64),
                        score=np.full(n2, NEG_INF),
                        bps=np.zeros((n2, width), dtype=np.int64),
                    )
                if leftover is not None:
                    merged = self._append_leftover(merged, old, leftover, width)
                if merged.valid.any():
                    new_state[(a, c)] = merged
                self.merge_ops += len(cands)

        self.state = new_state
        new_hmin = np.minimum(self.hull_min[evens], self.hull_min[odds])
        new_hmax = np.maximum(self.hull_max[evens], self.hull_max[odds])
        if leftover is not None:
            self.los = np.append(p_los, self.los[leftover])
            self.his = np.append(p_his, self.his[leftover])
            self.hull_min = np.append(new_hmin, self.hull_min[leftover])
            self.hull_max = np.append(new_hmax, self.hull_max[leftover])
        else:
            self.los = p_los
            self.his = p_his
            self.hull_min = new_hmin
            self.hull_max = new_hmax
        self.level_slopes.append(self.field.pair_slopes(self.los, self.his))
        self.levels_advanced += 1

    def _plan_candidate(
        self,
        batch: "SegTreeRun._Batch",
        a: int,
        c: int,
        valid: np.ndarray,
        isum_base: np.ndarray,
        closures: list,
        lpe: np.ndarray,
        rps: np.ndarray,
        bps: np.ndarray,
        p_los: np.ndarray,
        p_his: np.ndarray,
    ) -> dict:
        pends = [batch.add(a, p_los, lpe, valid)]
        if a < c:
            pends.append(batch.add(c, rps, p_his, valid))
        return {
            "valid": valid,
            "isum_base": isum_base,
            "closures": closures,
            "pends": pends,
            "lpe": lpe,
            "rps": rps,
            "bps": bps,
        }

    def _resolve_candidate(self, batch: "SegTreeRun._Batch", spec: dict, a: int, c: int) -> _SpanState:
        isum = spec["isum_base"]
        for handle in spec["closures"]:
            isum = isum + batch.get(handle)
        pend = batch.get(spec["pends"][0])
        for handle in spec["pends"][1:]:
            pend = pend + batch.get(handle)
        valid = spec["valid"]
        score = np.where(valid, (isum + pend) / (c - a + 1), NEG_INF)
        return _SpanState(
            valid=valid, isum=isum, lpe=spec["lpe"], rps=spec["rps"], score=score, bps=spec["bps"]
        )

    def _dedup(self, cands: list[_SpanState], n2: int, width: int) -> _SpanState:
        if len(cands) == 1:
            return cands[0]
        scores = np.stack([cand.score for cand in cands])
        win = np.argmax(scores, axis=0)
        best = scores[win, np.arange(n2)]
        # Exact ties resolve to the lexicographically smallest break points.
        tie_nodes = np.flatnonzero((scores == best).sum(axis=0) > 1)
        for node in tie_nodes:
            if best[node] == NEG_INF:
                continue
            tied = [i for i in range(len(cands)) if scores[i, node] == best[node]]
            keys = [
                (tuple(cands[i].bps[node]), int(cands[i].lpe[node]), int(cands[i].rps[node]), i)
                for i in tied
            ]
            win[node] = min(keys)[3]
        idx = np.arange(n2)
        return _SpanState(
            valid=np.stack([c.valid for c in cands])[win, idx],
            isum=np.stack([c.isum for c in cands])[win, idx],
            lpe=np.stack([c.lpe for c in cands])[win, idx],
            rps=np.stack([c.rps for c in cands])[win, idx],
            score=best,
            bps=np.stack([c.bps for c in cands])[win, idx],
        )

    def _append_leftover(
        self, merged: _SpanState, old: Optional[_SpanState], leftover: int, width: int
    ) -> _SpanState:
        """The odd node out carries its entries to the next level unchanged."""
        if old is None:
            tail = _SpanState(
                valid=np.zeros(1, dtype=bool),
                isum=np.zeros(1),
                lpe=np.zeros(1, dtype=np.int64),
                rps=np.zeros(1, dtype=np.int64),
                score=np.full(1, NEG_INF),
                bps=np.zeros((1, width), dtype=np.int64),
            )
        else:
            sel = slice(leftover, leftover + 1)
            tail = _SpanState(
                valid=old.valid[sel].copy(),
                isum=old.isum[sel].copy(),
                lpe=old.lpe[sel].copy(),
                rps=old.rps[sel].copy(),
                score=old.score[sel].copy(),
                bps=old.bps[sel].copy(),
            )
        return _SpanState(
            valid=np.concatenate([merged.valid, tail.valid]),
            isum=np.concatenate([merged.isum, tail.isum]),
            lpe=np.concatenate([merged.lpe, tail.lpe]),
            rps=np.concatenate([merged.rps, tail.rps]),
            score=np.concatenate([merged.score, tail.score]),
            bps=np.vstack([merged.bps, tail.bps]),
        )

    def result(self) -> tuple[tuple[int, ...], tuple[float, ...]]:
        if not self.done:
            self.run_to_root()
        b = self.viz.size
        k = self.k
        root = self.state.get((0, k - 1))
        if root is None or not bool(root.valid[0]):
            raise InfeasibleSegmentation("segment tree produced no full-span entry")
        interior = tuple(int(v) for v in root.bps[0, : k - 1])
        bps = (0,) + interior + (b - 1,)
        scores = tuple(
            float(self._expr_pairs(j, np.array([bps[j]]), np.array([bps[j + 1]]), np.array([True]))[0])
            for j in range(k)
        )
        return bps, scores


def segtree_chain(
    scorers: Sequence[ExprScorer], viz: CandidateViz
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    return SegTreeRun(scorers, viz).result()


def solve_segment_tree(
    ast_or_plan: ShapeQueryAst | ChainPlan,
    viz: CandidateViz,
    config: EngineConfig = DEFAULT_CONFIG,
) -> SegmentedViz:
    plan = (
        ast_or_plan
        if isinstance(ast_or_plan, ChainPlan)
        else build_chain_plan(ast_or_plan, config)
    )
    return solve(plan, viz, segtree_chain, config)
