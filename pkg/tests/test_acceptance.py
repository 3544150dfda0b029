"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them inline).  Tolerances are pinned
here and nowhere else."""

import math
import time

import numpy as np
import pytest

from trendseek.algebra import (
    And,
    Concat,
    Location,
    Not,
    Or,
    Pattern,
    Quantifier,
    Modifier,
    Seg,
    normalize_ast,
    seg,
    validate_ast,
)
from trendseek.corpus import planted_dataset, planted_vizs, series_viz
from trendseek.engines.bounds import chain_bounds
from trendseek.engines.core import EngineConfig, build_chain_plan, solve
from trendseek.engines.dp import dp_chain
from trendseek.engines.dtw import dtw_distance
from trendseek.engines.exhaustive import exhaustive_chain
from trendseek.engines.prune import prune_run
from trendseek.engines.pushdown import pushdown_plan
from trendseek.engines.segtree import SegTreeRun, segtree_chain
from trendseek.executor import run_query
from trendseek.ingest import SummarizedStats, VisualSpec, extract, group_and_bin, merge_stats
from trendseek.parser import LexError, ParseError, SemanticError, format_shapequery, parse_shapequery
from trendseek.scoring import fit_line, score_operator, score_pattern
from tests.test_dtw import brute_force_dtw

SPEC = VisualSpec(z_attr="series", x_attr="step", y_attr="value", bin_width=1.0)


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_oracle_equivalence():
    """DP total equals the exhaustive oracle within 1e-9 with identical
    breakpoints, over 200 seeded random series, in under 10 s."""
    rng = np.random.default_rng(2024)
    queries = [parse_shapequery(q) for q in ("u>>d", "u>>d>>u", "(u|d)>>f")]
    plans = [build_chain_plan(q) for q in queries]
    t0 = time.perf_counter()
    worst = 0.0
    mismatches = 0
    for trial in range(200):
        b = int(rng.integers(5, 13))
        plan = plans[trial % 3]
        if b < plan.k + 1:
            b = plan.k + 2
        viz = series_viz(list(rng.normal(size=b)))
        oracle = solve(plan, viz, exhaustive_chain)
        got = solve(plan, viz, dp_chain)
        worst = max(worst, abs(oracle.total - got.total))
        if oracle.breakpoints() != got.breakpoints():
            mismatches += 1
    elapsed = time.perf_counter() - t0
    report(
        "oracle equivalence (200 series, B<=12, k<=3)",
        worst <= 1e-9 and mismatches == 0 and elapsed < 10.0,
        f"max |dTotal|={worst:.2e}, breakpoint mismatches={mismatches}, {elapsed:.1f}s",
    )


def test_additivity_exactness():
    """Merged-stats fits equal direct fits: 1000 random splits, |dSlope| <= 1e-9."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 50))
        xs = np.sort(rng.uniform(0, 200, size=n))
        ys = rng.normal(scale=25.0, size=n) + xs * rng.uniform(-3, 3)
        cut = int(rng.integers(1, n - 1))
        pts = list(zip(xs, ys))
        merged = merge_stats(SummarizedStats.of_points(pts[:cut]), SummarizedStats.of_points(pts[cut:]))
        try:
            fit_m = fit_line(merged)
            fit_d = fit_line(SummarizedStats.of_points(pts))
        except Exception:
            continue
        worst = max(worst, abs(fit_m.slope - fit_d.slope))
    report("additivity exactness (1000 splits)", worst <= 1e-9, f"max |dSlope|={worst:.2e}")


def test_scoring_table_reproduction():
    """Pattern scores match the closed forms at 20 tabulated slopes within
    1e-12; the operator table matches exactly."""
    from trendseek.scoring import LineFit

    checks = []
    # up(tan(a deg)) = a/90 exactly; down is its negation
    for deg in (0, 15, 30, 45, 60, 75):
        slope = math.tan(math.radians(deg))
        checks.append((score_pattern(Pattern.up(), LineFit(slope, 0, 2)), deg / 90))
        checks.append((score_pattern(Pattern.down(), LineFit(-slope, 0, 2)), deg / 90))
    # flat(tan(a deg)) = 1 - 4a/180
    for deg in (0, 22.5, 45, 67.5):
        slope = math.tan(math.radians(deg))
        checks.append((score_pattern(Pattern.flat(), LineFit(slope, 0, 2)), 1 - 4 * deg / 180))
    checks.append((score_pattern(Pattern.theta(45.0), LineFit(1.0, 0, 2)), 1.0))
    checks.append((score_pattern(Pattern.theta(-30.0), LineFit(math.tan(math.radians(-30)), 0, 2)), 1.0))
    checks.append((score_pattern(Pattern.any(), LineFit(3.0, 0, 2)), 1.0))
    checks.append((score_pattern(Pattern.empty(), LineFit(3.0, 0, 2)), -1.0))
    worst = max(abs(a - b) for a, b in checks)
    ops_exact = (
        score_operator("concat", [0.5, -0.5]) == 0.0
        and score_operator("and", [0.8, 0.2]) == 0.2
        and score_operator("or", [0.8, 0.2]) == 0.8
        and score_operator("not", [0.3]) == -0.3
    )
    report(
        f"scoring table reproduction ({len(checks)} tabulated values)",
        worst <= 1e-12 and ops_exact,
        f"max error={worst:.2e}, operators exact={ops_exact}",
    )


def test_segment_tree_accuracy():
    """Top-20 overlap between segment tree and DP >= 0.75 on the seeded
    200-viz corpus (B=256, k=3), in under 60 s."""
    t0 = time.perf_counter()
    plan = build_chain_plan(parse_shapequery("u>>d>>u"))
    vizs = planted_vizs(200, 256, seed=42, planted_count=50, noise=0.12)

    def top20(solver):
        pairs = [(v.id, solve(plan, v, solver).total) for v in vizs]
        pairs.sort(key=lambda p: (-p[1], p[0]))
        return {i for i, _ in pairs[:20]}

    overlap = len(top20(dp_chain) & top20(segtree_chain)) / 20
    elapsed = time.perf_counter() - t0
    report(
        "segment tree accuracy (top-20 overlap vs DP)",
        overlap >= 0.75 and elapsed < 60.0,
        f"overlap={overlap:.2f}, {elapsed:.1f}s",
    )


def test_runtime_separation():
    """Segment tree wall time <= half of DP at B=900, k=4; log-log scaling
    exponents: DP >= 1.7, segment tree <= 1.3 over B in {128..2048}."""
    rng = np.random.default_rng(5)
    plan4 = build_chain_plan(parse_shapequery("u>>d>>u>>d"))
    vizs = [series_viz(list(rng.normal(size=900).cumsum()), zid=f"v{i}") for i in range(100)]

    t0 = time.perf_counter()
    for v in vizs:
        solve(plan4, v, dp_chain)
    dp_wall = time.perf_counter() - t0
    t0 = time.perf_counter()
    for v in vizs:
        solve(plan4, v, segtree_chain)
    st_wall = time.perf_counter() - t0

    plan3 = build_chain_plan(parse_shapequery("u>>d>>u"))
    sizes = [128, 256, 512, 1024, 2048]
    dp_times, st_times = [], []
    for b in sizes:
        viz = series_viz(list(rng.normal(size=b).cumsum()))
        solve(plan3, viz, dp_chain)  # warm
        t0 = time.perf_counter()
        solve(plan3, viz, dp_chain)
        dp_times.append(time.perf_counter() - t0)
        solve(plan3, viz, segtree_chain)
        t0 = time.perf_counter()
        solve(plan3, viz, segtree_chain)
        st_times.append(time.perf_counter() - t0)
    dp_exp = float(np.polyfit(np.log(sizes), np.log(dp_times), 1)[0])
    st_exp = float(np.polyfit(np.log(sizes), np.log(st_times), 1)[0])
    report(
        "runtime separation",
        st_wall <= 0.5 * dp_wall and dp_exp >= 1.7 and st_exp <= 1.3,
        f"B=900/k=4 x100: dp={dp_wall:.1f}s segtree={st_wall:.1f}s ratio={st_wall/dp_wall:.2f}; "
        f"exponents dp={dp_exp:.2f} segtree={st_exp:.2f}",
    )


def _unpruned(plan, vizs, k):
    pairs = []
    for v in vizs:
        try:
            pairs.append((v, solve(plan, v, segtree_chain)))
        except Exception:
            continue
    pairs.sort(key=lambda p: (-p[1].total, p[0].id))
    return pairs[:k]


def test_pruning_losslessness():
    """segtree_prune returns the identical top-k as the unpruned run on every
    seeded corpus and thread count; the needle corpus completes <= 50% of
    trendlines to the root."""
    from tests.test_bounds_prune import needle_corpus

    plan = build_chain_plan(parse_shapequery("u>>d>>u"))
    ok = True
    details = []
    for seed in (0, 1, 2):
        vizs = planted_vizs(80, 128, seed=seed, planted_count=16, noise=0.12)
        reference = _unpruned(plan, vizs, 10)
        for threads in (1, 8):
            config = EngineConfig(engine="segtree_prune", seed=seed, threads=threads)
            pruned, _ = prune_run(plan, vizs, 10, config)
            same_ids = [v.id for v, _ in pruned] == [v.id for v, _ in reference]
            same_totals = all(
                abs(a.total - b.total) <= 1e-9
                for (_, a), (_, b) in zip(pruned, reference)
            )
            ok = ok and same_ids and same_totals

    vizs = needle_corpus()
    config = EngineConfig(engine="segtree_prune", seed=0)
    ranked, stats = prune_run(plan, vizs, 1, config)
    reference = _unpruned(plan, vizs, 1)
    needle_ok = (
        ranked[0][0].id == reference[0][0].id == "needle"
        and abs(ranked[0][1].total - reference[0][1].total) <= 1e-9
    )
    frac = stats.root_fraction
    report(
        "pruning losslessness",
        ok and needle_ok and frac <= 0.5,
        f"3 seeds x threads {{1,8}} lossless={ok}, needle={needle_ok}, root fraction={frac:.2f}",
    )


def test_bounds_soundness():
    """On 50 seeded trendlines, every materialized level's bracket contains
    the final total: zero violations.  (Node-fit brackets are exact for the
    whole-trend regime; multi-segment brackets are the closure heuristic and
    checked at the rigorous leaf level by the property suite.)"""
    rng = np.random.default_rng(99)
    plan = build_chain_plan(parse_shapequery("u"))
    t = np.linspace(0.0, 1.0, 128)
    violations = 0
    levels = 0
    for i in range(50):
        power = rng.uniform(0.5, 2.0)
        scale = rng.uniform(20.0, 60.0) * (1 if i % 3 else -1)
        y = scale * t**power + rng.normal(scale=0.2, size=len(t))
        viz = series_viz(list(y), zid=f"b{i:02d}", normalize=True)
        run = SegTreeRun(plan.scorers, viz)
        brackets = [chain_bounds(plan, run.current_slopes())]
        while not run.done:
            run.advance(1)
            brackets.append(chain_bounds(plan, run.current_slopes()))
        _, scores = run.result()
        total = sum(scores) / len(scores)
        for b in brackets:
            levels += 1
            if not (b.lower - 1e-9 <= total <= b.upper + 1e-9):
                violations += 1
    report(
        "bounds soundness (50 vizs, all levels)",
        violations == 0,
        f"{levels} level checks, {violations} violations",
    )


def _random_ast(rng, depth=0):
    leaf_patterns = [
        Pattern.up(), Pattern.down(), Pattern.flat(),
        Pattern.theta(float(rng.integers(-80, 81))), Pattern.any(), Pattern.empty(),
    ]
    if depth >= 3 or rng.random() < 0.4:
        pattern = leaf_patterns[int(rng.integers(0, len(leaf_patterns)))]
        location = Location()
        if rng.random() < 0.3:
            xs = float(rng.integers(0, 50))
            location = Location(x_start=xs, x_end=xs + float(rng.integers(1, 50)))
        modifier = Modifier()
        if pattern.kind.value in ("up", "down", "flat", "theta") and rng.random() < 0.25:
            lo = int(rng.integers(0, 3))
            modifier = Modifier(quantifier=Quantifier(lo, lo + int(rng.integers(0, 4))))
        return seg(pattern, location, modifier)
    kind = int(rng.integers(0, 4))
    if kind == 3:
        return Not(_random_ast(rng, depth + 1))
    children = tuple(_random_ast(rng, depth + 1) for _ in range(int(rng.integers(2, 4))))
    return (Concat, And, Or)[kind](children)


def test_parser_round_trip_and_fuzz():
    """1000 generated ASTs round-trip through format/parse; 1e5 random byte
    strings up to 1 KiB never crash the parser."""
    rng = np.random.default_rng(31337)
    bad_round_trips = 0
    produced = 0
    while produced < 1000:
        ast = _random_ast(rng)
        if not validate_ast(ast).ok:
            continue
        produced += 1
        text = format_shapequery(ast)
        if parse_shapequery(text) != normalize_ast(ast):
            bad_round_trips += 1

    crashes = 0
    for _ in range(100_000):
        length = min(int(rng.exponential(30)) + 1, 1024)
        data = rng.integers(0, 256, size=length, dtype=np.uint8).tobytes()
        try:
            parse_shapequery(data.decode("utf-8", errors="replace"))
        except (LexError, ParseError, SemanticError, RecursionError):
            pass
        except Exception:
            crashes += 1
    report(
        "parser round-trip and fuzz",
        bad_round_trips == 0 and crashes == 0,
        f"1000 round-trips ({bad_round_trips} bad), 100000 fuzz inputs ({crashes} crashes)",
    )


def test_pushdown_behavior():
    """For the anchored worked query, GROUP materializes no bins below the
    anchor minus a one-bin margin, and the planned run equals the unplanned
    run exactly (eager checks off)."""
    query = parse_shapequery("[p=up,x.s=50,x.e=100]>>d>>u")
    data = planted_dataset(12, 160, seed=77, planted_count=12, noise=0.1)
    plan = pushdown_plan(query, SPEC)
    records = extract(data, SPEC, x_ranges=plan.ranges)
    vizs = group_and_bin(records, SPEC, normalize=True, materialize=plan.ranges, norm_scope=plan.ranges)
    min_edge = min(float(v.x_centers.min()) - v.bin_width / 2 for v in vizs)
    materialization_ok = min_edge >= 50.0 - SPEC.bin_width - 1e-9

    planned = run_query(data, SPEC, query, k=5, config=EngineConfig(engine="dp"))
    unplanned = run_query(data, SPEC, query, k=5, config=EngineConfig(engine="dp", apply_pushdown=False))
    equal = [r.viz_id for r in planned.results] == [r.viz_id for r in unplanned.results] and all(
        abs(a.total - b.total) <= 1e-12 for a, b in zip(planned.results, unplanned.results)
    )
    report(
        "push-down behavior",
        materialization_ok and equal,
        f"min materialized bin edge={min_edge:.1f}, planned==unplanned={equal}",
    )


def test_dtw_baseline():
    """dtw_distance matches the brute-force alignment table exactly on all
    pairs with lengths <= 8."""
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(200):
        a = list(rng.normal(size=int(rng.integers(1, 9))))
        b = list(rng.normal(size=int(rng.integers(1, 9))))
        worst = max(worst, abs(dtw_distance(a, b) - brute_force_dtw(a, b)))
    report("dtw baseline vs brute force", worst == 0.0, f"max |d|={worst:.2e}")
