"""Fuzzy segmentation engines and their shared machinery."""

from trendseek.engines.core import (
    EngineConfig,
    InfeasibleSegmentation,
    SegmentedViz,
    TooLarge,
    build_chain_plan,
    solve,
)
from trendseek.engines.dp import solve_dp
from trendseek.engines.exhaustive import enumerate_exhaustive
from trendseek.engines.greedy import solve_greedy
from trendseek.engines.segtree import solve_segment_tree
from trendseek.engines.dtw import dtw_distance
from trendseek.engines.bounds import ScoreBounds, level_bounds
from trendseek.engines.prune import PruneStats, prune_run
from trendseek.engines.pushdown import ExecutionPlan, pushdown_plan

__all__ = [
    "EngineConfig",
    "ExecutionPlan",
    "InfeasibleSegmentation",
    "PruneStats",
    "ScoreBounds",
    "SegmentedViz",
    "TooLarge",
    "build_chain_plan",
    "dtw_distance",
    "enumerate_exhaustive",
    "level_bounds",
    "prune_run",
    "pushdown_plan",
    "solve",
    "solve_dp",
    "solve_greedy",
    "solve_segment_tree",
]
