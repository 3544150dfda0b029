"""trendseek: search collections of trendlines by shape.

Queries are written in a small regex-like shape algebra (for example
``"u >> d >> u"`` for rise, fall, rise).  The engine segments every
candidate trendline into piecewise-linear regions, scores each region
against the queried pattern, and returns the top-k matches together with
the fitted line segments and break points.
"""

from trendseek.algebra import (
    Location,
    Modifier,
    Pattern,
    ShapeQueryAst,
    ShapeSegment,
    ValidationReport,
    expr_count,
    normalize_ast,
    validate_ast,
)
from trendseek.parser import ParseError, format_shapequery, parse_shapequery, tokenize
from trendseek.ingest import (
    CandidateViz,
    Dataset,
    SummarizedStats,
    VisualSpec,
    extract,
    group_and_bin,
    load_csv,
    merge_stats,
)
from trendseek.scoring import LineFit, fit_line, score_operator, score_pattern
from trendseek.executor import RankedResult, run_query

__version__ = "0.1.0"

__all__ = [
    "CandidateViz",
    "Dataset",
    "LineFit",
    "Location",
    "Modifier",
    "ParseError",
    "Pattern",
    "RankedResult",
    "ShapeQueryAst",
    "ShapeSegment",
    "SummarizedStats",
    "ValidationReport",
    "VisualSpec",
    "expr_count",
    "extract",
    "fit_line",
    "format_shapequery",
    "group_and_bin",
    "load_csv",
    "merge_stats",
    "normalize_ast",
    "parse_shapequery",
    "run_query",
    "score_operator",
    "score_pattern",
    "tokenize",
    "validate_ast",
]
