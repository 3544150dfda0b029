"""Dataset loading and the EXTRACT / GROUP pipeline stages.

EXTRACT filters and sorts raw records; GROUP splits them into one candidate
trendline per z value, bins by x, aggregates y, optionally z-normalizes,
and reduces every bin to five additive sums (the summarized statistics)
that suffice to fit a least-squares line over any union of adjacent bins.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

Aggregation = Literal["avg", "sum", "min", "max", "count"]
FilterOp = Literal["=", "!=", "<", "<=", ">", ">="]


class IngestError(Exception):
    pass


class SchemaError(IngestError):
    pass


class EmptyDatasetError(IngestError):
    pass


class UnknownColumnError(IngestError):
    pass


@dataclass(frozen=True)
class SummarizedStats:
    """The five additive regression sums over a set of (x, y) points.

    Merging two stats over disjoint point sets is componentwise addition;
    a least-squares line fitted from merged stats equals the fit over the
    pooled points exactly.
    """

    n: float
    sum_x: float
    sum_y: float
    sum_xy: float
    sum_xx: float

    def merge(self, other: "SummarizedStats") -> "SummarizedStats":
        return SummarizedStats(
            n=self.n + other.n,
            sum_x=self.sum_x + other.sum_x,
            sum_y=self.sum_y + other.sum_y,
            sum_xy=self.sum_xy + other.sum_xy,
            sum_xx=self.sum_xx + other.sum_xx,
        )

    @staticmethod
    def zero() -> "SummarizedStats":
        return ZERO_STATS

    @staticmethod
    def of_points(points: Iterable[tuple[float, float]]) -> "SummarizedStats":
        n = sx = sy = sxy = sxx = 0.0
        for x, y in points:
            n += 1.0
            sx += x
            sy += y
            sxy += x * y
            sxx += x * x
        return SummarizedStats(n, sx, sy, sxy, sxx)


ZERO_STATS = SummarizedStats(0.0, 0.0, 0.0, 0.0, 0.0)


def merge_stats(a: SummarizedStats, b: SummarizedStats) -> SummarizedStats:
    """Componentwise sum of two summarized statistics."""
    return a.merge(b)


@dataclass(frozen=True)
class VisualSpec:
    """How candidate trendlines are generated from a dataset."""

    z_attr: str
    x_attr: str
    y_attr: str
    filters: tuple[tuple[str, FilterOp, object], ...] = ()
    bin_width: Optional[float] = None
    aggregation: Aggregation = "avg"
    pixels_x: int = 500

    def __post_init__(self) -> None:
        if len({self.z_attr, self.x_attr, self.y_attr}) != 3:
            raise ValueError("z, x and y attributes must be distinct")
        if self.bin_width is not None and self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.pixels_x <= 0:
            raise ValueError("pixels_x must be positive")


ColumnKind = Literal["numeric", "categorical", "date"]


@dataclass
class Dataset:
    """Columnar storage; numeric and date columns are float64 arrays."""

    name: str
    columns: dict[str, np.ndarray]
    kinds: dict[str, ColumnKind]

    @property
    def row_count(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise UnknownColumnError(f"unknown column {name!r}")
        return self.columns[name]


_DATE_RE_FORMATS = ("%Y-%m-%d", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S")
_EPOCH = _dt.date(1970, 1, 1)


def _parse_date(text: str) -> Optional[float]:
    for fmt in _DATE_RE_FORMATS:
        try:
            parsed = _dt.datetime.strptime(text, fmt)
        except ValueError:
            continue
        return float((parsed.date() - _EPOCH).days)
    return None


def _infer_kind(values: Sequence[str]) -> ColumnKind:
    sample = [v for v in values if v][:100]
    if not sample:
        return "categorical"
    if all(_parse_date(v) is not None for v in sample):
        return "date"
    try:
        for v in sample:
            float(v)
        return "numeric"
    except ValueError:
        return "categorical"


def load_csv(
    path: str,
    schema_hints: Optional[dict[str, ColumnKind]] = None,
    name: Optional[str] = None,
) -> Dataset:
    """Load an RFC-4180 CSV file with a header row.

    Column types are inferred from the first 100 non-empty values unless
    hinted.  Numeric cells parse as float64; date cells (ISO-8601) convert
    to days since the epoch.  Raises SchemaError on an unparseable cell
    (with row and column) and EmptyDatasetError on a header-only file.
    """
    hints = schema_hints or {}
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise EmptyDatasetError(f"{path}: file is empty") from None
            rows = list(reader)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    if any(len(r) != len(header) for r in rows):
        bad = next(i for i, r in enumerate(rows) if len(r) != len(header))
        raise SchemaError(f"{path}: row {bad + 2} has {len(rows[bad])} cells, expected {len(header)}")

    raw = {col: [r[j] for r in rows] for j, col in enumerate(header)}
    columns: dict[str, np.ndarray] = {}
    kinds: dict[str, ColumnKind] = {}
    for col, values in raw.items():
        kind = hints.get(col) or _infer_kind(values)
        kinds[col] = kind
        if kind == "categorical":
            columns[col] = np.array(values, dtype=object)
            continue
        parsed = np.empty(len(values), dtype=np.float64)
        for i, v in enumerate(values):
            if kind == "date":
                num = _parse_date(v)
                if num is None:
                    raise SchemaError(f"{path}: row {i + 2}, column {col!r}: bad date {v!r}")
            else:
                try:
                    num = float(v)
                except ValueError:
                    raise SchemaError(f"{path}: row {i + 2}, column {col!r}: bad number {v!r}") from None
            parsed[i] = num
        columns[col] = parsed
    return Dataset(name=name or path, columns=columns, kinds=kinds)


@dataclass(frozen=True)
class RecordBatch:
    """Extracted records sorted by (z, x), plus the pre-restriction x range."""

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    x_min: float
    x_max: float

    def __len__(self) -> int:
        return len(self.x)


_FILTER_FUNCS = {
    "=": lambda col, v: col == v,
    "!=": lambda col, v: col != v,
    "<": lambda col, v: col < v,
    "<=": lambda col, v: col <= v,
    ">": lambda col, v: col > v,
    ">=": lambda col, v: col >= v,
}


def _coerce_literal(dataset: Dataset, column: str, literal: object) -> object:
    kind = dataset.kinds.get(column)
    if kind == "date" and isinstance(literal, str):
        num = _parse_date(literal)
        if num is None:
            raise SchemaError(f"filter literal {literal!r} is not a date")
        return num
    if kind == "numeric" and isinstance(literal, str):
        try:
            return float(literal)
        except ValueError:
            raise SchemaError(f"filter literal {literal!r} is not numeric") from None
    return literal


def extract(
    dataset: Dataset,
    spec: VisualSpec,
    x_ranges: Optional[Sequence[tuple[float, float]]] = None,
    margin: Optional[float] = None,
) -> RecordBatch:
    """Filter records and sort them by (z, x).

    When ``x_ranges`` is given (the push-down plan's referenced ranges),
    records outside every range, widened by one bin on both sides (or an
    explicit ``margin``), are dropped.  ``x_min``/``x_max`` on the result
    always describe the filtered-but-unrestricted data so the bin grid does
    not depend on the plan.
    """
    for col in (spec.z_attr, spec.x_attr, spec.y_attr):
        dataset.column(col)

    mask = np.ones(dataset.row_count, dtype=bool)
    for col, op, literal in spec.filters:
        column = dataset.column(col)
        if op not in _FILTER_FUNCS:
            raise ValueError(f"unsupported filter operator {op!r}")
        mask &= _FILTER_FUNCS[op](column, _coerce_literal(dataset, col, literal))

    x = np.asarray(dataset.column(spec.x_attr)[mask], dtype=np.float64)
    y = np.asarray(dataset.column(spec.y_attr)[mask], dtype=np.float64)
    z = dataset.column(spec.z_attr)[mask]
    if z.dtype != object:
        z = z.astype(object)
    if len(x) == 0:
        return RecordBatch(z=z, x=x, y=y, x_min=0.0, x_max=0.0)
    x_min, x_max = float(np.min(x)), float(np.max(x))

    if x_ranges:
        if margin is None:
            span = x_max - x_min
            margin = spec.bin_width if spec.bin_width is not None else (
                span / spec.pixels_x if span > 0 else 1.0
            )
        keep = np.zeros(len(x), dtype=bool)
        for lo, hi in x_ranges:
            keep |= (x >= lo - margin) & (x <= hi + margin)
        x, y, z = x[keep], y[keep], z[keep]

    order = np.lexsort((x, np.array([str(v) for v in z], dtype=object)))
    return RecordBatch(z=z[order], x=x[order], y=y[order], x_min=x_min, x_max=x_max)


@dataclass
class CandidateViz:
    """One candidate trendline: dense nonempty bins with summarized stats.

    ``stats`` holds one row per bin with columns (n, sum_x, sum_y, sum_xy,
    sum_xx) where x is the bin's dense position 0..B-1, making slopes
    dimensionless and comparable across datasets.  ``raw_x``/``raw_y`` keep
    the original points (original units) for plotting and sketch scoring.
    """

    id: str
    bin_index: np.ndarray     # global bin numbers, strictly ascending
    x_centers: np.ndarray     # original-unit centers of each kept bin
    values: np.ndarray        # aggregated (and possibly normalized) y per bin
    stats: np.ndarray         # (B, 5) float64
    covered: tuple[tuple[int, int], ...]  # dense-index ranges materialized
    raw_x: np.ndarray
    raw_y: np.ndarray
    bin_width: float
    point_count: int
    _prefix: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.values)

    def prefix_stats(self) -> np.ndarray:
        """(B+1, 5) cumulative stats; segment [l..r] = prefix[r+1] - prefix[l]."""
        if self._prefix is None:
            acc = np.zeros((self.size + 1, 5), dtype=np.float64)
            np.cumsum(self.stats, axis=0, out=acc[1:])
            self._prefix = acc
        return self._prefix

    def segment_stats(self, lo: int, hi: int) -> SummarizedStats:
        """Summarized stats over dense bins lo..hi inclusive."""
        p = self.prefix_stats()
        n, sx, sy, sxy, sxx = p[hi + 1] - p[lo]
        return SummarizedStats(n, sx, sy, sxy, sxx)

    def slice(self, lo: int, hi: int) -> "CandidateViz":
        """A view of dense bins lo..hi as a standalone viz.

        Bin stats are shifted so x positions restart at 0, which changes
        intercepts but no slope; values and x_centers are untouched.
        """
        n, sx, sy, sxy, sxx = (self.stats[lo : hi + 1, i] for i in range(5))
        shifted = np.column_stack(
            (
                n,
                sx - lo * n,
                sy,
                sxy - lo * sy,
                sxx - 2.0 * lo * sx + lo * lo * n,
            )
        )
        x_lo = float(self.x_centers[lo]) - self.bin_width / 2.0
        x_hi = float(self.x_centers[hi]) + self.bin_width / 2.0
        raw_mask = (self.raw_x >= x_lo) & (self.raw_x <= x_hi)
        return CandidateViz(
            id=self.id,
            bin_index=self.bin_index[lo : hi + 1],
            x_centers=self.x_centers[lo : hi + 1],
            values=self.values[lo : hi + 1],
            stats=shifted,
            covered=_dense_ranges(self.bin_index[lo : hi + 1]),
            raw_x=self.raw_x[raw_mask],
            raw_y=self.raw_y[raw_mask],
            bin_width=self.bin_width,
            point_count=int(raw_mask.sum()),
        )

    def to_json_dict(self, max_points: int = 0) -> dict:
        x = self.raw_x
        y = self.raw_y
        if max_points and len(x) > max_points:
            idx = np.linspace(0, len(x) - 1, max_points).round().astype(int)
            x, y = x[idx], y[idx]
        return {"id": self.id, "x": [float(v) for v in x], "y": [float(v) for v in y]}


_AGG_FUNCS = {
    "avg": np.mean,
    "sum": np.sum,
    "min": np.min,
    "max": np.max,
    "count": len,
}


def group_and_bin(
    records: RecordBatch,
    spec: VisualSpec,
    normalize: bool,
    materialize: Optional[Sequence[tuple[float, float]]] = None,
    norm_scope: Optional[Sequence[tuple[float, float]]] = None,
    warnings: Optional[list[str]] = None,
    threads: int = 1,
) -> list[CandidateViz]:
    """Build one CandidateViz per distinct z value.

    The bin grid is global: width = spec.bin_width, else full x range over
    spec.pixels_x, anchored at the batch's x_min.  Empty bins are dropped;
    segment indices refer to the dense list of kept bins.

    ``materialize`` restricts which x ranges get summarized statistics (the
    push-down optimization; other bins are kept only in the raw series).
    ``norm_scope`` restricts which bins feed the z-score normalization so a
    planned and an unplanned run normalize identically.  A trendline with
    fewer than 2 materialized bins is skipped with a warning.  Distinct z
    partitions are independent; ``threads`` > 1 groups them concurrently
    with identical output order.
    """
    width = spec.bin_width
    if width is None:
        span = records.x_max - records.x_min
        width = span / spec.pixels_x if span > 0 else 1.0
    x0 = records.x_min

    def in_ranges(xc: np.ndarray, ranges: Optional[Sequence[tuple[float, float]]]) -> np.ndarray:
        if ranges is None:
            return np.ones(len(xc), dtype=bool)
        mask = np.zeros(len(xc), dtype=bool)
        for lo, hi in ranges:
            mask |= (xc >= lo - width) & (xc <= hi + width)
        return mask

    agg = _AGG_FUNCS[spec.aggregation]
    z_str = np.array([str(v) for v in records.z], dtype=object)
    boundaries = np.flatnonzero(z_str[1:] != z_str[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(z_str)]))

    def build_one(bounds: tuple[int, int]) -> tuple[Optional[CandidateViz], Optional[str]]:
        s, e = bounds
        zid = str(z_str[s])
        x = records.x[s:e]
        y = records.y[s:e]
        bins = np.floor((x - x0) / width).astype(np.int64)
        last = int(np.floor((records.x_max - x0) / width))
        np.clip(bins, 0, max(last, 0), out=bins)

        uniq, inverse = np.unique(bins, return_inverse=True)
        agg_values = np.empty(len(uniq), dtype=np.float64)
        for j in range(len(uniq)):
            agg_values[j] = float(agg(y[inverse == j]))
        x_centers = x0 + (uniq + 0.5) * width

        keep = in_ranges(x_centers, materialize)
        if int(keep.sum()) < 2:
            return None, f"skipping {zid!r}: fewer than 2 bins with data"

        kept_uniq = uniq[keep]
        kept_centers = x_centers[keep]
        kept_values = agg_values[keep].copy()

        if normalize:
            scope = in_ranges(kept_centers, norm_scope)
            basis = kept_values[scope] if scope.any() else kept_values
            mean = float(np.mean(basis))
            std = float(np.std(basis))
            if std > 0.0:
                kept_values = (kept_values - mean) / std
            else:
                kept_values = np.zeros_like(kept_values)

        b = len(kept_values)
        pos = np.arange(b, dtype=np.float64)
        stats = np.column_stack(
            (np.ones(b), pos, kept_values, pos * kept_values, pos * pos)
        )

        viz = CandidateViz(
            id=zid,
            bin_index=kept_uniq,
            x_centers=kept_centers,
            values=kept_values,
            stats=stats,
            covered=_dense_ranges(kept_uniq),
            raw_x=x.copy(),
            raw_y=y.copy(),
            bin_width=width,
            point_count=int(e - s),
        )
        return viz, None

    bounds = list(zip(starts, ends))
    if threads > 1 and len(bounds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(build_one, bounds))
    else:
        built = [build_one(b) for b in bounds]

    out: list[CandidateViz] = []
    for viz, warning in built:
        if viz is not None:
            out.append(viz)
        elif warning and warnings is not None:
            warnings.append(warning)
    return out


def _dense_ranges(indices: np.ndarray) -> tuple[tuple[int, int], ...]:
    if len(indices) == 0:
        return ()
    breaks = np.flatnonzero(np.diff(indices) != 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [len(indices) - 1]))
    return tuple((int(indices[a]), int(indices[b])) for a, b in zip(starts, ends))
