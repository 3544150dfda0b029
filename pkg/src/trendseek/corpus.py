"""Bundled synthetic fixtures: a 12-city weather table and a seeded
planted-pattern corpus generator.

The generator plants runs of rising / falling / flat structure with
controllable noise.  Bin-level noise is kept well below the planted slopes
by default; steeper noise than slope makes two-point edge segments
outscore the planted structure under arctan scoring, which is realistic
but useless for calibrated tests.
"""

from __future__ import annotations

import csv
from typing import Optional, Sequence

import numpy as np

from trendseek.ingest import Dataset, RecordBatch, VisualSpec, group_and_bin

CITIES = (
    "amberfield",
    "bryceport",
    "calderon",
    "duskvale",
    "eastmere",
    "farrowgate",
    "greenhollow",
    "hartsboro",
    "ironcliff",
    "junipero",
    "kestrel",
    "larkspur",
)


def weather_rows(days: int = 365, seed: int = 20240301) -> list[tuple[str, int, float]]:
    """Daily temperatures for 12 synthetic cities over one year.

    Each city gets a phase-shifted seasonal sine, a climate offset and mild
    weather noise; two cities carry a mid-year heatwave so pattern queries
    have needles to find.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(days)
    rows: list[tuple[str, int, float]] = []
    for i, city in enumerate(CITIES):
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.uniform(8.0, 15.0)
        offset = rng.uniform(2.0, 18.0)
        temps = offset + amplitude * np.sin(2 * np.pi * t / 365.0 + phase)
        temps += rng.normal(scale=0.25, size=days)
        if i in (2, 7):  # plant a sharp heatwave: rise, fall, recover
            lo, hi = 150, 210
            bump = np.zeros(days)
            bump[lo:hi] = 10.0 * np.sin(np.pi * (np.arange(hi - lo)) / (hi - lo))
            temps += bump
        rows.extend((city, int(day), float(temp)) for day, temp in zip(t, temps))
    return rows


def write_weather_csv(path: str, days: int = 365, seed: int = 20240301) -> int:
    rows = weather_rows(days=days, seed=seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["city", "day", "temp"])
        writer.writerows(rows)
    return len(rows)


_SHAPES = ("up_down_up", "down_up_down", "monotone_up", "monotone_down", "walk", "flat")


def planted_series(
    rng: np.random.Generator,
    length: int,
    shape: str,
    noise: float = 0.15,
    slope: float = 1.0,
) -> np.ndarray:
    """One series with the named structure plus Gaussian bin noise."""
    t = np.arange(length, dtype=np.float64)
    if shape == "up_down_up":
        b1 = int(rng.integers(length // 5, 2 * length // 5))
        b2 = int(rng.integers(3 * length // 5, 4 * length // 5))
        s1 = slope * rng.uniform(0.8, 1.2)
        s2 = slope * rng.uniform(0.8, 1.2)
        s3 = slope * rng.uniform(0.8, 1.2)
        y = np.where(
            t < b1,
            t * s1,
            np.where(t < b2, b1 * s1 - (t - b1) * s2, b1 * s1 - (b2 - b1) * s2 + (t - b2) * s3),
        )
    elif shape == "down_up_down":
        return -planted_series(rng, length, "up_down_up", noise=noise, slope=slope)
    elif shape == "monotone_up":
        y = t * slope * rng.uniform(0.5, 1.0)
    elif shape == "monotone_down":
        y = -t * slope * rng.uniform(0.5, 1.0)
    elif shape == "walk":
        y = np.cumsum(rng.normal(scale=slope * 0.5, size=length))
    elif shape == "flat":
        y = np.zeros(length)
    else:
        raise ValueError(f"unknown shape {shape!r}; choose from {_SHAPES}")
    return y + rng.normal(scale=noise, size=length)


def planted_dataset(
    n_vizs: int,
    length: int,
    seed: int = 0,
    planted: str = "up_down_up",
    planted_count: Optional[int] = None,
    noise: float = 0.15,
    name: str = "planted",
) -> Dataset:
    """A dataset of ``n_vizs`` series where ``planted_count`` of them carry
    the planted shape and the rest are monotone or random-walk distractors."""
    rng = np.random.default_rng(seed)
    if planted_count is None:
        planted_count = max(1, n_vizs // 5)
    z: list[str] = []
    xs: list[float] = []
    ys: list[float] = []
    distractors = ("monotone_up", "monotone_down", "walk")
    for i in range(n_vizs):
        shape = planted if i < planted_count else distractors[i % len(distractors)]
        series = planted_series(rng, length, shape, noise=noise)
        zid = f"v{i:03d}"
        z.extend(zid for _ in range(length))
        xs.extend(float(v) for v in range(length))
        ys.extend(float(v) for v in series)
    return Dataset(
        name=name,
        columns={
            "series": np.array(z, dtype=object),
            "step": np.array(xs, dtype=np.float64),
            "value": np.array(ys, dtype=np.float64),
        },
        kinds={"series": "categorical", "step": "numeric", "value": "numeric"},
    )


def planted_vizs(
    n_vizs: int,
    length: int,
    seed: int = 0,
    planted: str = "up_down_up",
    planted_count: Optional[int] = None,
    noise: float = 0.15,
    normalize: bool = True,
) -> list:
    """The same corpus already grouped into candidate trendlines."""
    dataset = planted_dataset(
        n_vizs, length, seed=seed, planted=planted, planted_count=planted_count, noise=noise
    )
    spec = VisualSpec(z_attr="series", x_attr="step", y_attr="value", bin_width=1.0)
    from trendseek.ingest import extract

    records = extract(dataset, spec)
    return group_and_bin(records, spec, normalize=normalize)


def series_viz(y: Sequence[float], zid: str = "a", normalize: bool = False):
    """Wrap one raw series as a single candidate trendline (test helper)."""
    y_arr = np.asarray(y, dtype=np.float64)
    length = len(y_arr)
    batch = RecordBatch(
        z=np.array([zid] * length, dtype=object),
        x=np.arange(length, dtype=np.float64),
        y=y_arr,
        x_min=0.0,
        x_max=float(length - 1),
    )
    spec = VisualSpec(z_attr="z", x_attr="x", y_attr="y", bin_width=1.0)
    return group_and_bin(batch, spec, normalize=normalize)[0]
