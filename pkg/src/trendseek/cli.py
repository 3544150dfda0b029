"""Command line entry point: one-shot queries, engine benchmarks, the HTTP
server, parse checking and fixture generation.

Exit codes: 0 success, 2 usage or validation error, 1 internal failure.
"""

from __future__ import annotations

import csv as _csv
import io
import json
import sys
import time
from pathlib import Path
from typing import Optional

import click
import numpy as np

from trendseek.algebra import expr_count
from trendseek.corpus import planted_dataset, write_weather_csv
from trendseek.engines.core import ENGINE_NAMES, EngineConfig, TooLarge
from trendseek.executor import QueryOutcome, run_query
from trendseek.ingest import IngestError, VisualSpec, load_csv
from trendseek.parser import (
    LexError,
    ParseError,
    SemanticError,
    format_shapequery,
    parse_shapequery,
)
from trendseek.service import ast_to_dict

USAGE_EXIT = 2


def _fail_usage(message: str) -> None:
    click.echo(message, err=True)
    sys.exit(USAGE_EXIT)


def _caret_diagnostic(query: str, span: tuple[int, int], message: str) -> str:
    start, end = span
    width = max(end - start, 1)
    return f"{query}\n{' ' * start}{'^' * width}\n{message}"


def _parse_or_exit(query: str):
    try:
        return parse_shapequery(query)
    except (LexError, ParseError) as exc:
        _fail_usage(_caret_diagnostic(query, exc.span, exc.message))
    except SemanticError as exc:
        _fail_usage(f"invalid query: {exc}")


def _parse_filters(filters: tuple[str, ...]) -> tuple:
    parsed = []
    for raw in filters:
        parts = raw.split(None, 2)
        if len(parts) != 3:
            _fail_usage(f"bad --filter {raw!r}; expected 'column op value'")
        parsed.append((parts[0], parts[1], parts[2]))
    return tuple(parsed)


@click.group()
def main() -> None:
    """Search collections of trendlines by shape."""


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--z", required=True, help="Column holding the trendline id.")
@click.option("--x", required=True, help="Column for the x axis.")
@click.option("--y", required=True, help="Column for the y axis.")
@click.option("--query", "query_text", required=True, help="Shape query, e.g. 'u >> d >> u'.")
@click.option("--filter", "filters", multiple=True, help="Row filter 'column op value'; repeatable.")
@click.option("--k", default=5, show_default=True, help="Number of results.")
@click.option("--engine", default="segtree_prune", show_default=True, type=click.Choice(ENGINE_NAMES))
@click.option("--bin-width", type=float, default=None, help="Bin width in x units.")
@click.option("--agg", default="avg", show_default=True, type=click.Choice(["avg", "sum", "min", "max", "count"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--eager-pushdown", is_flag=True, default=False)
@click.option("--out", "out_format", default="table", show_default=True, type=click.Choice(["table", "json", "csv"]))
@click.option("--plot-dir", type=click.Path(file_okay=False), default=None, help="Render result figures here.")
def query(
    dataset: str,
    z: str,
    x: str,
    y: str,
    query_text: str,
    filters: tuple[str, ...],
    k: int,
    engine: str,
    bin_width: Optional[float],
    agg: str,
    seed: int,
    threads: int,
    eager_pushdown: bool,
    out_format: str,
    plot_dir: Optional[str],
) -> None:
    """Run one shape query against a CSV and print the top matches."""
    ast = _parse_or_exit(query_text)
    try:
        data = load_csv(dataset)
        spec = VisualSpec(
            z_attr=z, x_attr=x, y_attr=y,
            filters=_parse_filters(filters),
            bin_width=bin_width, aggregation=agg,
        )
    except (IngestError, ValueError) as exc:
        _fail_usage(str(exc))
    config = EngineConfig(engine=engine, seed=seed, threads=threads, eager_pushdown=eager_pushdown)
    try:
        outcome = run_query(data, spec, ast, k=k, config=config)
    except TooLarge as exc:
        _fail_usage(str(exc))
    except ValueError as exc:
        _fail_usage(str(exc))

    for warning in outcome.warnings:
        click.echo(f"warning: {warning}", err=True)
    _emit(outcome, ast, out_format)
    if plot_dir:
        from trendseek.report import render_results

        paths = render_results(outcome.results, plot_dir)
        click.echo(f"wrote {len(paths)} figures to {plot_dir}", err=True)


def _emit(outcome: QueryOutcome, ast, out_format: str) -> None:
    if out_format == "json":
        payload = {
            "parsed": {"canonical": format_shapequery(ast), "ast": ast_to_dict(ast)},
            "results": [r.to_json_dict(max_points=1000) for r in outcome.results],
            "warnings": outcome.warnings,
            "timing_ms": outcome.timings_ms,
        }
        click.echo(json.dumps(payload))
        return
    if out_format == "csv":
        buffer = io.StringIO()
        writer = _csv.writer(buffer)
        writer.writerow(["rank", "viz_id", "total", "breakpoints_x", "expr_scores"])
        for rank, r in enumerate(outcome.results, start=1):
            writer.writerow(
                [
                    rank,
                    r.viz_id,
                    f"{r.total:.6f}",
                    ";".join(f"{v:g}" for v in r.breakpoint_x),
                    ";".join(f"{s:.6f}" for s in r.expr_scores),
                ]
            )
        click.echo(buffer.getvalue().rstrip("\n"))
        return
    if not outcome.results:
        click.echo("no matching trendlines")
        return
    click.echo(f"{'rank':<5}{'id':<16}{'score':>8}  breakpoints (x)")
    for rank, r in enumerate(outcome.results, start=1):
        bps = ", ".join(f"{v:g}" for v in r.breakpoint_x)
        click.echo(f"{rank:<5}{r.viz_id:<16}{r.total:>+8.4f}  [{bps}]")


@main.command()
@click.option("--query", "query_text", required=True)
def parse(query_text: str) -> None:
    """Parse a query and print its canonical form and AST."""
    ast = _parse_or_exit(query_text)
    click.echo(json.dumps({
        "canonical": format_shapequery(ast),
        "expr_count": expr_count(ast),
        "ast": ast_to_dict(ast),
    }, indent=2))


@main.command()
@click.option("--synthetic", default=None, help="Generate a corpus: 'n_vizs,length,k'.")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), default=None, help="CSV corpus (series,step,value).")
@click.option("--engines", "engine_list", default="dp,segtree", show_default=True)
@click.option("--query", "query_text", default=None, help="Query override; default derives from k.")
@click.option("--k", default=10, show_default=True, help="Top-k used for the accuracy overlap.")
@click.option("--seed", default=0, show_default=True)
@click.option("--trials", default=6, show_default=True, help="Timed trials; the first is discarded.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Write the CSV here instead of stdout.")
def bench(
    synthetic: Optional[str],
    corpus: Optional[str],
    engine_list: str,
    query_text: Optional[str],
    k: int,
    seed: int,
    trials: int,
    out_path: Optional[str],
) -> None:
    """Benchmark engines; emits CSV: engine,viz_count,series_len,k,wall_ms,accuracy_vs_dp.

    Each engine runs ``trials`` times; the first (warm-up) trial is ignored
    and the rest are averaged.
    """
    if (synthetic is None) == (corpus is None):
        _fail_usage("provide exactly one of --synthetic or --corpus")
    if synthetic is not None:
        try:
            n_vizs, length, n_exprs = (int(v) for v in synthetic.split(","))
        except ValueError:
            _fail_usage(f"bad --synthetic {synthetic!r}; expected 'n,len,k'")
        data = planted_dataset(n_vizs, length, seed=seed)
        series_len = length
    else:
        data = load_csv(corpus)
        series_len = 0
        n_exprs = 3
    if query_text is None:
        cycle = ["u", "d"]
        query_text = ">>".join(cycle[i % 2] for i in range(n_exprs))
    ast = _parse_or_exit(query_text)
    spec = VisualSpec(z_attr="series", x_attr="step", y_attr="value", bin_width=1.0)

    engines = [name.strip() for name in engine_list.split(",") if name.strip()]
    for name in engines:
        if name not in ENGINE_NAMES:
            _fail_usage(f"unknown engine {name!r}")

    def run_engine(name: str) -> tuple[float, QueryOutcome]:
        config = EngineConfig(engine=name, seed=seed)
        wall: list[float] = []
        outcome: Optional[QueryOutcome] = None
        for trial in range(max(trials, 2)):
            t0 = time.perf_counter()
            outcome = run_query(data, spec, ast, k=k, config=config)
            wall.append((time.perf_counter() - t0) * 1000)
        assert outcome is not None
        return float(np.mean(wall[1:])), outcome

    try:
        dp_ms, dp_outcome = run_engine("dp")
    except TooLarge as exc:
        _fail_usage(str(exc))
    dp_ids = [r.viz_id for r in dp_outcome.results]
    viz_count = len({*dp_ids}) if corpus else (n_vizs if synthetic else 0)
    if synthetic is None:
        viz_count = len(set(data.columns["series"]))
        series_len = int(len(data.columns["step"]) / max(viz_count, 1))

    rows = []
    for name in engines:
        if name == "dp":
            wall_ms, outcome = dp_ms, dp_outcome
        else:
            try:
                wall_ms, outcome = run_engine(name)
            except TooLarge as exc:
                _fail_usage(str(exc))
        ids = [r.viz_id for r in outcome.results]
        overlap = len(set(ids) & set(dp_ids)) / max(len(dp_ids), 1)
        rows.append((name, viz_count, series_len, k, f"{wall_ms:.2f}", f"{overlap:.3f}"))

    buffer = io.StringIO()
    writer = _csv.writer(buffer)
    writer.writerow(["engine", "viz_count", "series_len", "k", "wall_ms", "accuracy_vs_dp"])
    writer.writerows(rows)
    text = buffer.getvalue()
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}", err=True)
    else:
        click.echo(text.rstrip("\n"))


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(file_okay=False), default=None)
@click.option("--static-dir", type=click.Path(file_okay=False), default=None)
def serve(port: int, host: str, data_dir: Optional[str], static_dir: Optional[str]) -> None:
    """Start the HTTP service (and the web UI when built)."""
    import uvicorn

    from trendseek.service import create_app

    uvicorn.run(create_app(data_dir=data_dir, static_dir=static_dir), host=host, port=port)


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--seed", default=20240301, show_default=True)
def fixtures(out_dir: str, seed: int) -> None:
    """Write the bundled fixture CSVs (weather.csv, planted.csv)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = write_weather_csv(str(out / "weather.csv"), seed=seed)
    click.echo(f"weather.csv: {n} rows")
    data = planted_dataset(40, 192, seed=seed)
    with open(out / "planted.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["series", "step", "value"])
        for z, x, y in zip(data.columns["series"], data.columns["step"], data.columns["value"]):
            writer.writerow([z, int(x), f"{y:.5f}"])
    click.echo(f"planted.csv: {len(data.columns['series'])} rows")


if __name__ == "__main__":
    main()
