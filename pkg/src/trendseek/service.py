"""HTTP facade: dataset upload and registry, query parsing for the live
correction panel, and query execution.

The JSON field names here are the public contract (documented in
docs/api.md); numbers are IEEE-754 doubles and x values echo the original
data units.
"""

from __future__ import annotations

import os
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from trendseek.algebra import (
    And,
    Concat,
    Not,
    Or,
    PatternKind,
    Seg,
    ShapeQueryAst,
)
from trendseek.engines.core import ENGINE_NAMES, EngineConfig, InfeasibleSegmentation
from trendseek.executor import run_query
from trendseek.ingest import Dataset, IngestError, SchemaError, VisualSpec, load_csv
from trendseek.parser import (
    LexError,
    ParseError,
    SemanticError,
    format_shapequery,
    parse_shapequery,
)

MAX_UPLOAD_BYTES = 100 * 1024 * 1024


class DatasetStore:
    """CSV files in a data directory, loaded lazily and cached immutably."""

    def __init__(self, data_dir: str):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._cache: dict[str, Dataset] = {}

    def names(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.csv"))

    def path(self, name: str) -> Path:
        return self.data_dir / f"{name}.csv"

    def save(self, name: str, payload: bytes) -> Dataset:
        path = self.path(name)
        path.write_bytes(payload)
        dataset = load_csv(str(path), name=name)
        with self._lock:
            self._cache[name] = dataset
        return dataset

    def get(self, name: str) -> Dataset:
        with self._lock:
            cached = self._cache.get(name)
        if cached is not None:
            return cached
        path = self.path(name)
        if not path.exists():
            raise KeyError(name)
        dataset = load_csv(str(path), name=name)
        with self._lock:
            self._cache[name] = dataset
        return dataset


def ast_to_dict(ast: ShapeQueryAst) -> dict:
    if isinstance(ast, Seg):
        seg = ast.segment
        pat = seg.pattern
        node: dict = {"node": "segment", "pattern": pat.kind.value}
        if pat.kind is PatternKind.THETA:
            node["angle"] = pat.angle
        elif pat.kind is PatternKind.SKETCH:
            node["points"] = [list(p) for p in pat.points or ()]
        elif pat.kind is PatternKind.POSITION_REF:
            node["ref"] = pat.ref
        elif pat.kind is PatternKind.UDP:
            node["name"] = pat.name
        elif pat.kind is PatternKind.NESTED and pat.sub is not None:
            node["sub"] = ast_to_dict(pat.sub)
        loc = seg.location
        location = {}
        for key, value in (
            ("x_start", loc.x_start),
            ("x_end", loc.x_end),
            ("y_start", loc.y_start),
            ("y_end", loc.y_end),
            ("iterator_width", loc.iterator_width),
        ):
            if value is not None:
                location[key] = value
        if location:
            node["location"] = location
        mod = seg.modifier
        modifier = {}
        if mod.quantifier is not None:
            modifier["min"] = mod.quantifier.min
            modifier["max"] = mod.quantifier.max
        if mod.comparator is not None:
            modifier["comparator"] = mod.comparator.value
        if mod.multiplier is not None:
            modifier["multiplier"] = mod.multiplier
        if modifier:
            node["modifier"] = modifier
        return node
    if isinstance(ast, Not):
        return {"node": "not", "child": ast_to_dict(ast.child)}
    name = {Concat: "concat", And: "and", Or: "or"}[type(ast)]
    return {"node": name, "children": [ast_to_dict(c) for c in ast.children]}


class FilterSpec(BaseModel):
    column: str
    op: str
    value: object


class QueryRequest(BaseModel):
    dataset: str
    z: str
    x: str
    y: str
    filters: list[FilterSpec] = Field(default_factory=list)
    bin_width: Optional[float] = None
    aggregation: str = "avg"
    query: Optional[str] = None
    sketch: Optional[list[tuple[float, float]]] = None
    k: int = 10
    engine: str = "segtree_prune"
    seed: int = 0
    threads: int = 1
    eager_pushdown: bool = False
    sketch_metric: str = "euclid"


def _sketch_to_query_text(points: list[tuple[float, float]]) -> str:
    body = ",".join(f"{x}:{y}" for x, y in points)
    return f"[v={body}]"


def create_app(data_dir: Optional[str] = None, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="trendseek", version="0.1.0")
    store = DatasetStore(data_dir or os.environ.get("TRENDSEEK_DATA_DIR", "./trendseek-data"))
    app.state.store = store

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/datasets")
    def list_datasets() -> dict:
        out = []
        for name in store.names():
            try:
                ds = store.get(name)
            except (IngestError, OSError):
                continue
            out.append(
                {
                    "name": name,
                    "columns": [
                        {"name": c, "kind": ds.kinds[c]} for c in ds.columns
                    ],
                    "row_count": ds.row_count,
                }
            )
        return {"datasets": out}

    @app.post("/api/datasets")
    async def upload_dataset(file: UploadFile, name: Optional[str] = None) -> dict:
        payload = await file.read()
        if len(payload) > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=413, detail="upload exceeds 100 MiB")
        if not payload:
            raise HTTPException(status_code=400, detail="empty upload")
        dataset_name = name or Path(file.filename or "dataset").stem
        try:
            dataset = store.save(dataset_name, payload)
        except (SchemaError, IngestError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "name": dataset_name,
            "columns": [{"name": c, "kind": dataset.kinds[c]} for c in dataset.columns],
            "row_count": dataset.row_count,
        }

    @app.get("/api/parse")
    def parse_endpoint(q: str = "") -> dict:
        try:
            ast = parse_shapequery(q)
        except (LexError, ParseError) as exc:
            return {
                "ok": False,
                "canonical": None,
                "ast": None,
                "issues": [
                    {
                        "code": "PARSE_ERROR",
                        "message": exc.message,
                        "span": list(exc.span),
                    }
                ],
            }
        except SemanticError as exc:
            return {
                "ok": False,
                "canonical": None,
                "ast": None,
                "issues": [
                    {"code": i.code, "message": i.message, "path": i.path}
                    for i in exc.issues
                ],
            }
        return {
            "ok": True,
            "canonical": format_shapequery(ast),
            "ast": ast_to_dict(ast),
            "issues": [],
        }

    @app.post("/api/query")
    def query_endpoint(req: QueryRequest) -> JSONResponse:
        try:
            dataset = store.get(req.dataset)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown dataset {req.dataset!r}") from None

        if req.query and req.sketch:
            raise HTTPException(status_code=400, detail="provide either query or sketch, not both")
        query_text = req.query or (_sketch_to_query_text(req.sketch) if req.sketch else None)
        if not query_text:
            raise HTTPException(status_code=400, detail="missing query")
        if req.engine not in ENGINE_NAMES:
            raise HTTPException(status_code=400, detail=f"unknown engine {req.engine!r}")

        try:
            ast = parse_shapequery(query_text)
        except (LexError, ParseError) as exc:
            raise HTTPException(
                status_code=400, detail={"message": exc.message, "span": list(exc.span)}
            ) from exc
        except SemanticError as exc:
            raise HTTPException(
                status_code=400,
                detail={"issues": [{"code": i.code, "message": i.message} for i in exc.issues]},
            ) from exc

        try:
            spec = VisualSpec(
                z_attr=req.z,
                x_attr=req.x,
                y_attr=req.y,
                filters=tuple((f.column, f.op, f.value) for f in req.filters),
                bin_width=req.bin_width,
                aggregation=req.aggregation,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        config = EngineConfig(
            engine=req.engine,
            seed=req.seed,
            threads=req.threads,
            eager_pushdown=req.eager_pushdown,
            sketch_metric=req.sketch_metric,
        )
        t0 = time.perf_counter()
        try:
            outcome = run_query(dataset, spec, ast, k=req.k, config=config)
        except IngestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except InfeasibleSegmentation as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        total_ms = (time.perf_counter() - t0) * 1000

        timings = dict(outcome.timings_ms)
        timings["total_ms"] = total_ms
        return JSONResponse(
            {
                "parsed": {"canonical": format_shapequery(ast), "ast": ast_to_dict(ast)},
                "results": [r.to_json_dict(max_points=1000) for r in outcome.results],
                "warnings": outcome.warnings,
                "timing_ms": timings,
            }
        )

    static_root = static_dir or os.environ.get("TRENDSEEK_STATIC_DIR")
    if static_root is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        if bundled.is_dir():
            static_root = str(bundled)
    if static_root and Path(static_root).is_dir():
        app.mount("/", StaticFiles(directory=static_root, html=True), name="ui")
    return app
