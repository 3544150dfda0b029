import io
import json

import pytest
from fastapi.testclient import TestClient

from trendseek.corpus import planted_dataset
from trendseek.service import create_app

CSV_SMALL = "g,t,v\na,1,2\na,2,3\nb,1,4\n"


@pytest.fixture
def client(tmp_path):
    app = create_app(data_dir=str(tmp_path / "data"))
    return TestClient(app)


def upload(client, text, name="small"):
    return client.post(
        "/api/datasets",
        params={"name": name},
        files={"file": (f"{name}.csv", io.BytesIO(text.encode()), "text/csv")},
    )


def planted_csv(n=12, length=64, seed=6):
    data = planted_dataset(n, length, seed=seed, planted_count=4, noise=0.12)
    lines = ["series,step,value"]
    for z, x, y in zip(data.columns["series"], data.columns["step"], data.columns["value"]):
        lines.append(f"{z},{x:g},{y:.6f}")
    return "\n".join(lines) + "\n"


def test_health(client):
    assert client.get("/health").json() == {"status": "ok"}


def test_upload_and_list(client):
    resp = upload(client, CSV_SMALL)
    assert resp.status_code == 200
    body = resp.json()
    assert body["row_count"] == 3
    assert {c["name"] for c in body["columns"]} == {"g", "t", "v"}
    names = [d["name"] for d in client.get("/api/datasets").json()["datasets"]]
    assert "small" in names


def test_upload_empty_body_rejected(client):
    resp = upload(client, "")
    assert resp.status_code == 400


def test_reupload_replaces(client):
    upload(client, CSV_SMALL)
    resp = upload(client, "g,t,v\na,1,9\n")
    assert resp.status_code == 200
    assert resp.json()["row_count"] == 1


def test_parse_ok(client):
    body = client.get("/api/parse", params={"q": "u>>d"}).json()
    assert body["ok"] is True
    assert body["canonical"] == "[p=up] >> [p=down]"
    assert body["ast"]["node"] == "concat"
    assert body["issues"] == []


def test_parse_error_has_span(client):
    body = client.get("/api/parse", params={"q": "[p=up"}).json()
    assert body["ok"] is False
    issue = body["issues"][0]
    assert issue["code"] == "PARSE_ERROR"
    assert len(issue["span"]) == 2


def test_parse_semantic_issue(client):
    body = client.get("/api/parse", params={"q": "[p=$3]"}).json()
    assert body["ok"] is False
    assert any(i["code"] == "BAD_POSITION_REF" for i in body["issues"])


def test_parse_never_500_on_garbage(client):
    for q in ("", "!!!", "[", "u >>", "?" * 50, "\x00"):
        resp = client.get("/api/parse", params={"q": q})
        assert resp.status_code == 200
        assert resp.json()["ok"] is False or q == ""


def test_query_unknown_dataset_404(client):
    resp = client.post(
        "/api/query",
        json={"dataset": "nope", "z": "a", "x": "b", "y": "c", "query": "u"},
    )
    assert resp.status_code == 404


def test_query_end_to_end(client):
    upload(client, planted_csv(), name="planted")
    resp = client.post(
        "/api/query",
        json={
            "dataset": "planted",
            "z": "series",
            "x": "step",
            "y": "value",
            "bin_width": 1.0,
            "query": "u>>d>>u",
            "k": 5,
            "engine": "segtree",
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["parsed"]["canonical"] == "[p=up] >> [p=down] >> [p=up]"
    assert len(body["results"]) == 5
    totals = [r["total"] for r in body["results"]]
    assert totals == sorted(totals, reverse=True)
    first = body["results"][0]
    assert len(first["breakpoint_x"]) == 4
    assert len(first["fits"]) == 3
    assert len(first["series"]["x"]) <= 1000


def test_query_unknown_column_400(client):
    upload(client, CSV_SMALL)
    resp = client.post(
        "/api/query",
        json={"dataset": "small", "z": "nope", "x": "t", "y": "v", "query": "u"},
    )
    assert resp.status_code == 400


def test_query_bad_query_400(client):
    upload(client, CSV_SMALL)
    resp = client.post(
        "/api/query",
        json={"dataset": "small", "z": "g", "x": "t", "y": "v", "query": "[p=up"},
    )
    assert resp.status_code == 400


def test_query_infeasible_422(client):
    upload(client, CSV_SMALL)  # two-point series cannot host three exprs
    resp = client.post(
        "/api/query",
        json={
            "dataset": "small",
            "z": "g",
            "x": "t",
            "y": "v",
            "query": "u>>d>>u",
            "engine": "dp",
        },
    )
    assert resp.status_code in (200, 422)
    if resp.status_code == 200:
        assert resp.json()["results"] == []


def test_sketch_only_request_synthesizes_query(client):
    upload(client, planted_csv(), name="planted")
    resp = client.post(
        "/api/query",
        json={
            "dataset": "planted",
            "z": "series",
            "x": "step",
            "y": "value",
            "bin_width": 1.0,
            "sketch": [[0, 0], [30, 30], [63, 0]],
            "k": 3,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["parsed"]["canonical"].startswith("[v=")
    assert len(body["results"]) == 3


def test_query_and_sketch_together_rejected(client):
    upload(client, CSV_SMALL)
    resp = client.post(
        "/api/query",
        json={
            "dataset": "small",
            "z": "g",
            "x": "t",
            "y": "v",
            "query": "u",
            "sketch": [[0, 0], [1, 1]],
        },
    )
    assert resp.status_code == 400
