import io
import json

import pytest
from fastapi.testclient import TestClient

from facade_pipeline.service.api import create_app
from facade_pipeline.service.runs import RunService
from facade_pipeline.service.store import RunStore
from facade_pipeline.synthetic import facade_sketch


@pytest.fixture
def client(tmp_path):
    service = RunService(RunStore(tmp_path / "store"))
    return TestClient(create_app(service))


def _upload(client, seed=0, brief="", config=None):
    sketch, _ = facade_sketch(seed)
    files = {"sketch": ("sketch.png", io.BytesIO(sketch.to_png_bytes()), "image/png")}
    data = {"brief": brief}
    if config is not None:
        data["config"] = json.dumps(config)
    resp = client.post("/api/runs", files=files, data=data)
    assert resp.status_code == 201, resp.text
    return resp.json()["run_id"]


def _to_planned(client, seed=0):
    run_id = _upload(client, seed)
    client.post(f"/api/runs/{run_id}/advance")
    client.post(f"/api/runs/{run_id}/advance")
    return run_id


def test_health(client):
    assert client.get("/api/health").json() == {"ok": True}


def test_create_and_get_run(client):
    run_id = _upload(client, brief="skylight row", config={"seed": 4})
    body = client.get(f"/api/runs/{run_id}").json()
    assert body["state"] == "CREATED"
    assert body["brief"] == "skylight row"
    assert body["config"]["seed"] == 4
    assert body["plan"] is None
    assert body["artifacts"]["sketch"].endswith("/artifacts/sketch")


def test_unknown_run_404(client):
    assert client.get("/api/runs/nope").status_code == 404


def test_bad_sketch_400(client):
    files = {"sketch": ("x.png", io.BytesIO(b"garbage"), "image/png")}
    resp = client.post("/api/runs", files=files, data={"brief": ""})
    assert resp.status_code == 400
    assert resp.json()["error"] == "invalid_sketch"


def test_advance_through_pipeline(client):
    run_id = _upload(client)
    states = []
    for _ in range(2):
        resp = client.post(f"/api/runs/{run_id}/advance")
        assert resp.status_code == 200
        states.append(resp.json()["state"])
    assert states == ["DETECTED", "PLANNED"]

    # human gate: advance is 409 until approve
    resp = client.post(f"/api/runs/{run_id}/advance")
    assert resp.status_code == 409
    assert resp.json()["error"] == "invalid_state"

    assert client.post(f"/api/runs/{run_id}/approve").json()["state"] == "PLAN_APPROVED"
    assert client.post(f"/api/runs/{run_id}/advance").json()["state"] == "ENHANCED"
    assert client.post(f"/api/runs/{run_id}/advance").json()["state"] == "RENDERED"

    body = client.get(f"/api/runs/{run_id}").json()
    assert body["plan"]["mods"]
    assert set(body["artifacts"]) == {
        "sketch", "detections", "plan", "enhanced", "enhanced_meta",
        "render", "render_meta",
    }


def test_plan_edit_accept_and_reject(client):
    run_id = _to_planned(client, seed=3)
    plan = client.get(f"/api/runs/{run_id}").json()["plan"]

    # rejected: move a mod onto a basis detection
    basis_box = plan["basis"][0]["bbox_2d"]
    resp = client.patch(f"/api/runs/{run_id}/plan",
                        json={"edit": {"op": "move", "index": 0, "bbox_2d": basis_box}})
    assert resp.status_code == 422
    report = resp.json()["report"]
    assert report["valid"] is False
    assert report["violations"]
    unchanged = client.get(f"/api/runs/{run_id}").json()["plan"]
    assert unchanged == plan

    # accepted: add in free wall space
    resp = client.patch(f"/api/runs/{run_id}/plan",
                        json={"edit": {"op": "add", "label": "window",
                                       "bbox_2d": [780, 800, 900, 950]}})
    assert resp.status_code == 200
    assert len(resp.json()["mods"]) == len(plan["mods"]) + 1
    assert len(client.get(f"/api/runs/{run_id}").json()["edit_log"]) == 1


def test_plan_edit_malformed_400(client):
    run_id = _to_planned(client)
    resp = client.patch(f"/api/runs/{run_id}/plan",
                        json={"edit": {"op": "explode"}})
    assert resp.status_code == 400
    resp = client.patch(f"/api/runs/{run_id}/plan", json={"edit": "not a dict"})
    assert resp.status_code == 400


def test_edit_requires_planned_state(client):
    run_id = _upload(client)
    resp = client.patch(f"/api/runs/{run_id}/plan",
                        json={"edit": {"op": "delete", "index": 0}})
    assert resp.status_code == 409


def test_artifact_endpoints(client):
    run_id = _to_planned(client)
    png = client.get(f"/api/runs/{run_id}/artifacts/sketch")
    assert png.status_code == 200
    assert png.headers["content-type"] == "image/png"
    assert png.content[:8] == b"\x89PNG\r\n\x1a\n"

    plan = client.get(f"/api/runs/{run_id}/artifacts/plan")
    assert plan.status_code == 200
    assert "mods" in plan.json()

    not_ready = client.get(f"/api/runs/{run_id}/artifacts/render")
    assert not_ready.status_code == 404

    bad_stage = client.get(f"/api/runs/{run_id}/artifacts/hologram")
    assert bad_stage.status_code == 404


def test_retry_endpoint(client):
    run_id = _to_planned(client)
    client.patch(f"/api/runs/{run_id}/plan",
                 json={"edit": {"op": "add", "label": "window",
                                "bbox_2d": [978, 10, 986, 20]}})
    client.post(f"/api/runs/{run_id}/approve")
    assert client.post(f"/api/runs/{run_id}/advance").json()["state"] == "FAILED"
    resp = client.post(f"/api/runs/{run_id}/retry")
    assert resp.status_code == 200
    assert resp.json()["state"] == "PLAN_APPROVED"


def test_config_validation_surfaces(client):
    from facade_pipeline.synthetic import facade_sketch as fs

    sketch, _ = fs(0)
    files = {"sketch": ("s.png", io.BytesIO(sketch.to_png_bytes()), "image/png")}
    resp = client.post("/api/runs", files=files,
                       data={"brief": "", "config": json.dumps({"tolerance": 9})})
    assert resp.status_code == 400
    assert resp.json()["error"] == "bad_config"
