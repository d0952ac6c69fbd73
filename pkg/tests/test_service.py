import base64
import hashlib
import time

import pytest
from fastapi.testclient import TestClient

from imgcloak.detector.scenes import image_from_png_bytes, image_to_png_bytes
from imgcloak.service import create_app


def _wait(client, job_id, timeout=60.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        state = client.get(f"/v1/jobs/{job_id}").json()
        if state["state"] in ("done", "failed"):
            return state
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


@pytest.fixture(scope="module")
def client(detector):
    with TestClient(create_app(detector)) as c:
        yield c


@pytest.fixture(scope="module")
def scene_png(small_corpus):
    return image_to_png_bytes(small_corpus[0][0])


@pytest.fixture(scope="module")
def session(client, scene_png):
    response = client.post("/v1/sessions", content=scene_png)
    assert response.status_code == 201
    return response.json()


class TestSessions:
    def test_create_returns_detections(self, session):
        assert session["session_id"].startswith("s")
        assert session["width"] == 64 and session["height"] == 64
        assert session["categories"] == ["circle", "square", "triangle"]
        assert {d["category"] for d in session["detections"]} == {"circle", "square", "triangle"}
        for i, det in enumerate(session["detections"]):
            assert det["index"] == i
            assert det["category"] in session["categories"]
            assert len(det["box"]) == 4

    def test_empty_body_rejected(self, client):
        assert client.post("/v1/sessions", content=b"").status_code == 422

    def test_garbage_body_rejected(self, client):
        assert client.post("/v1/sessions", content=b"not a png").status_code == 422


class TestAttackValidation:
    def test_unknown_session(self, client):
        r = client.post("/v1/sessions/s999/attacks", json={"mode": "all"})
        assert r.status_code == 404

    def test_bad_epsilon_string(self, client, session):
        sid = session["session_id"]
        r = client.post(f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "lots"})
        assert r.status_code == 422

    def test_epsilon_out_of_range(self, client, session):
        sid = session["session_id"]
        r = client.post(f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "64/255"})
        assert r.status_code == 422

    def test_sensitive_requires_selection(self, client, session):
        sid = session["session_id"]
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={"mode": "sensitive", "target_category": "triangle"},
        )
        assert r.status_code == 422
        assert any("sensitive" in str(d.get("loc")) for d in r.json()["detail"])

    def test_sensitive_requires_target(self, client, session):
        sid = session["session_id"]
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={"mode": "sensitive", "sensitive_categories": ["circle"]},
        )
        assert r.status_code == 422

    def test_unknown_category_name(self, client, session):
        sid = session["session_id"]
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={"mode": "sensitive", "sensitive_categories": ["person"], "target_category": "triangle"},
        )
        assert r.status_code == 422

    def test_target_inside_sensitive_set(self, client, session):
        sid = session["session_id"]
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={"mode": "sensitive", "sensitive_categories": ["circle"], "target_category": "circle"},
        )
        assert r.status_code == 422

    def test_box_index_out_of_range(self, client, session):
        sid = session["session_id"]
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={"mode": "sensitive", "box_indices": [99], "target_category": "triangle"},
        )
        assert r.status_code == 422


class TestJobs:
    def test_unknown_job(self, client):
        assert client.get("/v1/jobs/j999").status_code == 404
        assert client.get("/v1/jobs/j999/result").status_code == 404

    def test_hide_all_roundtrip(self, client, session, scene_png, detector):
        sid = session["session_id"]
        r = client.post(f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"})
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        state = _wait(client, job_id)
        assert state["state"] == "done"
        assert state["trace"] and state["trace"][0]["i"] == 1
        result = client.get(f"/v1/jobs/{job_id}/result").json()
        assert result["succeeded"] is True
        assert result["detections"] == []
        assert result["ssim"] is not None
        # returned bytes must re-detect empty when decoded fresh
        png = base64.b64decode(result["image_base64"])
        image = image_from_png_bytes(png)
        assert detector.detect(image, 0.3) == []

    def test_result_bytes_stable_across_downloads(self, client, session):
        sid = session["session_id"]
        r = client.post(f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"})
        job_id = r.json()["job_id"]
        _wait(client, job_id)
        a = client.get(f"/v1/jobs/{job_id}/result").json()["image_base64"]
        b = client.get(f"/v1/jobs/{job_id}/result").json()["image_base64"]
        assert hashlib.sha256(a.encode()).digest() == hashlib.sha256(b.encode()).digest()

    def test_hide_sensitive_via_box_indices(self, client, session, detector):
        sid = session["session_id"]
        circle_index = next(
            d["index"] for d in session["detections"] if d["category"] == "circle"
        )
        r = client.post(
            f"/v1/sessions/{sid}/attacks",
            json={
                "mode": "sensitive",
                "box_indices": [circle_index],
                "target_category": "triangle",
                "epsilon": "8/255",
            },
        )
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        assert _wait(client, job_id)["state"] == "done"
        result = client.get(f"/v1/jobs/{job_id}/result").json()
        assert result["succeeded"] is True
        assert all(d["category"] != "circle" for d in result["detections"])

    def test_result_unavailable_while_pending_or_queued(self, client, session):
        sid = session["session_id"]
        r = client.post(f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"})
        job_id = r.json()["job_id"]
        first = client.get(f"/v1/jobs/{job_id}/result")
        # job may legitimately have finished already on a fast machine
        assert first.status_code in (200, 409)
        _wait(client, job_id)
        assert client.get(f"/v1/jobs/{job_id}/result").status_code == 200


class TestQueueDisabled:
    def test_second_submission_conflicts(self, detector, scene_png):
        with TestClient(create_app(detector, queue_jobs=False)) as client:
            sid = client.post("/v1/sessions", content=scene_png).json()["session_id"]
            first = client.post(
                f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"}
            )
            assert first.status_code == 202
            second = client.post(
                f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"}
            )
            assert second.status_code == 409
            _wait(client, first.json()["job_id"])
            third = client.post(
                f"/v1/sessions/{sid}/attacks", json={"mode": "all", "epsilon": "8/255"}
            )
            assert third.status_code == 202
            _wait(client, third.json()["job_id"])
