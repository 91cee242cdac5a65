"""
Tests for the HTTP API.
"""
import pytest
from fastapi.testclient import TestClient

from app.core.config import settings
from app.main import app

API = settings.API_V1_STR


@pytest.fixture
def client():
    with TestClient(app) as client:
        yield client


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert body["version"] == settings.VERSION


def test_root(client):
    assert client.get("/").json()["docs"] == "/docs"


def test_metrics_count_requests(client):
    client.get("/health")
    response = client.get("/metrics")
    assert response.status_code == 200
    assert "http_requests_total" in response.text


class TestAnalytics:
    def test_gate_values(self, client):
        response = client.get(f"{API}/analytics/gate-values", params={"num_actions": 100, "error": 0.5})
        assert response.status_code == 200
        body = response.json()
        assert body["gap_ratio"] == pytest.approx(0.0414, abs=2e-4)
        assert body["w_plus"] > body["w_minus"] > 0

    def test_gate_values_rejects_small_k(self, client):
        response = client.get(f"{API}/analytics/gate-values", params={"num_actions": 2})
        assert response.status_code == 422

    def test_directions(self, client):
        response = client.post(f"{API}/analytics/directions", json={"p1": 0.9, "p2": 0.1})
        assert response.status_code == 200
        body = response.json()
        assert body["cos_dg"] > body["cos_pg"]
        assert 1.0 < body["ratio_dg"] < body["ratio_pg"]

    def test_directions_equal_probabilities(self, client):
        response = client.post(f"{API}/analytics/directions", json={"p1": 0.5, "p2": 0.5})
        assert response.status_code == 422
        assert "differ" in response.json()["detail"]

    def test_directions_out_of_range(self, client):
        response = client.post(f"{API}/analytics/directions", json={"p1": 1.5, "p2": 0.5})
        assert response.status_code == 422


class TestRuns:
    def test_small_bandit(self, client, tmp_path):
        payload = {
            "testbed": "bandit",
            "label": "api",
            "num_actions": 5,
            "batch": 10,
            "steps": 10,
            "seeds": 2,
            "output_dir": str(tmp_path),
        }
        response = client.post(f"{API}/runs/", json=payload)
        assert response.status_code == 201
        body = response.json()
        assert body["output_dir"] == str(tmp_path / "bandit" / "api")
        assert len(body["summaries"]) == 4
        assert (tmp_path / "bandit" / "api" / "summary.jsonl").exists()

    def test_bad_config_names_the_field(self, client):
        response = client.post(f"{API}/runs/", json={"testbed": "bandit", "estimators": "pg,bogus"})
        assert response.status_code == 422
        assert response.json()["detail"]["field"] == "estimators"

    def test_negative_batch(self, client):
        response = client.post(f"{API}/runs/", json={"testbed": "bandit", "batch": 0})
        assert response.status_code == 422
        assert response.json()["detail"]["field"] == "batch"


class TestVerify:
    def test_report(self, client):
        response = client.get(f"{API}/verify/", params={"seed": 11})
        assert response.status_code == 200
        body = response.json()
        assert body["seed"] == 11
        assert all(check["passed"] for check in body["checks"])

    def test_negative_seed(self, client):
        assert client.get(f"{API}/verify/", params={"seed": -1}).status_code == 422
