"""Service route tests: request/response round trips and error mapping."""

import pytest
from fastapi.testclient import TestClient

from rdueq.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def merton_config():
    return {
        "market": {"r": 0.0, "mu": [0.05], "sigma": [[0.2]], "T": 10.0},
        "utility": {"gamma": -2.0},
        "weighting": {"kind": "phi", "lambda": 1.0, "nu": 0.0},
    }


def beta_config(**solver):
    base = {"time_steps": 4000, "search_time_steps": 2000, "eta_grid": 61}
    base.update(solver)
    return {
        "market": {"r": 0.0, "mu": [0.05], "sigma": [[0.2]], "T": 10.0},
        "utility": {"gamma": -2.0},
        "weighting": {"kind": "phi", "lambda": 1.0, "beta": 0.125},
        "solver": base,
    }


def test_classify_autonomous_unique(client):
    resp = client.post("/classify", json={"config": merton_config()})
    assert resp.status_code == 200
    body = resp.json()
    assert body["case"] == "nonzero-unique"
    assert body["label"] == "v"
    assert body["strategy"]["pi"][0][0] == pytest.approx(0.0416667 * 10, rel=1e-5)
    assert body["diagnostics"]["theta"] == pytest.approx(0.25, rel=1e-12)


def test_classify_family(client):
    resp = client.post("/classify", json={"config": beta_config()})
    assert resp.status_code == 200
    body = resp.json()
    assert body["case"] == "family"
    assert body["label"] == "b-family"
    assert body["eta_star"] == pytest.approx(0.01736, rel=2e-2)
    assert body["strategy"] is None


def test_solve_maximal_round_trips_through_verify(client):
    resp = client.post("/solve", json={"config": beta_config(), "maximal": True})
    assert resp.status_code == 200
    body = resp.json()
    assert body["strategy"]["pi"][0][0] == pytest.approx(0.208333, abs=1e-3)
    assert body["terminal"] <= 1e-7
    ver = client.post("/verify", json={"config": beta_config(check_points=25),
                                       "strategy": body["strategy"]})
    assert ver.status_code == 200
    assert ver.json()["passed"] is True


def test_solve_specific_eta(client):
    resp = client.post("/solve", json={"config": beta_config(), "eta": 0.01})
    assert resp.status_code == 200
    body = resp.json()
    assert body["eta"] == 0.01
    assert body["value0"] < 0
    assert len(body["strategy"]["t"]) == len(body["strategy"]["pi"])
    assert body["strategy"]["y"][0] <= 0.01


def test_solve_family_needs_eta_choice(client):
    resp = client.post("/solve", json={"config": beta_config()})
    assert resp.status_code == 400
    assert "maximal" in resp.json()["detail"]


def test_solve_rejects_both_options(client):
    resp = client.post("/solve", json={"config": beta_config(),
                                       "eta": 0.01, "maximal": True})
    assert resp.status_code == 400


def test_eta_star_reports_ladder_and_bisect(client):
    resp = client.post("/eta-star", json={"config": beta_config()})
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["ladder"]) == len(body["y0_values"]) == 7
    assert body["eta_star"] == pytest.approx(body["y0_values"][-1], rel=1e-12)
    assert body["bisect"] == pytest.approx(body["eta_star"], rel=1e-4)
    assert body["converged"] is False
    assert body["decay_exponent"] == pytest.approx(0.5, abs=0.01)


def test_eta_star_rejected_on_autonomous(client):
    resp = client.post("/eta-star", json={"config": merton_config()})
    assert resp.status_code == 400


def test_optimize_family(client):
    resp = client.post("/optimize", json={"config": beta_config()})
    assert resp.status_code == 200
    body = resp.json()
    # beta = theta/2 is uniformly optimal: the search lands on the true
    # maximal eta, below the ladder's regularized estimate
    assert body["eta_opt"] == pytest.approx((0.125 / 3.0) ** 2 * 10.0, rel=1e-3)
    assert 0.0 < body["eta_opt"] <= body["eta_star"]
    assert len(body["curve_eta"]) == len(body["curve_j"]) == 61
    assert body["pi0"][0] == pytest.approx(0.208333, abs=1e-3)
    assert body["j_opt"] >= max(body["curve_j"]) - 1e-10


def test_config_error_maps_to_400(client):
    cfg = merton_config()
    cfg["utility"]["gamma"] = 2.0
    resp = client.post("/classify", json={"config": cfg})
    assert resp.status_code == 400
    assert "gamma" in resp.json()["detail"]


def test_body_schema_violation_maps_to_422_list(client):
    cfg = merton_config()
    cfg["market"]["mu"] = "not a vector"
    resp = client.post("/classify", json={"config": cfg})
    assert resp.status_code == 422
    assert isinstance(resp.json()["detail"], list)


def test_numerics_error_maps_to_422_string(client):
    cfg = beta_config()
    cfg["weighting"]["beta"] = -0.1
    resp = client.post("/solve", json={"config": cfg, "eta": 1e-6})
    assert resp.status_code == 422
    assert isinstance(resp.json()["detail"], str)
    assert "bracket" in resp.json()["detail"]


def test_verify_strategy_must_match_market(client):
    strategy = {"t": [0.0], "pi": [[0.1, 0.2]], "T": 10.0}
    resp = client.post("/verify", json={"config": merton_config(),
                                        "strategy": strategy})
    assert resp.status_code == 400
    assert "assets" in resp.json()["detail"]


def test_verify_horizon_mismatch(client):
    strategy = {"t": [0.0], "pi": [[0.1]], "T": 5.0}
    resp = client.post("/verify", json={"config": merton_config(),
                                        "strategy": strategy})
    assert resp.status_code == 400


def test_verify_failing_strategy_reports_records(client):
    strategy = {"t": [0.0], "pi": [[0.6]], "T": 10.0}
    cfg = merton_config()
    cfg["solver"] = {"check_points": 10}
    resp = client.post("/verify", json={"config": cfg, "strategy": strategy})
    assert resp.status_code == 200
    body = resp.json()
    assert body["passed"] is False
    assert body["failures"]
    first = body["failures"][0]
    assert first["slope"] > 0
    assert len(first["kappa"]) == 1
