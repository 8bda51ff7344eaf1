import numpy as np
from fastapi.testclient import TestClient

from app.main import app
from app.services import estimators

client = TestClient(app)
API = "/api/v1"


def test_root_and_health():
    body = client.get("/").json()
    assert body["status"] == "online"
    assert "table1_p2_n5" in body["scenarios"]
    assert client.get("/health").json() == {"status": "healthy"}


def test_sample_endpoint():
    response = client.post(f"{API}/sample", json={"family": "vmf", "dim": 2, "kappa": 2.0, "n": 5, "seed": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["family"] == "vmf" and body["seed"] == 3
    coords = np.array([p["coords"] for p in body["points"]])
    np.testing.assert_allclose(np.linalg.norm(coords, axis=1), 1.0, atol=1e-12)


def test_sample_validation_error():
    response = client.post(f"{API}/sample", json={"family": "vmf", "dim": 2, "n": 5})
    assert response.status_code == 422


def test_frechet_mean_endpoint():
    points = [{"manifold": "torus", "components": [1.0, 0.0]}, {"manifold": "torus", "components": [0.0, 1.0]}]
    response = client.post(f"{API}/frechet-mean", json={"points": points})
    assert response.status_code == 200
    mean = response.json()["mean"]
    np.testing.assert_allclose(mean["components"], [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12)


def test_estimate_endpoint_and_errors():
    points = [{"manifold": "sphere", "coords": [1.0, 0.0]}, {"manifold": "sphere", "coords": [0.0, 1.0]}]
    ok = client.post(f"{API}/estimate", json={"estimator": "mre_closed_form", "points": points})
    assert ok.status_code == 200
    np.testing.assert_allclose(ok.json()["estimate"]["coords"], [np.sqrt(0.5), np.sqrt(0.5)])

    missing_orbit = client.post(f"{API}/estimate", json={"estimator": "mre_mc", "points": points})
    assert missing_orbit.status_code == 422
    assert "orbit" in missing_orbit.json()["detail"]

    antipodal = [{"manifold": "sphere", "coords": [1.0, 0.0]}, {"manifold": "sphere", "coords": [-1.0, 0.0]}]
    failed = client.post(f"{API}/estimate", json={"estimator": "frechet", "points": antipodal})
    assert failed.status_code == 500


def test_simulation_lifecycle():
    overrides = {"reps": 1, "mcmc_iters": 60, "inner_draws": 100, "population_draws": 200}
    response = client.post(f"{API}/simulations", json={"scenario": "table1_p2_n5", "overrides": overrides})
    assert response.status_code == 202
    task_id = response.json()["task_id"]
    status = client.get(f"{API}/simulations/{task_id}").json()
    assert status["status"] == "completed"
    assert len(status["rows"]) == 4


def test_simulation_failures_and_unknowns():
    response = client.post(f"{API}/simulations", json={"scenario": "table1_p2_n5", "overrides": {"bogus": 1}})
    task_id = response.json()["task_id"]
    status = client.get(f"{API}/simulations/{task_id}").json()
    assert status["status"] == "failed"
    assert "bogus" in status["detail"]

    assert client.post(f"{API}/simulations", json={"scenario": "nope"}).status_code == 404
    assert client.get(f"{API}/simulations/sim-000000000000").status_code == 404


def test_estimate_population_draws_reach_the_wishart_mean(monkeypatch):
    seen = []
    real = estimators.wishart_population_mean

    def counting(eigenvalues, dof, rng, draws=None, factors=None):
        seen.append(draws)
        return real(eigenvalues, dof, rng, draws=draws, factors=factors)

    monkeypatch.setattr(estimators, "wishart_population_mean", counting)
    body = {
        "estimator": "mre_mc",
        "points": [{"manifold": "spd", "entries": [[2.0, 0.3], [0.3, 1.0]]}],
        "orbit": {"kind": "wishart", "eigenvalues": [2.0, 1.0], "dof": 5},
        "mcmc": {"iterations": 60, "burn_in": 20},
        "inner_draws": 50,
        "population_draws": 300,
    }
    response = client.post(f"{API}/estimate", json=body)
    assert response.status_code == 200
    assert seen == [300]
