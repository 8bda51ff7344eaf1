import numpy as np
import pytest
from scipy import special, stats

from app.core.config import settings
from app.core.errors import ChainError, InvalidInputError
from app.models.params import TorusModelParams, TorusOrbit
from app.models.points import UnitVector
from app.models.results import McmcConfig, RandomWalk
from app.services.distributions import lambda_matrix, sample, torus_log_density_angles
from app.services.frechet import circle_frechet_mean
from app.services.mcmc import (
    GaussianRandomWalk,
    HaarIndependence,
    OrthogonalRandomWalk,
    Proposal,
    effective_sample_size,
    gibbs_torus_posterior,
    metropolis_hastings,
)


def _trace_u(kappa):
    return lambda u: kappa * float(np.trace(u))


def _expected_trace(kappa):
    # SO(2) carries mass I₀(2κ), the reflections mass 1 (their trace is 0)
    return 2 * special.i1(2 * kappa) / (special.i0(2 * kappa) + 1.0)


def _check_o2_chain(proposal, rng):
    kappa = 1.0
    cfg = McmcConfig(iterations=20_000, burn_in=1000, seed=1)
    trace = metropolis_hastings(_trace_u(kappa), proposal, np.eye(2), cfg, rng)
    traces = np.array([np.trace(u) for u in trace.states])
    se = traces.std(ddof=1) / np.sqrt(effective_sample_size(traces))
    assert abs(traces.mean() - _expected_trace(kappa)) < 4 * se
    reflections = np.mean([np.linalg.det(u) < 0 for u in trace.states])
    assert reflections == pytest.approx(1.0 / (special.i0(2 * kappa) + 1.0), abs=0.03)


def test_haar_independence_targets_exponential_trace(rng):
    _check_o2_chain(HaarIndependence(2), rng)


@pytest.mark.slow
def test_orthogonal_random_walk_targets_exponential_trace(rng):
    _check_o2_chain(OrthogonalRandomWalk(2, 0.8), rng)


def test_orthogonal_random_walk_stays_orthogonal(rng):
    walk = OrthogonalRandomWalk(4, 0.3)
    u = np.eye(4)
    for _ in range(20):
        u = walk.propose(u, rng)
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-10)


def test_chain_bookkeeping(rng):
    cfg = McmcConfig(iterations=100, burn_in=40, thin=7)
    trace = metropolis_hastings(lambda x: -0.5 * x * x, GaussianRandomWalk(1.0), 0.0, cfg, rng)
    assert len(trace.states) == cfg.retained == 9
    assert trace.iterations == 100
    assert trace.log_targets.shape == (100,)
    assert trace.recount_acceptance() == pytest.approx(trace.acceptance_rate)


def test_non_finite_initial_state_raises(rng):
    cfg = McmcConfig(iterations=10, burn_in=0)
    with pytest.raises(ChainError) as excinfo:
        metropolis_hastings(lambda x: -np.inf, GaussianRandomWalk(1.0), 0.5, cfg, rng)
    assert excinfo.value.state["state"] == 0.5
    assert excinfo.value.exit_code == 2


def test_nan_proposals_are_rejected(rng):
    cfg = McmcConfig(iterations=50, burn_in=0)
    target = lambda x: 0.0 if x == 0.0 else float("nan")
    trace = metropolis_hastings(target, GaussianRandomWalk(1.0), 0.0, cfg, rng)
    assert trace.acceptance_rate == 0.0
    assert all(s == 0.0 for s in trace.states)


def test_trace_dump(rng, tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "TRACE_DUMP_DIR", str(tmp_path))
    cfg = McmcConfig(iterations=30, burn_in=10)
    metropolis_hastings(lambda x: -x * x, GaussianRandomWalk(0.5), 0.0, cfg, rng, label="unit")
    dumps = list(tmp_path.glob("unit-*.csv"))
    assert len(dumps) == 1
    lines = dumps[0].read_text().splitlines()
    assert lines[0] == "step,log_target,accepted"
    assert len(lines) == 31


def test_effective_sample_size_edge_cases(rng):
    with pytest.raises(InvalidInputError):
        effective_sample_size([1.0] * 9)
    assert effective_sample_size([3.0] * 50) == 50.0
    white = rng.standard_normal(5000)
    assert 0.7 * 5000 < effective_sample_size(white) <= 5000


def test_effective_sample_size_of_autoregression(rng):
    phi, n = 0.9, 20_000
    x = np.empty(n)
    x[0] = rng.standard_normal()
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.standard_normal()
    expected = n * (1 - phi) / (1 + phi)
    assert 0.6 * expected < effective_sample_size(x) < 1.5 * expected


def test_gibbs_posterior_concentrates_near_the_location(rng):
    theta = TorusModelParams.constant([1.0, 2.0], 2.0, 1.0)
    data = sample(theta, 200, rng)
    orbit = TorusOrbit(kappa=theta.kappa, lam=theta.lam)
    trace = gibbs_torus_posterior(data, orbit, McmcConfig(iterations=300, burn_in=100), rng)
    assert trace.acceptance_rate == 1.0
    states = np.array(trace.states)
    assert states.shape == (200, 2)
    for i, truth in enumerate((1.0, 2.0)):
        centre = circle_frechet_mean(states[:, i])
        assert abs(np.angle(np.exp(1j * (centre - truth)))) < 0.2


def test_gibbs_posterior_input_checks(rng):
    orbit = TorusOrbit(kappa=[1.0, 1.0], lam=[0.0])
    cfg = McmcConfig(iterations=10, burn_in=0)
    with pytest.raises(InvalidInputError):
        gibbs_torus_posterior(np.zeros((5, 3)), orbit, cfg, rng)
    with pytest.raises(InvalidInputError):
        gibbs_torus_posterior([UnitVector(coords=[1.0, 0.0])], orbit, cfg, rng)
    with pytest.raises(InvalidInputError):
        gibbs_torus_posterior(np.zeros((0, 2)), orbit, cfg, rng)


def test_chains_are_reproducible_from_the_seed():
    def run():
        cfg = McmcConfig(iterations=200, burn_in=50)
        return metropolis_hastings(_trace_u(1.0), OrthogonalRandomWalk(3, 0.4), np.eye(3), cfg, np.random.default_rng(11))

    first, second = run(), run()
    np.testing.assert_array_equal(first.log_targets, second.log_targets)
    np.testing.assert_array_equal(first.accepted, second.accepted)
    for a, b in zip(first.states, second.states):
        np.testing.assert_array_equal(a, b)


TWO_STATE_TARGET = np.array([0.25, 0.75])
TWO_STATE_PROPOSAL = np.array([0.8, 0.2])


class _TwoStateIndependence(Proposal):
    """Proposes state 1 with probability 0.2 regardless of the current state."""

    def propose(self, state, rng):
        return int(rng.random() < TWO_STATE_PROPOSAL[1])

    def log_correction(self, current, proposed):
        return float(np.log(TWO_STATE_PROPOSAL[current]) - np.log(TWO_STATE_PROPOSAL[proposed]))


def test_two_state_chain_satisfies_detailed_balance(rng):
    cfg = McmcConfig(iterations=60_000, burn_in=0)
    trace = metropolis_hastings(lambda s: float(np.log(TWO_STATE_TARGET[s])), _TwoStateIndependence(), 0, cfg, rng)
    path = np.r_[0, np.array(trace.states)]
    before, after = path[:-1], path[1:]
    p01 = np.mean(after[before == 0] == 1)
    p10 = np.mean(after[before == 1] == 0)
    # 0 -> 1 is always accepted; 1 -> 0 is proposed w.p. 0.8 and accepted w.p. 1/12
    assert p01 == pytest.approx(0.2, abs=0.02)
    assert p10 == pytest.approx(0.8 / 12, abs=0.01)
    assert TWO_STATE_TARGET[0] * p01 == pytest.approx(TWO_STATE_TARGET[1] * p10, abs=0.01)
    assert np.mean(path) == pytest.approx(0.75, abs=0.02)


def _chi2_pvalue(draws, cell_centres, cell_log_mass, bins):
    """χ² test of angle draws against a density tabulated on equal cells of [0, 2π)."""
    mass = np.exp(cell_log_mass - cell_log_mass.max())
    expected = mass.reshape(bins, -1).sum(axis=1)
    expected *= len(draws) / expected.sum()
    edges = np.linspace(0.0, 2 * np.pi, bins + 1)
    observed, _ = np.histogram(np.mod(draws, 2 * np.pi), bins=edges)
    return stats.chisquare(observed, expected).pvalue


def test_gibbs_draws_match_the_von_mises_posterior(rng):
    x = np.array([[0.3], [1.1], [5.9], [0.8]])
    orbit = TorusOrbit(kappa=[0.7], lam=[])
    trace = gibbs_torus_posterior(x, orbit, McmcConfig(iterations=4000, burn_in=100), rng)
    draws = np.array(trace.states)[:, 0]
    # one angle: every sweep is an exact draw from the posterior, ∝ exp(κ Σ cos(xᵢ - μ))
    cells = (np.arange(1200) + 0.5) * 2 * np.pi / 1200
    log_mass = 0.7 * np.cos(x[:, 0][None, :] - cells[:, None]).sum(axis=1)
    assert _chi2_pvalue(draws, cells, log_mass, bins=12) > 0.01


@pytest.mark.slow
def test_gibbs_marginal_matches_the_grid_posterior(rng):
    x = np.array([[0.4, 2.0], [1.2, 2.9], [5.8, 1.5]])
    orbit = TorusOrbit(kappa=[0.5, 0.5], lam=[0.5])
    cfg = McmcConfig(iterations=20_500, burn_in=500, thin=10)
    draws = np.array(gibbs_torus_posterior(x, orbit, cfg, rng).states)[:, 0]

    cells = (np.arange(360) + 0.5) * 2 * np.pi / 360
    mu = np.stack(np.meshgrid(cells, cells, indexing="ij"), axis=-1)[:, :, None, :]
    log_post = torus_log_density_angles(x, mu, orbit.kappa, lambda_matrix(orbit.lam, 2)).sum(axis=-1)
    log_marginal = special.logsumexp(log_post, axis=1)
    assert _chi2_pvalue(draws, cells, log_marginal, bins=12) > 0.01
