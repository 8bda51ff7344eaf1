"""
Metropolis-Hastings and Gibbs drivers plus chain diagnostics.

Chains run on group elements (orthogonal or Lorentz matrices, tuples of
those, log-scales) or on torus angle vectors. Everything is in log space.
"""

import logging
import uuid
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from app.core.config import settings
from app.core.errors import ChainError, InvalidInputError
from app.models.params import TorusOrbit
from app.models.results import ChainState, ChainTrace, McmcConfig
from app.services.distributions import lambda_matrix, torus_log_density_angles
from app.services.frechet import circle_frechet_mean
from app.services.manifolds import (
    haar_orthogonal,
    lorentz_boost,
    stack_points,
    to_angles,
    uniform_on_sphere_batch,
)

logger = logging.getLogger(__name__)


class Proposal(ABC):
    """Markov proposal kernel on some state space."""

    @abstractmethod
    def propose(self, state: Any, rng: np.random.Generator) -> Any:
        ...

    def log_correction(self, current: Any, proposed: Any) -> float:
        """log q(current | proposed) - log q(proposed | current); zero when symmetric."""
        return 0.0


class HaarIndependence(Proposal):
    """Independent Haar draws on O(p); the target density is taken w.r.t. Haar."""

    def __init__(self, p: int):
        self.p = p

    def propose(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return haar_orthogonal(self.p, rng)


class OrthogonalRandomWalk(Proposal):
    """
    U ↦ expm(s·A)·U·F with A a Gaussian skew matrix and F, with probability 1/2,
    the reflection diag(-1, 1, …, 1); the flip lets the walk cross between
    the two components of O(p).
    """

    def __init__(self, p: int, scale: float):
        self.p = p
        self.scale = scale
        self.flip = np.diag(np.r_[-1.0, np.ones(p - 1)])

    def propose(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((self.p, self.p))
        step = expm(self.scale * (z - z.T) / np.sqrt(2.0)) @ state
        if rng.random() < 0.5:
            step = step @ self.flip
        return step


class LorentzRandomWalk(Proposal):
    """Left multiplication by a boost of N(0, s²) rapidity along a uniform direction."""

    def __init__(self, k: int, scale: float):
        self.k = k
        self.scale = scale

    def propose(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        direction = uniform_on_sphere_batch(self.k - 1, 1, rng)[0]
        return lorentz_boost(direction, rng.normal(0.0, self.scale)) @ state


class GaussianRandomWalk(Proposal):
    def __init__(self, scale: float):
        self.scale = scale

    def propose(self, state: float, rng: np.random.Generator) -> float:
        return float(state + rng.normal(0.0, self.scale))


class ProductProposal(Proposal):
    """Componentwise proposal on a tuple state."""

    def __init__(self, parts: Sequence[Proposal]):
        self.parts = list(parts)

    def propose(self, state: Tuple[Any, ...], rng: np.random.Generator) -> Tuple[Any, ...]:
        return tuple(part.propose(s, rng) for part, s in zip(self.parts, state))

    def log_correction(self, current: Tuple[Any, ...], proposed: Tuple[Any, ...]) -> float:
        return float(
            sum(part.log_correction(c, q) for part, c, q in zip(self.parts, current, proposed))
        )


def _dump_trace(log_targets: np.ndarray, accepted: np.ndarray, label: str) -> None:
    directory = Path(settings.TRACE_DUMP_DIR)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{label}-{uuid.uuid4().hex[:8]}.csv"
    table = np.column_stack([np.arange(log_targets.size), log_targets, accepted])
    np.savetxt(path, table, delimiter=",", header="step,log_target,accepted", comments="", fmt=["%d", "%.17g", "%d"])
    logger.debug(f"chain trace written to {path}")


def metropolis_hastings(
    log_target: Callable[[Any], float],
    proposal: Proposal,
    init: Any,
    cfg: McmcConfig,
    rng: np.random.Generator,
    label: str = "mh",
) -> ChainTrace:
    """
    Metropolis-Hastings with acceptance min(1, π(y)/π(x) · q(x|y)/q(y|x)).

    A NaN target at ``init`` aborts with a state dump; NaN at a proposal is
    treated as -inf and the proposal rejected.
    """
    start = float(log_target(init))
    if not np.isfinite(start):
        raise ChainError("log target is not finite at the initial state", {"state": init, "log_target": start})

    state = ChainState(current=init, log_target=start)
    log_targets = np.empty(cfg.iterations)
    accepted = np.zeros(cfg.iterations)
    retained = []
    for i in range(cfg.iterations):
        candidate = proposal.propose(state.current, rng)
        value = float(log_target(candidate))
        if np.isnan(value):
            value = -np.inf
        log_ratio = value - state.log_target + proposal.log_correction(state.current, candidate)
        if np.log(rng.uniform()) < log_ratio:
            state.current = candidate
            state.log_target = value
            state.accepted_count += 1
            accepted[i] = 1.0
        state.step_index = i + 1
        log_targets[i] = state.log_target
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
            retained.append(state.current)

    rate = state.accepted_count / cfg.iterations
    logger.debug(f"{label}: {cfg.iterations} iterations, acceptance rate {rate:.3f}")
    if rate < 0.01:
        logger.warning(f"{label}: low acceptance rate {rate:.4f}")
    if settings.TRACE_DUMP_DIR:
        _dump_trace(log_targets, accepted, label)
    return ChainTrace(
        states=retained,
        log_targets=log_targets,
        accepted=accepted,
        acceptance_rate=rate,
        seed=cfg.seed,
    )


def _torus_data_angles(data: Any) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.mod(data, 2 * np.pi)
    kind, xs, _ = stack_points(data)
    if kind != "torus":
        raise InvalidInputError(f"torus posterior needs torus data, got {kind}")
    return to_angles(xs)


def gibbs_torus_posterior(
    data: Any,
    orbit: TorusOrbit,
    cfg: McmcConfig,
    rng: np.random.Generator,
) -> ChainTrace:
    """
    Gibbs sampler for μ given the data under a flat prior on the torus.

    The log-likelihood is linear in (cos μᵢ, sin μᵢ) given μ₋ᵢ, so every full
    conditional is a von Mises law with natural parameter
    Σ_l [κᵢ(cos x_li, sin x_li) + c_li (sin x_li, -cos x_li)],
    c_li = Σⱼ λᵢⱼ sin(x_lj - μⱼ). ``states`` holds angle vectors.
    """
    x = _torus_data_angles(data)
    if x.shape[0] == 0:
        raise InvalidInputError("torus posterior needs at least one observation")
    p = x.shape[1]
    if orbit.p != p:
        raise InvalidInputError(f"orbit dimension {orbit.p} does not match data dimension {p}")
    kappa = orbit.kappa
    lam_mat = lambda_matrix(orbit.lam, p)
    cos_x, sin_x = np.cos(x), np.sin(x)

    mu = np.array([circle_frechet_mean(x[:, i]) for i in range(p)])
    log_targets = np.empty(cfg.iterations)
    retained = []
    for sweep in range(cfg.iterations):
        for i in range(p):
            c = np.sin(x - mu) @ lam_mat[:, i]
            eta = kappa[i] * np.array([cos_x[:, i].sum(), sin_x[:, i].sum()]) + np.array(
                [c @ sin_x[:, i], -(c @ cos_x[:, i])]
            )
            mu[i] = np.mod(rng.vonmises(np.arctan2(eta[1], eta[0]), np.hypot(*eta)), 2 * np.pi)
        log_targets[sweep] = float(np.sum(torus_log_density_angles(x, mu, kappa, lam_mat)))
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            retained.append(mu.copy())

    accepted = np.ones(cfg.iterations)
    if settings.TRACE_DUMP_DIR:
        _dump_trace(log_targets, accepted, "gibbs-torus")
    return ChainTrace(states=retained, log_targets=log_targets, accepted=accepted, acceptance_rate=1.0, seed=cfg.seed)


def effective_sample_size(trace: Sequence[float]) -> float:
    """
    Initial positive sequence estimator.

    Autocorrelations come from an FFT; pairs ρ₂ₖ + ρ₂ₖ₊₁ are summed while
    positive. A constant trace has ESS = n by convention.
    """
    x = np.asarray(trace, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise InvalidInputError("effective_sample_size needs a trace of length >= 10")
    x = x - x.mean()
    if np.allclose(x, 0.0, atol=1e-300, rtol=0.0) or not np.any(x):
        return float(n)
    spectrum = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=2 * n)[:n] / n
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]

    total = 0.0
    for k in range(n // 2):
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        total += pair
    tau = max(2.0 * total - 1.0, 1.0 / n)
    return float(min(n / tau, n))
