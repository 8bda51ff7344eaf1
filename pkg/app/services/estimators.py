"""
Equivariant estimators of the Fréchet mean.

* closed-form minimum risk equivariant estimators (vMF, hyperbolic, Langevin);
* the Monte Carlo MRE: draw g from the Haar-prior posterior over the group,
  push the canonical population mean through every draw, average;
* orbit estimators (MLE, Wishart method of moments) and the adaptive MRE
  that plugs an estimated orbit into the Monte Carlo MRE.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import ive

from app.core.config import settings
from app.core.errors import (
    ChainError,
    ConfigError,
    DimensionMismatch,
    InvalidInputError,
    UndefinedEstimate,
    UnsupportedDimension,
)
from app.models.params import (
    HyperbolicOrbit,
    LangevinOrbit,
    OrbitLabel,
    TorusModelParams,
    TorusOrbit,
    VmfOrbit,
    WishartOrbit,
)
from app.models.points import (
    HyperboloidPoint,
    ManifoldPoint,
    SpdMatrix,
    StiefelFrame,
    TorusPoint,
    UnitVector,
    minkowski,
)
from app.models.results import McmcConfig, MomSolution, MreDiagnostics, ProposalSpec, RandomWalk, TorusFit
from app.services.distributions import (
    bartlett_factors,
    lambda_matrix,
    torus_log_density_angles,
    torus_log_normalizer,
)
from app.services.frechet import circle_frechet_mean, frechet_mean_array
from app.services.manifolds import (
    Metric,
    from_angles,
    logm_spd,
    lorentz_from_apex,
    make_point,
    resolve_metric,
    stack_points,
    to_angles,
)
from app.services.mcmc import (
    GaussianRandomWalk,
    HaarIndependence,
    LorentzRandomWalk,
    OrthogonalRandomWalk,
    ProductProposal,
    Proposal,
    effective_sample_size,
    gibbs_torus_posterior,
    metropolis_hastings,
)

logger = logging.getLogger(__name__)

ORBIT_MANIFOLD = {
    "vmf": "sphere",
    "hyperbolic": "hyperboloid",
    "langevin": "stiefel",
    "wishart": "spd",
    "torus": "torus",
}

OrbitEstimator = Union[str, Callable[[Sequence[ManifoldPoint]], Any], VmfOrbit, HyperbolicOrbit, LangevinOrbit, WishartOrbit, TorusOrbit]


def _stack(data: Sequence[ManifoldPoint], expected: str) -> Tuple[np.ndarray, Optional[float]]:
    kind, xs, radius = stack_points(data)
    if kind != expected:
        raise DimensionMismatch(f"expected {expected} data, got {kind}")
    return xs, radius


# ---------------------------------------------------------------------------
# Closed-form MREs
# ---------------------------------------------------------------------------


def mre_vmf_closed_form(
    data: Sequence[UnitVector], loss: Union[Metric, str] = Metric.GEODESIC
) -> UnitVector:
    """Sₙ/‖Sₙ‖ under either the geodesic or the extrinsic loss."""
    xs, _ = _stack(data, "sphere")
    s = xs.sum(axis=0)
    if np.linalg.norm(s) < 1e-12:
        raise UndefinedEstimate("the resultant of the data vanishes; the MRE is undefined")
    if resolve_metric("sphere", loss) is Metric.EXTRINSIC:
        mean, _, _, _ = frechet_mean_array("sphere", xs, Metric.EXTRINSIC)
        return UnitVector.normalized(mean)
    return UnitVector.normalized(s)


def mre_hyperbolic_closed_form(
    data: Sequence[HyperboloidPoint], radius: Optional[float] = None
) -> HyperboloidPoint:
    """R·Sₙ/√(-(Sₙ, Sₙ))."""
    xs, r = _stack(data, "hyperboloid")
    if radius is not None and abs(radius - r) > 1e-12 * r:
        raise DimensionMismatch(f"data radius {r} differs from requested radius {radius}")
    s = xs.sum(axis=0)
    q = -minkowski(s, s)
    if not q > 0:
        raise UndefinedEstimate(f"-(S, S) = {q!r} is not positive")
    return HyperboloidPoint.project(r * s / np.sqrt(q), r)


def mre_langevin_single_obs(data: Union[StiefelFrame, Sequence[StiefelFrame]]) -> StiefelFrame:
    if isinstance(data, StiefelFrame):
        return data
    if len(data) != 1:
        raise InvalidInputError(f"the closed-form Langevin MRE needs exactly one observation, got {len(data)}")
    return data[0]


# ---------------------------------------------------------------------------
# Posterior problems over the isometry group
# ---------------------------------------------------------------------------


def _orthogonal_proposal(p: int, spec: ProposalSpec) -> Proposal:
    if isinstance(spec, RandomWalk):
        return OrthogonalRandomWalk(p, spec.scale)
    return HaarIndependence(p)


def _reflector(target: np.ndarray) -> np.ndarray:
    """Householder reflection with first column ``target``."""
    e = np.zeros(target.size)
    e[0] = 1.0
    v = e - target
    nv = v @ v
    if nv < 1e-24:
        return np.eye(target.size)
    return np.eye(target.size) - 2.0 * np.outer(v, v) / nv


class _OrbitProblem(ABC):
    """Likelihood g ↦ pₙ(x | gθ₀) on the group and the push-forward of E P_θ₀."""

    kind: str
    radius: Optional[float] = None

    @abstractmethod
    def canonical_mean(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def log_likelihood(self, g: Any) -> float:
        ...

    @abstractmethod
    def proposal(self, spec: ProposalSpec) -> Proposal:
        ...

    @abstractmethod
    def initial(self) -> Any:
        ...

    @abstractmethod
    def push(self, g: Any, mean0: np.ndarray) -> np.ndarray:
        ...


class _VmfProblem(_OrbitProblem):
    kind = "sphere"

    def __init__(self, xs: np.ndarray, orbit: VmfOrbit):
        self.d = xs.shape[1]
        self.kappa = orbit.kappa
        self.resultant = xs.sum(axis=0)

    def canonical_mean(self, rng: np.random.Generator) -> np.ndarray:
        return np.eye(self.d)[0]

    def log_likelihood(self, g: np.ndarray) -> float:
        return float(self.kappa * (self.resultant @ g[:, 0]))

    def proposal(self, spec: ProposalSpec) -> Proposal:
        return _orthogonal_proposal(self.d, spec)

    def initial(self) -> np.ndarray:
        norm = np.linalg.norm(self.resultant)
        return _reflector(self.resultant / norm) if norm > 1e-12 else np.eye(self.d)

    def push(self, g: np.ndarray, mean0: np.ndarray) -> np.ndarray:
        return g @ mean0


class _HyperbolicProblem(_OrbitProblem):
    kind = "hyperboloid"

    def __init__(self, xs: np.ndarray, radius: float, orbit: HyperbolicOrbit):
        if abs(orbit.radius - radius) > 1e-12 * radius:
            raise DimensionMismatch(f"orbit radius {orbit.radius} differs from data radius {radius}")
        self.radius = radius
        self.k = xs.shape[1] - 1
        self.kappa = orbit.kappa
        self.xs = xs
        self.resultant = xs.sum(axis=0)

    def canonical_mean(self, rng: np.random.Generator) -> np.ndarray:
        apex = np.zeros(self.k + 1)
        apex[-1] = self.radius
        return apex

    def log_likelihood(self, g: np.ndarray) -> float:
        mu = self.radius * g[:, -1]
        return float(self.kappa * minkowski(self.resultant, mu) / self.radius ** 2)

    def proposal(self, spec: ProposalSpec) -> Proposal:
        if isinstance(spec, RandomWalk):
            return LorentzRandomWalk(self.k, spec.scale)
        logger.info("SO+(k,1) is not compact; using Lorentz random-walk proposals instead of Haar draws")
        return LorentzRandomWalk(self.k, settings.RANDOM_WALK_SCALE)

    def initial(self) -> np.ndarray:
        s = self.resultant
        start = self.radius * s / np.sqrt(-minkowski(s, s))
        return lorentz_from_apex(start, self.radius)

    def push(self, g: np.ndarray, mean0: np.ndarray) -> np.ndarray:
        return g @ mean0


class _LangevinProblem(_OrbitProblem):
    kind = "stiefel"

    def __init__(self, xs: np.ndarray, orbit: LangevinOrbit):
        self.p, self.k = xs.shape[1:]
        self.lam = orbit.lam
        self.resultant = xs.sum(axis=0)

    def canonical_mean(self, rng: np.random.Generator) -> np.ndarray:
        return np.eye(self.p, self.k)

    def log_likelihood(self, g: Tuple[np.ndarray, np.ndarray]) -> float:
        u, v = g
        return float(self.lam * np.sum(self.resultant * (u[:, : self.k] @ v.T)))

    def proposal(self, spec: ProposalSpec) -> Proposal:
        return ProductProposal([_orthogonal_proposal(self.p, spec), _orthogonal_proposal(self.k, spec)])

    def initial(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.eye(self.p), np.eye(self.k)

    def push(self, g: Tuple[np.ndarray, np.ndarray], mean0: np.ndarray) -> np.ndarray:
        u, v = g
        return u @ mean0 @ v.T


class _WishartProblem(_OrbitProblem):
    """
    O(p) acting by X ↦ UXUᵀ, optionally extended by positive scalings
    X ↦ cUXUᵀ (state (U, log c)). The scale group is what makes p = 1
    non-trivial: O(1) fixes every 1×1 matrix.
    """

    kind = "spd"

    def __init__(self, xs: np.ndarray, orbit: WishartOrbit, scaling: bool, population_draws: Optional[int]):
        self.m, self.p = xs.shape[0], xs.shape[1]
        if orbit.eigenvalues.size != self.p:
            raise DimensionMismatch(f"orbit has {orbit.eigenvalues.size} eigenvalues for {self.p}×{self.p} data")
        self.eigenvalues = orbit.eigenvalues
        self.dof = orbit.dof
        self.scaling = scaling
        self.population_draws = population_draws
        self.total = xs.sum(axis=0)

    def _split(self, g: Any) -> Tuple[np.ndarray, float]:
        return g if self.scaling else (g, 0.0)

    def canonical_mean(self, rng: np.random.Generator) -> np.ndarray:
        mean = wishart_population_mean(self.eigenvalues, self.dof, rng, draws=self.population_draws)
        return self.dof * mean.entries

    def log_likelihood(self, g: Any) -> float:
        u, log_c = self._split(g)
        quad = np.sum((u / self.eigenvalues) * (self.total @ u))
        return float(-np.exp(-log_c) * quad / 2.0 - self.m * self.dof * self.p * log_c / 2.0)

    def proposal(self, spec: ProposalSpec) -> Proposal:
        base = _orthogonal_proposal(self.p, spec)
        if not self.scaling:
            return base
        scale = spec.scale if isinstance(spec, RandomWalk) else settings.RANDOM_WALK_SCALE
        return ProductProposal([base, GaussianRandomWalk(scale)])

    def initial(self) -> Any:
        if not self.scaling:
            return np.eye(self.p)
        c = np.trace(self.total / self.eigenvalues) / (self.m * self.dof * self.p)
        return np.eye(self.p), float(np.log(c))

    def push(self, g: Any, mean0: np.ndarray) -> np.ndarray:
        u, log_c = self._split(g)
        return np.exp(log_c) * (u @ mean0 @ u.T)


def _problem_for(
    kind: str,
    xs: np.ndarray,
    radius: Optional[float],
    orbit: OrbitLabel,
    scaling: bool,
    population_draws: Optional[int],
) -> _OrbitProblem:
    if ORBIT_MANIFOLD[orbit.kind] != kind:
        raise DimensionMismatch(f"{orbit.kind} orbit does not match {kind} data")
    if isinstance(orbit, VmfOrbit):
        return _VmfProblem(xs, orbit)
    if isinstance(orbit, HyperbolicOrbit):
        return _HyperbolicProblem(xs, radius, orbit)
    if isinstance(orbit, LangevinOrbit):
        return _LangevinProblem(xs, orbit)
    return _WishartProblem(xs, orbit, scaling, population_draws)


def mre_monte_carlo(
    data: Sequence[ManifoldPoint],
    orbit: OrbitLabel,
    cfg: Optional[McmcConfig] = None,
    rng: Optional[np.random.Generator] = None,
    scaling: bool = False,
    population_draws: Optional[int] = None,
) -> Tuple[ManifoldPoint, MreDiagnostics]:
    """
    Monte Carlo MRE on the orbit of θ₀.

    1. E P_θ₀ at the canonical representative (closed form, or Monte Carlo
       for Wishart);
    2. Metropolis-Hastings over the group targeting pₙ(x | gθ₀) w.r.t. Haar;
    3. push E P_θ₀ through each retained g;
    4. sample Fréchet mean of the pushed points.

    The torus model draws μ directly from its posterior by Gibbs sampling
    (E P = μ there), which is the parameter-space form of steps 2 and 3.
    """
    cfg = cfg or McmcConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if len(data) == 0:
        raise InvalidInputError("mre_monte_carlo needs at least one observation")
    kind, xs, radius = stack_points(data)

    if isinstance(orbit, TorusOrbit):
        if kind != "torus":
            raise DimensionMismatch(f"torus orbit does not match {kind} data")
        trace = gibbs_torus_posterior(to_angles(xs), orbit, cfg, rng)
        pushed = from_angles(np.array(trace.states))
    else:
        problem = _problem_for(kind, xs, radius, orbit, scaling, population_draws)
        mean0 = problem.canonical_mean(rng)
        trace = metropolis_hastings(
            problem.log_likelihood,
            problem.proposal(cfg.proposal),
            problem.initial(),
            cfg,
            rng,
            label=f"mre-{orbit.kind}",
        )
        if not np.any(trace.accepted):
            raise ChainError(
                "no proposal was accepted over the whole chain",
                {"orbit": orbit.kind, "iterations": cfg.iterations, "log_target": float(trace.log_targets[-1])},
            )
        pushed = np.stack([problem.push(g, mean0) for g in trace.states])

    mean, _, converged, _ = frechet_mean_array(kind, pushed, radius=radius)
    post_burn = trace.log_targets[cfg.burn_in :]
    ess = effective_sample_size(post_burn) if post_burn.size >= 10 else None
    diagnostics = MreDiagnostics(
        acceptance_rate=trace.acceptance_rate,
        chain_length=len(trace.states),
        frechet_converged=converged,
        effective_sample_size=ess,
    )
    return make_point(kind, mean, radius), diagnostics


# ---------------------------------------------------------------------------
# Wishart: log-Euclidean population mean, MLE and method of moments
# ---------------------------------------------------------------------------


def standard_wishart_factors(p: int, dof: int, draws: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of W = AAᵀ/n, A Bartlett; D^{1/2} W D^{1/2} ~ Y/n for Y ~ Wishart_p(n, D)."""
    a = bartlett_factors(p, dof, draws, rng)
    return a @ np.swapaxes(a, -1, -2) / dof


def wishart_log_mean_diagonal(eigenvalues: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """
    Diagonal of E log(Y/n) for Y ~ Wishart(n, diag(eigenvalues)).

    The off-diagonal part vanishes in expectation (W and SWS agree in law for
    every sign matrix S), so only the diagonal of the average is kept.
    """
    root = np.sqrt(np.asarray(eigenvalues, dtype=float))
    logs = logm_spd(root[:, None] * factors * root[None, :])
    return np.diagonal(logs, axis1=-2, axis2=-1).mean(axis=0)


def wishart_population_mean(
    eigenvalues: Any,
    dof: int,
    rng: np.random.Generator,
    draws: Optional[int] = None,
    factors: Optional[np.ndarray] = None,
) -> SpdMatrix:
    """Log-Euclidean mean of Y/n, Y ~ Wishart_p(n, diag(eigenvalues)), in the given eigenvalue order."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if factors is None:
        draws = draws or settings.POPULATION_MEAN_DRAWS
        factors = standard_wishart_factors(eigenvalues.size, dof, draws, rng)
    return SpdMatrix(entries=np.diag(np.exp(wishart_log_mean_diagonal(eigenvalues, factors))))


def _pooled(data: Union[SpdMatrix, Sequence[SpdMatrix]], dof: int) -> Tuple[np.ndarray, int]:
    """Σ Xᵢ ~ Wishart(m·n, Σ) for m observations of Wishart(n, Σ)."""
    if isinstance(data, SpdMatrix):
        return data.entries, dof
    xs, _ = _stack(data, "spd")
    if dof < xs.shape[1]:
        raise InvalidInputError(f"degrees of freedom {dof} below dimension {xs.shape[1]}")
    return xs.sum(axis=0), dof * xs.shape[0]


def wishart_mle_frechet(
    x: Union[SpdMatrix, Sequence[SpdMatrix]],
    dof: int,
    rng: np.random.Generator,
    n_mc: Optional[int] = None,
) -> SpdMatrix:
    """Plug-in MLE of the Fréchet mean: E_LE(Y/n), Y ~ Wishart(n, X/n)."""
    total, n = _pooled(x, dof)
    p = total.shape[0]
    if n < p:
        raise InvalidInputError(f"degrees of freedom {n} below dimension {p}")
    w, q = np.linalg.eigh(total / n)
    factors = standard_wishart_factors(p, n, n_mc or settings.INNER_MC_DRAWS, rng)
    ell = wishart_log_mean_diagonal(w, factors)
    return SpdMatrix.symmetrized((q * np.exp(ell)) @ q.T)


def _finite_difference_jacobian(
    fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, fz: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    jac = np.empty((fz.size, z.size))
    for j in range(z.size):
        step = np.zeros_like(z)
        step[j] = h
        jac[:, j] = (fn(z + step) - fz) / h
    return jac


def solve_wishart_mom(
    x: Union[SpdMatrix, Sequence[SpdMatrix]],
    dof: int,
    rng: np.random.Generator,
    n_mc: Optional[int] = None,
    max_iters: Optional[int] = None,
    damping: Optional[float] = None,
    tol: Optional[float] = None,
) -> MomSolution:
    """
    Solve X/n = E_LE(Y/n), Y ~ Wishart(n, Σ), for the eigenvalues of Σ.

    Common random numbers make the moment map deterministic. Damped fixed
    point in log-eigenvalue space, with a finite-difference Newton step when
    the fixed-point step stops reducing the residual.

    ``converged`` means residual <= 0.05·max(‖log(X/n)‖_F, MOM_TARGET_FLOOR);
    X = nI has a zero target, so the threshold never drops below 0.05·floor.
    """
    total, n = _pooled(x, dof)
    p = total.shape[0]
    if n < p:
        raise InvalidInputError(f"degrees of freedom {n} below dimension {p}")
    max_iters = max_iters or settings.MOM_MAX_ITERS
    damping = damping or settings.MOM_DAMPING
    tol = tol or settings.MOM_TOL

    target = np.sort(np.log(np.linalg.eigvalsh(total / n)))[::-1]
    factors = standard_wishart_factors(p, n, n_mc or settings.INNER_MC_DRAWS, rng)

    def residual(z: np.ndarray) -> np.ndarray:
        return np.sort(wishart_log_mean_diagonal(np.exp(z), factors))[::-1] - target

    z = target.copy()
    r = residual(z)
    norm = float(np.linalg.norm(r))
    iterations = 0
    while iterations < max_iters and norm >= tol:
        iterations += 1
        candidate = z - damping * r
        r_new = residual(candidate)
        if np.linalg.norm(r_new) >= norm:
            jac = _finite_difference_jacobian(residual, z, r)
            try:
                candidate = z - np.linalg.solve(jac, r)
            except np.linalg.LinAlgError:
                logger.warning("singular moment-map Jacobian; stopping the MoM solver")
                break
            r_new = residual(candidate)
            if np.linalg.norm(r_new) >= norm:
                break
        z, r, norm = candidate, r_new, float(np.linalg.norm(r_new))

    threshold = 0.05 * max(float(np.linalg.norm(target)), settings.MOM_TARGET_FLOOR)
    converged = norm <= threshold
    if converged:
        logger.info(f"MoM orbit solved in {iterations} iterations, residual {norm:.3g}")
    else:
        logger.warning(f"MoM orbit residual {norm:.3g} above {threshold:.3g} after {iterations} iterations")
    return MomSolution(
        orbit=WishartOrbit.from_eigenvalues(np.exp(z), dof),
        residual=norm,
        converged=converged,
        iterations=iterations,
    )


def wishart_mom_orbit(
    x: Union[SpdMatrix, Sequence[SpdMatrix]],
    dof: int,
    rng: np.random.Generator,
    n_mc: Optional[int] = None,
) -> WishartOrbit:
    return solve_wishart_mom(x, dof, rng, n_mc=n_mc).orbit


# ---------------------------------------------------------------------------
# Torus model: profile-likelihood MLE
# ---------------------------------------------------------------------------


def _resultant_angles(x: np.ndarray) -> np.ndarray:
    return np.mod(np.arctan2(np.sin(x).sum(axis=0), np.cos(x).sum(axis=0)), 2 * np.pi)


def _torus_mu_given_shape(
    x: np.ndarray, kappa: np.ndarray, lam_mat: np.ndarray, starts: List[np.ndarray]
) -> Tuple[np.ndarray, float]:
    """argmax over μ of the unnormalised log-likelihood, by BFGS with analytic gradient."""

    def negative(mu: np.ndarray) -> Tuple[float, np.ndarray]:
        d = x - mu
        s, c = np.sin(d), np.cos(d)
        value = np.sum(c @ kappa) + 0.5 * np.einsum("ni,ij,nj->", s, lam_mat, s)
        grad = np.sum(kappa * s - c * (s @ lam_mat), axis=0)
        return -float(value), -grad

    best_mu, best_value = None, -np.inf
    for start in starts:
        res = minimize(negative, start, jac=True, method="BFGS", options={"gtol": 1e-9})
        if -res.fun > best_value:
            best_mu, best_value = res.x, -float(res.fun)
    return np.mod(best_mu, 2 * np.pi), best_value


def vmf_kappa_mle(xs: np.ndarray) -> float:
    """Solve A_d(κ) = R̄ with A_d = I_{d/2}/I_{d/2-1}, bracketing log κ ∈ [-20, 20]."""
    xs = np.asarray(xs, dtype=float)
    d = xs.shape[1]
    rbar = float(np.linalg.norm(xs.mean(axis=0)))

    def gap(t: float) -> float:
        k = np.exp(t)
        return float(ive(d / 2.0, k) / ive(d / 2.0 - 1.0, k)) - rbar

    lo, hi = -20.0, 20.0
    if gap(lo) >= 0:
        return float(np.exp(lo))
    if gap(hi) <= 0:
        return float(np.exp(hi))
    return float(np.exp(brentq(gap, lo, hi, xtol=1e-12)))


def fit_torus_mle(data: Union[Sequence[TorusPoint], np.ndarray], m: Optional[int] = None) -> TorusFit:
    """
    Profile-likelihood MLE of (μ, κ, Λ).

    Inner step: μ̂(κ, Λ) by BFGS from the per-component circle
    means and resultant directions. Outer step: Nelder-Mead over (log κ, Λ)
    on the profile log-likelihood with the quadrature normaliser.
    """
    if isinstance(data, np.ndarray):
        x = np.mod(data, 2 * np.pi)
    else:
        xs, _ = _stack(data, "torus")
        x = to_angles(xs)
    n, p = x.shape
    if n < 2:
        raise InvalidInputError("torus MLE needs at least two observations")
    if p > settings.TORUS_MAX_DIM:
        raise UnsupportedDimension(f"torus MLE supports p <= {settings.TORUS_MAX_DIM}, got {p}")

    starts = [np.array([circle_frechet_mean(x[:, i]) for i in range(p)]), _resultant_angles(x)]
    kappa0 = np.array([vmf_kappa_mle(from_angles(x[:, i])) for i in range(p)])
    pairs = p * (p - 1) // 2
    z0 = np.concatenate([np.log(kappa0), np.zeros(pairs)])

    def profile(z: np.ndarray) -> Tuple[float, np.ndarray]:
        kappa = np.exp(np.clip(z[:p], -8.0, 8.0))
        lam = z[p:]
        mu, value = _torus_mu_given_shape(x, kappa, lambda_matrix(lam, p), starts)
        return value - n * torus_log_normalizer(kappa, lam, p, m), mu

    def objective(z: np.ndarray) -> float:
        return -profile(z)[0] / n

    simplex = np.vstack([z0, z0 + 0.5 * np.eye(z0.size)])
    res = minimize(
        objective,
        z0,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-4, "fatol": 1e-9, "maxiter": 400 * z0.size},
    )
    log_likelihood, mu = profile(res.x)
    if not res.success:
        logger.warning(f"torus profile likelihood did not converge: {res.message}")
    params = TorusModelParams(
        mu=TorusPoint.from_angles(mu),
        kappa=np.exp(np.clip(res.x[:p], -8.0, 8.0)),
        lam=res.x[p:],
    )
    logger.debug(f"torus MLE: kappa={params.kappa.round(4).tolist()} lambda={params.lam.round(4).tolist()}")
    return TorusFit(params=params, log_likelihood=float(log_likelihood), converged=bool(res.success))


def torus_mle(data: Union[Sequence[TorusPoint], np.ndarray], m: Optional[int] = None) -> TorusModelParams:
    return fit_torus_mle(data, m).params


def torus_profile_log_likelihood(
    data: Union[Sequence[TorusPoint], np.ndarray], params: TorusModelParams, m: Optional[int] = None
) -> float:
    """Normalised log-likelihood of ``data`` at ``params``."""
    x = np.mod(data, 2 * np.pi) if isinstance(data, np.ndarray) else to_angles(_stack(data, "torus")[0])
    lam_mat = lambda_matrix(params.lam, params.p)
    value = float(np.sum(torus_log_density_angles(x, params.mu.angles, params.kappa, lam_mat)))
    return value - x.shape[0] * torus_log_normalizer(params.kappa, params.lam, params.p, m)


# ---------------------------------------------------------------------------
# Orbit estimators and the adaptive MRE
# ---------------------------------------------------------------------------


def estimate_orbit(
    data: Sequence[ManifoldPoint],
    method: str,
    rng: np.random.Generator,
    dof: Optional[int] = None,
    n_mc: Optional[int] = None,
) -> OrbitLabel:
    """Invariant orbit estimate: ``"mle"`` (any family with an MLE here) or ``"mom"`` (Wishart)."""
    kind, xs, _ = stack_points(data)
    if kind == "spd" and dof is None:
        raise ConfigError("Wishart orbit estimation needs the degrees of freedom")
    if method == "mle":
        if kind == "sphere":
            return VmfOrbit(kappa=vmf_kappa_mle(xs))
        if kind == "spd":
            total, n = _pooled(data, dof)
            return WishartOrbit.from_eigenvalues(np.linalg.eigvalsh(total / n), dof)
        if kind == "torus":
            fit = fit_torus_mle(data)
            return TorusOrbit(kappa=fit.params.kappa, lam=fit.params.lam)
        raise ConfigError(f"no MLE orbit estimator for {kind} data; supply the orbit explicitly")
    if method == "mom":
        if kind != "spd":
            raise ConfigError("the method-of-moments orbit is only defined for Wishart data")
        return wishart_mom_orbit(data, dof, rng, n_mc=n_mc)
    raise ConfigError(f"unknown orbit estimator {method!r}")


def adaptive_mre(
    data: Sequence[ManifoldPoint],
    orbit_estimator: OrbitEstimator = "mle",
    cfg: Optional[McmcConfig] = None,
    rng: Optional[np.random.Generator] = None,
    dof: Optional[int] = None,
    scaling: bool = False,
    n_mc: Optional[int] = None,
    population_draws: Optional[int] = None,
) -> Tuple[ManifoldPoint, OrbitLabel, MreDiagnostics]:
    """Estimate the orbit invariantly, then run the Monte Carlo MRE on it."""
    cfg = cfg or McmcConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if isinstance(orbit_estimator, (VmfOrbit, HyperbolicOrbit, LangevinOrbit, WishartOrbit, TorusOrbit)):
        orbit = orbit_estimator
    elif isinstance(orbit_estimator, str):
        orbit = estimate_orbit(data, orbit_estimator, rng, dof=dof, n_mc=n_mc)
    elif callable(orbit_estimator):
        orbit = orbit_estimator(data)
    else:
        raise ConfigError(f"unsupported orbit estimator {orbit_estimator!r}")
    estimate, diagnostics = mre_monte_carlo(
        data, orbit, cfg, rng, scaling=scaling, population_draws=population_draws
    )
    return estimate, orbit, diagnostics
