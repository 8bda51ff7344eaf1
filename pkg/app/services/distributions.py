"""
Densities and exact samplers of the five parametric families.

Every sampler takes an explicit ``numpy.random.Generator`` and is a
deterministic function of (parameters, generator state).
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.special import i0e, logsumexp

from app.core.config import settings
from app.core.errors import DimensionMismatch, SamplerError, UnsupportedDimension
from app.models.params import (
    HyperbolicParams,
    LangevinParams,
    ModelParams,
    TorusModelParams,
    VmfParams,
    WishartParams,
    pair_count,
)
from app.models.points import (
    HyperboloidPoint,
    Isometry,
    Lorentz,
    ManifoldPoint,
    Orthogonal,
    SpdConjugation,
    SpdMatrix,
    StiefelFrame,
    StiefelPair,
    TorusElement,
    TorusPoint,
    UnitVector,
    minkowski,
)
from app.services.manifolds import (
    apply_isometry,
    from_angles,
    lorentz_from_apex,
    make_points,
    to_angles,
    uniform_on_sphere_batch,
    uniform_on_stiefel_batch,
)

logger = logging.getLogger(__name__)

# Rotation by +π/2
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _require_dim(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# von Mises-Fisher
# ---------------------------------------------------------------------------


def vmf_log_density(x: UnitVector, theta: VmfParams) -> float:
    """Unnormalised log density κ⟨x, μ⟩."""
    _require_dim(x.coords, theta.mu.coords, "vmf_log_density")
    return float(theta.kappa * (x.coords @ theta.mu.coords))


def vmf_draws(mu: np.ndarray, kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Tangent-normal vMF sampler.

    The cosine w = ⟨x, μ⟩ is drawn by rejection from a transformed Beta
    proposal; the tangent direction is uniform on the sphere orthogonal to μ.
    """
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    dim = d - 1
    b = dim / (np.sqrt(4.0 * kappa ** 2 + dim ** 2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * np.log(1.0 - x0 ** 2)

    cosines = []
    have = 0
    while have < size:
        m = 2 * max(size - have, 16)
        z = rng.beta(dim / 2.0, dim / 2.0, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        keep = kappa * w + dim * np.log(1.0 - x0 * w) - c >= np.log(u)
        cosines.append(w[keep])
        have += int(keep.sum())
    w = np.concatenate(cosines)[:size]

    v = rng.standard_normal((size, d))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = w[:, None] * mu + np.sqrt(np.clip(1.0 - w ** 2, 0.0, None))[:, None] * v
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def vmf_sample(theta: VmfParams, rng: np.random.Generator) -> UnitVector:
    return UnitVector(coords=vmf_draws(theta.mu.coords, theta.kappa, 1, rng)[0])


# ---------------------------------------------------------------------------
# Hyperbolic distribution on the hyperboloid
# ---------------------------------------------------------------------------


def hyperbolic_log_density(x: HyperboloidPoint, theta: HyperbolicParams) -> float:
    """Unnormalised log density κ(x, μ)/R²."""
    _require_dim(x.coords, theta.mu.coords, "hyperbolic_log_density")
    return float(theta.kappa * minkowski(x.coords, theta.mu.coords) / theta.radius ** 2)


def _log_sinh(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return s + np.log1p(-np.exp(-2.0 * s)) - np.log(2.0)


def _radial_log_density(s: np.ndarray, kappa: float, k: int) -> np.ndarray:
    out = -kappa * np.cosh(s)
    if k > 1:
        out = out + (k - 1) * _log_sinh(s)
    return out


def hyperbolic_radial_draws(kappa: float, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw s = d(x, μ)/R from the density ∝ exp(-κ cosh s) sinh^{k-1} s on s ≥ 0.

    The density is log-concave; the envelope is flat up to one Laplace width
    past the mode and a tangent exponential beyond it.
    """
    if k == 1:
        mode = 0.0
    else:
        c = ((k - 1) + np.sqrt((k - 1) ** 2 + 4.0 * kappa ** 2)) / (2.0 * kappa)
        mode = float(np.arccosh(c))
    curvature = kappa * np.cosh(mode) + ((k - 1) / np.sinh(mode) ** 2 if k > 1 else 0.0)
    s1 = mode + 1.0 / np.sqrt(curvature)
    slope = -kappa * np.sinh(s1) + ((k - 1) / np.tanh(s1) if k > 1 else 0.0)
    lf_mode = float(_radial_log_density(np.array(mode), kappa, k))
    lf_s1 = float(_radial_log_density(np.array(s1), kappa, k))

    flat_mass = s1
    tail_mass = np.exp(lf_s1 - lf_mode) / -slope
    p_flat = flat_mass / (flat_mass + tail_mass)

    draws = []
    have = 0
    while have < size:
        m = 2 * max(size - have, 16)
        flat = rng.uniform(size=m) < p_flat
        s = np.where(flat, rng.uniform(0.0, s1, size=m), s1 + rng.exponential(1.0 / -slope, size=m))
        log_env = np.where(flat, lf_mode, lf_s1 + slope * (s - s1))
        keep = np.log(rng.uniform(size=m)) <= _radial_log_density(s, kappa, k) - log_env
        draws.append(s[keep])
        have += int(keep.sum())
    return np.concatenate(draws)[:size]


def hyperbolic_draws(theta: HyperbolicParams, size: int, rng: np.random.Generator) -> np.ndarray:
    k = theta.mu.dim
    radius = theta.radius
    s = hyperbolic_radial_draws(theta.kappa, k, size, rng)
    directions = uniform_on_sphere_batch(k - 1, size, rng)
    at_apex = np.concatenate(
        [radius * np.sinh(s)[:, None] * directions, radius * np.cosh(s)[:, None]], axis=1
    )
    boost = lorentz_from_apex(theta.mu.coords, radius)
    xs = at_apex @ boost.T
    xs[:, -1] = np.sqrt(radius ** 2 + np.sum(xs[:, :-1] ** 2, axis=1))
    return xs


def hyperbolic_sample(theta: HyperbolicParams, rng: np.random.Generator) -> HyperboloidPoint:
    return HyperboloidPoint(coords=hyperbolic_draws(theta, 1, rng)[0], radius=theta.radius)


# ---------------------------------------------------------------------------
# Langevin distribution on the Stiefel manifold
# ---------------------------------------------------------------------------


def langevin_log_density(x: StiefelFrame, theta: LangevinParams) -> float:
    """Unnormalised log density λ tr(xᵀH)."""
    _require_dim(x.entries, theta.frame.entries, "langevin_log_density")
    return float(theta.lam * np.sum(x.entries * theta.frame.entries))


def langevin_draws(theta: LangevinParams, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """
    Rejection sampler with uniform Stiefel proposals and bound etr(λxᵀH) ≤ exp(λk).

    Returns the draws and the observed acceptance rate.
    """
    h = theta.frame.entries
    p, k = h.shape
    lam = theta.lam
    trial = settings.LANGEVIN_TRIAL_SIZE
    batch = min(trial, max(1024, 8 * size))

    kept = []
    accepted = 0
    proposed = 0
    while accepted < size:
        xs = uniform_on_stiefel_batch(p, k, batch, rng)
        log_accept = lam * (np.einsum("nij,ij->n", xs, h) - k)
        keep = np.log(rng.uniform(size=batch)) < log_accept
        kept.append(xs[keep])
        accepted += int(keep.sum())
        proposed += batch
        if proposed >= trial and accepted / proposed < settings.LANGEVIN_MIN_ACCEPTANCE:
            raise SamplerError(
                f"Langevin acceptance rate {accepted / proposed:.2e} over {proposed} proposals; "
                f"use a smaller lambda than {lam}"
            )
    rate = accepted / proposed
    logger.debug(f"Langevin rejection sampler acceptance rate {rate:.4f}")
    return np.concatenate(kept)[:size], rate


def langevin_sample(theta: LangevinParams, rng: np.random.Generator) -> StiefelFrame:
    draws, _ = langevin_draws(theta, 1, rng)
    return StiefelFrame(entries=draws[0])


# ---------------------------------------------------------------------------
# Wishart
# ---------------------------------------------------------------------------


def wishart_log_density(x: SpdMatrix, theta: WishartParams) -> float:
    _require_dim(x.entries, theta.sigma.entries, "wishart_log_density")
    return float(stats.wishart.logpdf(x.entries, df=theta.dof, scale=theta.sigma.entries))


def bartlett_factors(p: int, dof: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Lower-triangular A with AAᵀ ~ Wishart_p(dof, I)."""
    if dof < p:
        raise DimensionMismatch(f"degrees of freedom {dof} below dimension {p}")
    a = np.zeros((size, p, p))
    idx = np.arange(p)
    a[:, idx, idx] = np.sqrt(rng.chisquare(dof - idx, size=(size, p)))
    rows, cols = np.tril_indices(p, k=-1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    return a


def wishart_draws(theta: WishartParams, size: int, rng: np.random.Generator) -> np.ndarray:
    p = theta.sigma.p
    chol = np.linalg.cholesky(theta.sigma.entries)
    w = chol @ bartlett_factors(p, theta.dof, size, rng)
    xs = w @ np.swapaxes(w, -1, -2)
    return (xs + np.swapaxes(xs, -1, -2)) / 2.0


def wishart_sample(theta: WishartParams, rng: np.random.Generator) -> SpdMatrix:
    return SpdMatrix(entries=wishart_draws(theta, 1, rng)[0])


# ---------------------------------------------------------------------------
# Multivariate von Mises model on the torus
# ---------------------------------------------------------------------------


def lambda_matrix(lam: np.ndarray, p: int) -> np.ndarray:
    """Symmetric interaction matrix with zero diagonal from the (i<j) vector."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (pair_count(p),):
        raise DimensionMismatch(f"expected {pair_count(p)} interactions for p={p}")
    out = np.zeros((p, p))
    rows, cols = np.triu_indices(p, k=1)
    out[rows, cols] = lam
    return out + out.T


def torus_log_density_angles(
    angles: np.ndarray, mu_angles: np.ndarray, kappa: np.ndarray, lam_mat: np.ndarray
) -> np.ndarray:
    """Σκᵢcos(xᵢ-μᵢ) + Σ_{i<j} λᵢⱼ sin(xᵢ-μᵢ) sin(xⱼ-μⱼ), batched over leading axes."""
    offsets = angles - mu_angles
    s = np.sin(offsets)
    return np.cos(offsets) @ kappa + 0.5 * np.einsum("...i,ij,...j->...", s, lam_mat, s)


def torus_log_density_unnormalized(x: TorusPoint, theta: TorusModelParams) -> float:
    _require_dim(x.components, theta.mu.components, "torus_log_density_unnormalized")
    lam_mat = lambda_matrix(theta.lam, theta.p)
    return float(torus_log_density_angles(x.angles, theta.mu.angles, theta.kappa, lam_mat))


def torus_log_density_matrix_form(x: TorusPoint, theta: TorusModelParams) -> float:
    """Σκᵢxᵢᵀμᵢ + Σ_{i<j} λᵢⱼ xᵢᵀ(Rμᵢ)(Rμⱼ)ᵀxⱼ with R the rotation by π/2."""
    _require_dim(x.components, theta.mu.components, "torus_log_density_matrix_form")
    xs, mus = x.components, theta.mu.components
    rmu = mus @ ROT90.T
    value = float(np.sum(theta.kappa * np.sum(xs * mus, axis=1)))
    rows, cols = np.triu_indices(theta.p, k=1)
    for lam, i, j in zip(theta.lam, rows, cols):
        value += lam * (xs[i] @ rmu[i]) * (rmu[j] @ xs[j])
    return value


def torus_conditional_vmf(i: int, x: TorusPoint, theta: TorusModelParams) -> Optional[VmfParams]:
    """
    Full conditional of component i given the others (component i of ``x`` is ignored).

    ηᵢ = κᵢμᵢ + Σ_{j≠i} λᵢⱼ (Rμᵢ)(Rμⱼ)ᵀxⱼ. Returns None when ηᵢ = 0, i.e. the
    conditional is uniform on the circle.
    """
    _require_dim(x.components, theta.mu.components, "torus_conditional_vmf")
    p = theta.p
    if not 0 <= i < p:
        raise DimensionMismatch(f"component index {i} outside 0..{p - 1}")
    lam_mat = lambda_matrix(theta.lam, p)
    mus = theta.mu.components
    rmu = mus @ ROT90.T
    eta = theta.kappa[i] * mus[i]
    for j in range(p):
        if j != i:
            eta = eta + lam_mat[i, j] * rmu[i] * (rmu[j] @ x.components[j])
    norm = float(np.linalg.norm(eta))
    if norm < 1e-12:
        logger.debug(f"degenerate conditional for component {i}; uniform on the circle")
        return None
    return VmfParams(mu=UnitVector(coords=eta / norm), kappa=norm)


def _gibbs_sweep(
    angles: np.ndarray,
    mu_angles: np.ndarray,
    kappa: np.ndarray,
    lam_mat: np.ndarray,
    rng: np.random.Generator,
) -> None:
    """One systematic-scan sweep, in place, over a batch of chains (rows of ``angles``)."""
    for i in range(mu_angles.size):
        b = np.sin(angles - mu_angles) @ lam_mat[:, i]
        loc = mu_angles[i] + np.arctan2(b, kappa[i])
        conc = np.hypot(kappa[i], b)
        angles[:, i] = np.mod(rng.vonmises(loc, conc), 2 * np.pi)


def torus_gibbs_sample(
    theta: TorusModelParams, rng: np.random.Generator, n_sweeps: Optional[int] = None
) -> TorusPoint:
    """One draw: ``n_sweeps`` Gibbs sweeps started at μ."""
    n_sweeps = settings.GIBBS_BURN_IN if n_sweeps is None else n_sweeps
    mu_angles = theta.mu.angles
    lam_mat = lambda_matrix(theta.lam, theta.p)
    state = mu_angles[None, :].copy()
    for _ in range(n_sweeps):
        _gibbs_sweep(state, mu_angles, theta.kappa, lam_mat, rng)
    return TorusPoint.from_angles(state[0])


def torus_draws(
    theta: TorusModelParams,
    size: int,
    rng: np.random.Generator,
    n_sweeps: Optional[int] = None,
) -> np.ndarray:
    """``size`` independent Gibbs chains run side by side; returns angles (size, p)."""
    n_sweeps = settings.GIBBS_BURN_IN if n_sweeps is None else n_sweeps
    mu_angles = theta.mu.angles
    lam_mat = lambda_matrix(theta.lam, theta.p)
    state = np.tile(mu_angles, (size, 1))
    for _ in range(n_sweeps):
        _gibbs_sweep(state, mu_angles, theta.kappa, lam_mat, rng)
    return state


def torus_log_normalizer(
    kappa: np.ndarray,
    lam: np.ndarray,
    p: int,
    m: Optional[int] = None,
    mu_angles: Optional[np.ndarray] = None,
) -> float:
    """
    log ∫_{T^p} exp(log-density) vol(dx).

    The last angle is integrated exactly (a 2π I₀ Bessel factor); the other
    p-1 angles use the periodic trapezoid rule with m nodes per axis. The value
    does not depend on μ; by default it is computed at μ = 0.
    """
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (p,):
        raise DimensionMismatch(f"kappa must have length {p}")
    if p > settings.TORUS_MAX_DIM:
        raise UnsupportedDimension(f"torus normaliser supports p <= {settings.TORUS_MAX_DIM}, got {p}")
    m = settings.TORUS_QUADRATURE_POINTS if m is None else m
    lam_mat = lambda_matrix(lam, p)
    mu_angles = np.zeros(p) if mu_angles is None else np.asarray(mu_angles, dtype=float)

    log_2pi = np.log(2 * np.pi)
    if p == 1:
        return float(log_2pi + np.log(i0e(kappa[0])) + kappa[0])

    nodes = 2 * np.pi * np.arange(m) / m
    grids = np.meshgrid(*([nodes] * (p - 1)), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1) - mu_angles[:-1]
    s = np.sin(offsets)
    head = np.cos(offsets) @ kappa[:-1] + 0.5 * np.einsum(
        "ni,ij,nj->n", s, lam_mat[:-1, :-1], s
    )
    r = np.hypot(kappa[-1], s @ lam_mat[:-1, -1])
    last = log_2pi + np.log(i0e(r)) + r
    return float(logsumexp(head + last) + (p - 1) * np.log(2 * np.pi / m))


# ---------------------------------------------------------------------------
# Family-level dispatch
# ---------------------------------------------------------------------------


def log_density(x: ManifoldPoint, theta: ModelParams) -> float:
    """Log density of ``x`` under ``theta`` (unnormalised except for Wishart)."""
    if isinstance(theta, VmfParams) and isinstance(x, UnitVector):
        return vmf_log_density(x, theta)
    if isinstance(theta, HyperbolicParams) and isinstance(x, HyperboloidPoint):
        return hyperbolic_log_density(x, theta)
    if isinstance(theta, LangevinParams) and isinstance(x, StiefelFrame):
        return langevin_log_density(x, theta)
    if isinstance(theta, WishartParams) and isinstance(x, SpdMatrix):
        return wishart_log_density(x, theta)
    if isinstance(theta, TorusModelParams) and isinstance(x, TorusPoint):
        return torus_log_density_unnormalized(x, theta)
    raise DimensionMismatch(f"family {theta.family!r} has no density on {x.manifold!r}")


def transform_params(g: Isometry, theta: ModelParams) -> ModelParams:
    """Parameters of gP_θ."""
    if isinstance(theta, VmfParams) and isinstance(g, Orthogonal):
        return VmfParams(mu=apply_isometry(g, theta.mu), kappa=theta.kappa)
    if isinstance(theta, HyperbolicParams) and isinstance(g, Lorentz):
        return HyperbolicParams(mu=apply_isometry(g, theta.mu), kappa=theta.kappa, radius=theta.radius)
    if isinstance(theta, LangevinParams) and isinstance(g, StiefelPair):
        return LangevinParams(frame=apply_isometry(g, theta.frame), lam=theta.lam)
    if isinstance(theta, WishartParams) and isinstance(g, SpdConjugation):
        return WishartParams(dof=theta.dof, sigma=apply_isometry(g, theta.sigma))
    if isinstance(theta, TorusModelParams) and isinstance(g, TorusElement):
        det = g.determinants
        rows, cols = np.triu_indices(theta.p, k=1)
        return TorusModelParams(
            mu=apply_isometry(g, theta.mu),
            kappa=theta.kappa,
            lam=theta.lam * det[rows] * det[cols],
        )
    raise DimensionMismatch(f"isometry {g.kind!r} does not act on family {theta.family!r}")


def draw_array(
    theta: ModelParams, size: int, rng: np.random.Generator
) -> Tuple[str, np.ndarray, Optional[float]]:
    """``size`` i.i.d. draws as a model-native array; returns (manifold, array, radius)."""
    if isinstance(theta, VmfParams):
        return "sphere", vmf_draws(theta.mu.coords, theta.kappa, size, rng), None
    if isinstance(theta, HyperbolicParams):
        return "hyperboloid", hyperbolic_draws(theta, size, rng), theta.radius
    if isinstance(theta, LangevinParams):
        return "stiefel", langevin_draws(theta, size, rng)[0], None
    if isinstance(theta, WishartParams):
        return "spd", wishart_draws(theta, size, rng), None
    return "torus", from_angles(torus_draws(theta, size, rng)), None


def sample(theta: ModelParams, size: int, rng: np.random.Generator) -> List[ManifoldPoint]:
    kind, arr, radius = draw_array(theta, size, rng)
    if kind == "torus":
        return [TorusPoint.from_angles(a) for a in to_angles(arr)]
    return make_points(kind, arr, radius)
