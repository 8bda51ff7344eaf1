"""
Sample and population Fréchet means.

Closed forms where the metric has one (log-Euclidean SPD, flat torus via
exact circle means, extrinsic sphere/Stiefel projections); Riemannian
gradient descent on the sphere and the hyperboloid.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import polar

from app.core.config import settings
from app.core.errors import InvalidInputError, UndefinedEstimate
from app.models.params import ModelParams
from app.models.points import ManifoldPoint, minkowski
from app.models.results import FrechetResult, FrechetSolverConfig
from app.services.distributions import draw_array
from app.services.manifolds import (
    Metric,
    circle_dist_array,
    expm_sym,
    logm_spd,
    make_point,
    resolve_metric,
    squared_distances,
    stack_points,
    to_angles,
)

logger = logging.getLogger(__name__)

# (mean, objective, converged, iterations)
MeanSolution = Tuple[np.ndarray, float, bool, int]


def circle_frechet_mean(angles: Union[Sequence[float], np.ndarray]) -> float:
    """
    Exact minimiser of the mean squared angular distance on S¹.

    Cutting the circle between consecutive sorted angles unrolls the data onto
    the line; every stationary point is the arithmetic mean of one such
    unrolling, and the global minimum is the smallest unrolled variance.
    Ties go to the smallest angle in [0, 2π).
    """
    a = np.sort(np.mod(np.asarray(angles, dtype=float).ravel(), 2 * np.pi))
    n = a.size
    if n == 0:
        raise InvalidInputError("circle_frechet_mean needs at least one angle")
    # cut k lifts the k smallest angles by 2π
    k = np.arange(n)
    lifted_sum = a.sum() + 2 * np.pi * k
    prefix = np.concatenate([[0.0], np.cumsum(a)[:-1]])
    lifted_sq = np.sum(a ** 2) + 4 * np.pi * prefix + 4 * np.pi ** 2 * k
    means = lifted_sum / n
    variances = lifted_sq / n - means ** 2

    best = variances.min()
    ties = np.mod(means[variances <= best + 1e-12 * max(1.0, abs(best))], 2 * np.pi)
    return float(ties.min())


def _circle_objective(a: np.ndarray, m: float) -> float:
    return float(np.mean(circle_dist_array(a, m) ** 2))


def _gradient_descent(
    xs: np.ndarray,
    init: np.ndarray,
    log_map: Callable[[np.ndarray, np.ndarray], np.ndarray],
    exp_map: Callable[[np.ndarray, np.ndarray], np.ndarray],
    objective: Callable[[np.ndarray], float],
    tangent_norm: Callable[[np.ndarray], float],
    cfg: FrechetSolverConfig,
) -> MeanSolution:
    """Karcher iteration m ← Exp_m(t·mean Log_m(xᵢ)) with step halving on ascent."""
    m = init
    obj = objective(m)
    for it in range(1, cfg.max_iters + 1):
        grad = np.mean(log_map(m, xs), axis=0)
        gnorm = tangent_norm(grad)
        if gnorm < cfg.tol:
            return m, obj, True, it
        step = cfg.step_size
        while True:
            cand = exp_map(m, step * grad)
            cand_obj = objective(cand)
            if cand_obj <= obj or step < 1e-12:
                break
            step /= 2.0
        m, obj = cand, cand_obj
        if step * gnorm < cfg.tol:
            return m, obj, True, it
    logger.warning(f"Fréchet gradient iteration stopped after {cfg.max_iters} iterations")
    return m, obj, False, cfg.max_iters


def _sphere_log(m: np.ndarray, xs: np.ndarray) -> np.ndarray:
    cos = np.clip(xs @ m, -1.0, 1.0)
    theta = np.arccos(cos)
    v = xs - cos[:, None] * m
    norm = np.linalg.norm(v, axis=1)
    scale = np.where(norm > 1e-15, theta / np.where(norm > 1e-15, norm, 1.0), 0.0)
    return v * scale[:, None]


def _sphere_exp(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    t = np.linalg.norm(v)
    if t < 1e-300:
        return m
    out = np.cos(t) * m + np.sin(t) * v / t
    return out / np.linalg.norm(out)


def _sphere_mean(xs: np.ndarray, metric: Metric, cfg: FrechetSolverConfig) -> MeanSolution:
    s = xs.mean(axis=0)
    norm = np.linalg.norm(s)
    if norm < 1e-12:
        raise UndefinedEstimate("extrinsic average of the sphere data is zero")
    init = s / norm
    if metric is Metric.EXTRINSIC:
        return init, float(np.mean(np.sum((xs - init) ** 2, axis=1))), True, 0

    def objective(m: np.ndarray) -> float:
        return float(np.mean(squared_distances("sphere", m, xs, Metric.GEODESIC)))

    return _gradient_descent(xs, init, _sphere_log, _sphere_exp, objective, np.linalg.norm, cfg)


def _hyperboloid_mean(xs: np.ndarray, radius: float, cfg: FrechetSolverConfig) -> MeanSolution:
    r2 = radius ** 2

    def log_map(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
        c = np.maximum(-minkowski(pts, m) / r2, 1.0)
        d = radius * np.arccosh(c)
        u = pts - c[:, None] * m
        sinh = np.sqrt(np.maximum(c ** 2 - 1.0, 0.0))
        scale = np.where(sinh > 1e-15, d / (radius * np.where(sinh > 1e-15, sinh, 1.0)), 0.0)
        return u * scale[:, None]

    def norm(v: np.ndarray) -> float:
        return float(np.sqrt(max(minkowski(v, v), 0.0)))

    def exp_map(m: np.ndarray, v: np.ndarray) -> np.ndarray:
        t = norm(v)
        if t < 1e-300:
            return m
        out = np.cosh(t / radius) * m + radius * np.sinh(t / radius) * v / t
        out[-1] = np.sqrt(r2 + np.sum(out[:-1] ** 2))
        return out

    def objective(m: np.ndarray) -> float:
        return float(np.mean(squared_distances("hyperboloid", m, xs, Metric.GEODESIC, radius)))

    s = xs.sum(axis=0)
    init = radius * s / np.sqrt(-minkowski(s, s))
    init[-1] = np.sqrt(r2 + np.sum(init[:-1] ** 2))
    return _gradient_descent(xs, init, log_map, exp_map, objective, norm, cfg)


def _torus_mean(xs: np.ndarray) -> MeanSolution:
    angles = to_angles(xs)
    means = np.array([circle_frechet_mean(angles[:, i]) for i in range(angles.shape[1])])
    objective = sum(_circle_objective(angles[:, i], means[i]) for i in range(means.size))
    return np.stack([np.cos(means), np.sin(means)], axis=-1), float(objective), True, 0


def _spd_mean(xs: np.ndarray) -> MeanSolution:
    logs = logm_spd(xs)
    center = logs.mean(axis=0)
    objective = float(np.mean(np.sum((logs - center) ** 2, axis=(-2, -1))))
    return expm_sym(center), objective, True, 0


def _stiefel_mean(xs: np.ndarray) -> MeanSolution:
    frame, _ = polar(xs.mean(axis=0), side="right")
    objective = float(np.mean(np.sum((xs - frame) ** 2, axis=(-2, -1))))
    return frame, objective, True, 0


def frechet_mean_array(
    kind: str,
    xs: np.ndarray,
    metric: Optional[Union[Metric, str]] = None,
    cfg: Optional[FrechetSolverConfig] = None,
    radius: Optional[float] = None,
) -> MeanSolution:
    """Fréchet mean of a stack of model-native arrays."""
    if xs.shape[0] == 0:
        raise InvalidInputError("cannot average an empty sample")
    metric = resolve_metric(kind, metric)
    cfg = cfg or FrechetSolverConfig()
    if kind == "sphere":
        return _sphere_mean(xs, metric, cfg)
    if kind == "hyperboloid":
        return _hyperboloid_mean(xs, radius if radius is not None else 1.0, cfg)
    if kind == "torus":
        return _torus_mean(xs)
    if kind == "spd":
        return _spd_mean(xs)
    return _stiefel_mean(xs)


def sample_frechet_mean(
    points: Sequence[ManifoldPoint],
    metric: Optional[Union[Metric, str]] = None,
    cfg: Optional[FrechetSolverConfig] = None,
) -> FrechetResult:
    """argmin over x of (1/n) Σ d(xᵢ, x)²."""
    if len(points) == 0:
        raise InvalidInputError("sample_frechet_mean needs at least one point")
    kind, xs, radius = stack_points(points)
    metric = resolve_metric(kind, metric)
    arr, _, converged, iterations = frechet_mean_array(kind, xs, metric, cfg, radius)
    mean = make_point(kind, arr, radius)
    objective = float(np.mean(squared_distances(kind, mean.as_array(), xs, metric, radius)))
    return FrechetResult(mean=mean, objective=objective, converged=converged, iterations=iterations)


def population_frechet_mean_mc(
    theta: ModelParams,
    rng: np.random.Generator,
    metric: Optional[Union[Metric, str]] = None,
    n_draws: Optional[int] = None,
    cfg: Optional[FrechetSolverConfig] = None,
) -> FrechetResult:
    """Sample Fréchet mean of ``n_draws`` fresh draws from P_θ."""
    n_draws = n_draws or settings.POPULATION_MEAN_DRAWS
    kind, xs, radius = draw_array(theta, n_draws, rng)
    metric = resolve_metric(kind, metric)
    arr, _, converged, iterations = frechet_mean_array(kind, xs, metric, cfg, radius)
    mean = make_point(kind, arr, radius)
    objective = float(np.mean(squared_distances(kind, mean.as_array(), xs, metric, radius)))
    logger.debug(f"population Fréchet mean of {theta.family} from {n_draws} draws, objective {objective:.6g}")
    return FrechetResult(
        mean=mean, objective=objective, converged=converged, iterations=iterations, n_draws=n_draws
    )
