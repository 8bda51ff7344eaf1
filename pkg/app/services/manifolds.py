"""
Geometry of the five supported homogeneous spaces.

Public operations take the point models of ``app.models.points``; the
``*_array`` helpers work on stacked numpy arrays and are what the samplers,
Fréchet solvers and Markov chains use internally.
"""

import logging
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag

from app.core.errors import DimensionMismatch, NotPositiveDefinite, UnsupportedMetric
from app.models.points import (
    SPD_TOL,
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

logger = logging.getLogger(__name__)

# Absolute floor on eigenvalues accepted by the matrix logarithm
LOG_EIGEN_FLOOR = 1e-12


class Metric(str, Enum):
    GEODESIC = "geodesic"
    EXTRINSIC = "extrinsic"


_SUPPORTED_METRICS = {
    "sphere": (Metric.GEODESIC, Metric.EXTRINSIC),
    "hyperboloid": (Metric.GEODESIC,),
    "torus": (Metric.GEODESIC,),
    "spd": (Metric.GEODESIC,),
    "stiefel": (Metric.EXTRINSIC,),
}


def resolve_metric(kind: str, metric: Optional[Union[Metric, str]] = None) -> Metric:
    """Default metric of a manifold, or validate the requested one.

    The geodesic metric of ``spd`` is the log-Euclidean distance and that of
    ``torus`` the flat product distance; Stiefel frames only carry the
    extrinsic Frobenius distance.
    """
    supported = _SUPPORTED_METRICS[kind]
    if metric is None:
        return supported[0]
    metric = Metric(metric)
    if metric not in supported:
        raise UnsupportedMetric(f"metric {metric.value!r} is not available on {kind}")
    return metric


def _require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def sphere_dist_array(m: np.ndarray, xs: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(xs @ m, -1.0, 1.0))


def hyperboloid_dist_array(m: np.ndarray, xs: np.ndarray, radius: float) -> np.ndarray:
    arg = -minkowski(xs, m) / radius ** 2
    return radius * np.arccosh(np.maximum(arg, 1.0))


def circle_dist_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angular distance in [0, π] between angles, broadcast."""
    return np.abs(np.mod(a - b + np.pi, 2 * np.pi) - np.pi)


def sphere_distance(x: UnitVector, y: UnitVector) -> float:
    _require_same_shape(x.coords, y.coords, "sphere_distance")
    return float(np.arccos(np.clip(x.coords @ y.coords, -1.0, 1.0)))


def sphere_extrinsic_distance(x: UnitVector, y: UnitVector) -> float:
    _require_same_shape(x.coords, y.coords, "sphere_extrinsic_distance")
    return float(np.linalg.norm(x.coords - y.coords))


def hyperboloid_distance(x: HyperboloidPoint, y: HyperboloidPoint) -> float:
    _require_same_shape(x.coords, y.coords, "hyperboloid_distance")
    if x.radius != y.radius:
        raise DimensionMismatch(f"hyperboloid radii {x.radius} and {y.radius} differ")
    return float(hyperboloid_dist_array(y.coords, x.coords[None, :], x.radius)[0])


def log_euclidean_distance(x: Union[SpdMatrix, np.ndarray], y: Union[SpdMatrix, np.ndarray]) -> float:
    lx, ly = matrix_log(x), matrix_log(y)
    _require_same_shape(lx, ly, "log_euclidean_distance")
    return float(np.linalg.norm(lx - ly))


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    _require_same_shape(x.components, y.components, "torus_distance")
    d = circle_dist_array(x.angles, y.angles)
    return float(np.sqrt(np.sum(d ** 2)))


def stiefel_extrinsic_distance(x: StiefelFrame, y: StiefelFrame) -> float:
    _require_same_shape(x.entries, y.entries, "stiefel_extrinsic_distance")
    return float(np.linalg.norm(x.entries - y.entries))


def distance(x: ManifoldPoint, y: ManifoldPoint, metric: Optional[Union[Metric, str]] = None) -> float:
    """Distance under the manifold's default (or requested) metric."""
    if x.manifold != y.manifold:
        raise DimensionMismatch(f"cannot compare {x.manifold} and {y.manifold} points")
    metric = resolve_metric(x.manifold, metric)
    if x.manifold == "sphere":
        return sphere_distance(x, y) if metric is Metric.GEODESIC else sphere_extrinsic_distance(x, y)
    if x.manifold == "hyperboloid":
        return hyperboloid_distance(x, y)
    if x.manifold == "torus":
        return torus_distance(x, y)
    if x.manifold == "spd":
        return log_euclidean_distance(x, y)
    return stiefel_extrinsic_distance(x, y)


def squared_distances(
    kind: str,
    m: np.ndarray,
    xs: np.ndarray,
    metric: Metric,
    radius: Optional[float] = None,
) -> np.ndarray:
    """Squared distances from one point ``m`` to a stack ``xs`` (model-native arrays)."""
    if kind == "sphere":
        if metric is Metric.EXTRINSIC:
            return np.sum((xs - m) ** 2, axis=-1)
        return sphere_dist_array(m, xs) ** 2
    if kind == "hyperboloid":
        return hyperboloid_dist_array(m, xs, radius) ** 2
    if kind == "torus":
        d = circle_dist_array(to_angles(xs), to_angles(m))
        return np.sum(d ** 2, axis=-1)
    if kind == "spd":
        diff = logm_spd(xs) - logm_spd(m)
        return np.sum(diff ** 2, axis=(-2, -1))
    return np.sum((xs - m) ** 2, axis=(-2, -1))


# ---------------------------------------------------------------------------
# Matrix logarithm / exponential on SPD matrices
# ---------------------------------------------------------------------------


def logm_spd(a: np.ndarray) -> np.ndarray:
    """Batched symmetric matrix logarithm via eigendecomposition."""
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh((a + np.swapaxes(a, -1, -2)) / 2.0)
    smallest, largest = w[..., 0], w[..., -1]
    if np.any(smallest < LOG_EIGEN_FLOOR) or np.any(smallest <= SPD_TOL * largest):
        raise NotPositiveDefinite(f"smallest eigenvalue {float(np.min(smallest))!r} below tolerance")
    return (v * np.log(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def expm_sym(s: np.ndarray) -> np.ndarray:
    """Batched exponential of symmetric matrices."""
    s = np.asarray(s, dtype=float)
    w, v = np.linalg.eigh((s + np.swapaxes(s, -1, -2)) / 2.0)
    return (v * np.exp(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def matrix_log(x: Union[SpdMatrix, np.ndarray]) -> np.ndarray:
    """log(X) = U diag(log λ) Uᵀ for an SPD matrix X."""
    a = x.entries if isinstance(x, SpdMatrix) else np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("matrix_log needs a square matrix")
    return logm_spd(a)


def matrix_exp(s: np.ndarray) -> SpdMatrix:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch("matrix_exp needs a square matrix")
    if np.max(np.abs(s - s.T)) > 1e-9 * max(1.0, float(np.max(np.abs(s)))):
        raise DimensionMismatch("matrix_exp needs a symmetric matrix")
    return SpdMatrix.symmetrized(expm_sym(s))


# ---------------------------------------------------------------------------
# Point stacks
# ---------------------------------------------------------------------------


def to_angles(components: np.ndarray) -> np.ndarray:
    """Angles in [0, 2π) of unit 2-vectors stored along the last axis."""
    return np.mod(np.arctan2(components[..., 1], components[..., 0]), 2 * np.pi)


def from_angles(angles: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def stack_points(points: Sequence[ManifoldPoint]) -> Tuple[str, np.ndarray, Optional[float]]:
    """Stack homogeneous points into one array; returns (kind, array, radius)."""
    if not points:
        raise DimensionMismatch("empty point list")
    kind = points[0].manifold
    radius = getattr(points[0], "radius", None)
    shape = points[0].as_array().shape
    for x in points:
        if x.manifold != kind:
            raise DimensionMismatch(f"mixed manifolds {kind} and {x.manifold}")
        if x.as_array().shape != shape:
            raise DimensionMismatch(f"mixed point shapes {shape} and {x.as_array().shape}")
        if radius is not None and x.radius != radius:
            raise DimensionMismatch("mixed hyperboloid radii")
    return kind, np.stack([x.as_array() for x in points]), radius


def make_point(kind: str, arr: np.ndarray, radius: Optional[float] = None) -> ManifoldPoint:
    """Wrap a computed array as a point, removing floating-point drift off the manifold."""
    if kind == "sphere":
        return UnitVector.normalized(arr)
    if kind == "hyperboloid":
        return HyperboloidPoint.project(arr, radius if radius is not None else 1.0)
    if kind == "torus":
        return TorusPoint.from_angles(to_angles(np.asarray(arr)))
    if kind == "spd":
        return SpdMatrix.symmetrized(arr)
    if kind == "stiefel":
        return StiefelFrame(entries=arr)
    raise DimensionMismatch(f"unknown manifold {kind!r}")


def make_points(kind: str, arrs: np.ndarray, radius: Optional[float] = None) -> List[ManifoldPoint]:
    return [make_point(kind, a, radius) for a in arrs]


# ---------------------------------------------------------------------------
# Isometries
# ---------------------------------------------------------------------------


def apply_isometry_array(g: Isometry, kind: str, xs: np.ndarray) -> np.ndarray:
    """Apply ``g`` to a stack of model-native arrays (leading axis = points)."""
    if kind == "sphere" and isinstance(g, Orthogonal):
        if g.matrix.shape[0] != xs.shape[-1]:
            raise DimensionMismatch("isometry and sphere dimensions differ")
        return xs @ g.matrix.T
    if kind == "hyperboloid" and isinstance(g, Lorentz):
        if g.matrix.shape[0] != xs.shape[-1]:
            raise DimensionMismatch("isometry and hyperboloid dimensions differ")
        return xs @ g.matrix.T
    if kind == "torus" and isinstance(g, TorusElement):
        if g.blocks.shape[0] != xs.shape[-2]:
            raise DimensionMismatch("isometry and torus dimensions differ")
        return np.einsum("pij,...pj->...pi", g.blocks, xs)
    if kind == "spd" and isinstance(g, SpdConjugation):
        if g.matrix.shape[0] != xs.shape[-1]:
            raise DimensionMismatch("isometry and matrix dimensions differ")
        return g.scale * (g.matrix @ xs @ g.matrix.T)
    if kind == "stiefel" and isinstance(g, StiefelPair):
        if g.left.shape[0] != xs.shape[-2] or g.right.shape[0] != xs.shape[-1]:
            raise DimensionMismatch("isometry and frame dimensions differ")
        return g.left @ xs @ g.right.T
    raise DimensionMismatch(f"isometry {g.kind!r} does not act on {kind!r}")


def apply_isometry(g: Isometry, x: ManifoldPoint) -> ManifoldPoint:
    """Evaluate the isometry ``g`` at the point ``x``."""
    y = apply_isometry_array(g, x.manifold, x.as_array()[None, ...])[0]
    return make_point(x.manifold, y, getattr(x, "radius", None))


def haar_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of O(p): QR of a Gaussian matrix, signs fixed by diag(R)."""
    z = rng.standard_normal((p, p))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def uniform_on_sphere_batch(k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, k + 1))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def uniform_on_sphere(k: int, rng: np.random.Generator) -> UnitVector:
    return UnitVector(coords=uniform_on_sphere_batch(k, 1, rng)[0])


def uniform_on_stiefel_batch(p: int, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, p, k))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    return q * signs[:, None, :]


def uniform_on_stiefel(p: int, k: int, rng: np.random.Generator) -> StiefelFrame:
    return StiefelFrame(entries=uniform_on_stiefel_batch(p, k, 1, rng)[0])


def lorentz_boost(direction: np.ndarray, rapidity: float) -> np.ndarray:
    """Boost of rapidity t along a unit spatial direction (time coordinate last)."""
    v = np.asarray(direction, dtype=float)
    k = v.size
    b = np.eye(k + 1)
    b[:k, :k] += (np.cosh(rapidity) - 1.0) * np.outer(v, v)
    b[:k, k] = np.sinh(rapidity) * v
    b[k, :k] = np.sinh(rapidity) * v
    b[k, k] = np.cosh(rapidity)
    return b


def lorentz_from_apex(mu: np.ndarray, radius: float) -> np.ndarray:
    """Boost carrying the apex (0, …, 0, R) to ``mu``."""
    spatial = np.asarray(mu[:-1], dtype=float) / radius
    norm = np.linalg.norm(spatial)
    if norm < 1e-300:
        return np.eye(mu.size)
    return lorentz_boost(spatial / norm, np.arcsinh(norm))


def random_lorentz(
    k: int,
    rng: np.random.Generator,
    rapidity_range: Tuple[float, float] = (0.0, 1.0),
) -> np.ndarray:
    """Boost times rotation: rotation Haar on O(k), rapidity uniform on the given range."""
    direction = uniform_on_sphere_batch(k - 1, 1, rng)[0]
    rapidity = rng.uniform(*rapidity_range)
    rotation = block_diag(haar_orthogonal(k, rng), np.eye(1))
    return lorentz_boost(direction, rapidity) @ rotation


def random_torus_element(p: int, rng: np.random.Generator) -> np.ndarray:
    """Independent rotations composed with a common reflection (probability 1/2).

    This subgroup of O(2)^p maps every member of the torus model to another
    member with the same (κ, Λ).
    """
    angles = rng.uniform(0.0, 2 * np.pi, size=p)
    c, s = np.cos(angles), np.sin(angles)
    blocks = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], axis=-2)
    if rng.random() < 0.5:
        blocks = blocks @ np.diag([1.0, -1.0])
    return blocks


def random_isometry(
    x: ManifoldPoint,
    rng: np.random.Generator,
    rapidity_range: Tuple[float, float] = (0.0, 1.0),
) -> Isometry:
    """Random element of the isometry group acting on ``x``'s manifold."""
    arr = x.as_array()
    if x.manifold == "sphere":
        return Orthogonal(matrix=haar_orthogonal(arr.size, rng))
    if x.manifold == "hyperboloid":
        return Lorentz(matrix=random_lorentz(arr.size - 1, rng, rapidity_range))
    if x.manifold == "torus":
        return TorusElement(blocks=random_torus_element(arr.shape[0], rng))
    if x.manifold == "spd":
        return SpdConjugation(matrix=haar_orthogonal(arr.shape[0], rng))
    return StiefelPair(left=haar_orthogonal(arr.shape[0], rng), right=haar_orthogonal(arr.shape[1], rng))
