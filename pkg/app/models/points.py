"""
Points of the five supported manifolds and elements of their isometry groups.

Points serialise as ``{"manifold": <tag>, ...}`` with array fields flattened
row-major; Stiefel frames also carry a ``shape`` entry because they are not
square.
"""

from typing import Any, Literal, Union

import numpy as np
from pydantic import Field, PositiveFloat, computed_field, field_validator, model_validator
from typing_extensions import Annotated

from app.models.base import Array, FrozenModel, reshape_flat

# Tolerance of the defining identities (unit norm, Minkowski form, XᵀX = I, ...)
INVARIANT_TOL = 1e-9
# Matrices with an eigenvalue below SPD_TOL × largest eigenvalue are not SPD
SPD_TOL = 1e-12


def minkowski(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minkowski form with the time coordinate last, batched over leading axes."""
    return np.sum(x[..., :-1] * y[..., :-1], axis=-1) - x[..., -1] * y[..., -1]


def _square(value: Any, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        side = int(round(np.sqrt(arr.size)))
        if side * side != arr.size:
            raise ValueError(f"{name} of length {arr.size} is not a flattened square matrix")
        arr = arr.reshape(side, side)
    return arr


def _is_orthogonal(u: np.ndarray) -> bool:
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u.T @ u, np.eye(u.shape[0]), atol=INVARIANT_TOL, rtol=0.0
    )


class UnitVector(FrozenModel):
    manifold: Literal["sphere"] = "sphere"
    coords: Array

    @field_validator("coords")
    @classmethod
    def _check_unit(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a sphere point needs a vector of length k+1 >= 2")
        if abs(np.linalg.norm(v) - 1.0) > INVARIANT_TOL:
            raise ValueError(f"vector norm {np.linalg.norm(v)!r} differs from 1")
        return v

    @classmethod
    def normalized(cls, v: Any) -> "UnitVector":
        v = np.asarray(v, dtype=float)
        return cls(coords=v / np.linalg.norm(v))

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    def as_array(self) -> np.ndarray:
        return self.coords


class HyperboloidPoint(FrozenModel):
    manifold: Literal["hyperboloid"] = "hyperboloid"
    coords: Array
    radius: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _check_sheet(self) -> "HyperboloidPoint":
        x = self.coords
        if x.ndim != 1 or x.size < 2:
            raise ValueError("a hyperboloid point needs a vector of length k+1 >= 2")
        if x[-1] <= 0:
            raise ValueError("last coordinate must be positive (upper sheet)")
        # relative to x_{k+1}² since rounding grows with distance from the apex
        scale = max(1.0, x[-1] ** 2)
        if abs(minkowski(x, x) + self.radius ** 2) > INVARIANT_TOL * scale:
            raise ValueError("Minkowski form (x,x) differs from -R^2")
        return self

    @classmethod
    def project(cls, v: Any, radius: float = 1.0) -> "HyperboloidPoint":
        """Lift the spatial part of ``v`` onto the upper sheet."""
        v = np.asarray(v, dtype=float).copy()
        v[-1] = np.sqrt(radius ** 2 + np.sum(v[:-1] ** 2))
        return cls(coords=v, radius=radius)

    @classmethod
    def apex(cls, k: int, radius: float = 1.0) -> "HyperboloidPoint":
        v = np.zeros(k + 1)
        v[-1] = radius
        return cls(coords=v, radius=radius)

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    def as_array(self) -> np.ndarray:
        return self.coords


class TorusPoint(FrozenModel):
    """Point of the flat p-torus stored as p unit 2-vectors."""

    manifold: Literal["torus"] = "torus"
    components: Array

    @field_validator("components", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1:
            if arr.size % 2:
                raise ValueError("torus components must come in pairs")
            arr = arr.reshape(-1, 2)
        return arr

    @field_validator("components")
    @classmethod
    def _check_components(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 1:
            raise ValueError("torus components must have shape (p, 2)")
        if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > INVARIANT_TOL):
            raise ValueError("every torus component must be a unit vector")
        return v

    @classmethod
    def from_angles(cls, angles: Any) -> "TorusPoint":
        a = np.atleast_1d(np.asarray(angles, dtype=float))
        return cls(components=np.stack([np.cos(a), np.sin(a)], axis=-1))

    @property
    def angles(self) -> np.ndarray:
        """Angles in [0, 2π) measured from (1, 0)."""
        return np.mod(np.arctan2(self.components[:, 1], self.components[:, 0]), 2 * np.pi)

    @property
    def p(self) -> int:
        return self.components.shape[0]

    def as_array(self) -> np.ndarray:
        return self.components


class SpdMatrix(FrozenModel):
    manifold: Literal["spd"] = "spd"
    entries: Array

    @field_validator("entries", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        return _square(value, "entries")

    @field_validator("entries")
    @classmethod
    def _check_spd(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("SPD entries must be a square matrix")
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.max(np.abs(v - v.T)) > INVARIANT_TOL * scale:
            raise ValueError("matrix is not symmetric")
        w = np.linalg.eigvalsh(v)
        if w[0] <= SPD_TOL * max(w[-1], 0.0) or w[-1] <= 0:
            raise ValueError(f"matrix is not positive definite (eigenvalues {w.tolist()})")
        return v

    @classmethod
    def symmetrized(cls, a: Any) -> "SpdMatrix":
        a = np.asarray(a, dtype=float)
        return cls(entries=(a + a.T) / 2.0)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def as_array(self) -> np.ndarray:
        return self.entries


class StiefelFrame(FrozenModel):
    manifold: Literal["stiefel"] = "stiefel"
    entries: Array

    @model_validator(mode="before")
    @classmethod
    def _unflatten(cls, data: Any) -> Any:
        return reshape_flat(data, "entries")

    @field_validator("entries")
    @classmethod
    def _check_frame(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2 or v.shape[0] < v.shape[1]:
            raise ValueError("a Stiefel frame needs a p×k matrix with p >= k")
        if not np.allclose(v.T @ v, np.eye(v.shape[1]), atol=INVARIANT_TOL, rtol=0.0):
            raise ValueError("frame columns are not orthonormal")
        return v

    @computed_field
    @property
    def shape(self) -> list:
        return list(self.entries.shape)

    @classmethod
    def canonical(cls, p: int, k: int) -> "StiefelFrame":
        """H₀ = [I_k, 0]ᵀ."""
        return cls(entries=np.eye(p, k))

    def as_array(self) -> np.ndarray:
        return self.entries


ManifoldPoint = Annotated[
    Union[UnitVector, HyperboloidPoint, TorusPoint, SpdMatrix, StiefelFrame],
    Field(discriminator="manifold"),
]


class Orthogonal(FrozenModel):
    """U ∈ O(p) acting on the sphere by x ↦ Ux."""

    kind: Literal["orthogonal"] = "orthogonal"
    matrix: Array

    @field_validator("matrix", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        return _square(value, "matrix")

    @field_validator("matrix")
    @classmethod
    def _check(cls, v: np.ndarray) -> np.ndarray:
        if not _is_orthogonal(v):
            raise ValueError("matrix is not orthogonal")
        return v

    @classmethod
    def identity(cls, p: int) -> "Orthogonal":
        return cls(matrix=np.eye(p))

    def compose(self, other: "Orthogonal") -> "Orthogonal":
        return Orthogonal(matrix=self.matrix @ other.matrix)

    def inverse(self) -> "Orthogonal":
        return Orthogonal(matrix=self.matrix.T)


class Lorentz(FrozenModel):
    """Element of O⁺(k,1): preserves the Minkowski form and the upper sheet."""

    kind: Literal["lorentz"] = "lorentz"
    matrix: Array

    @field_validator("matrix", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        return _square(value, "matrix")

    @field_validator("matrix")
    @classmethod
    def _check(cls, v: np.ndarray) -> np.ndarray:
        j = np.diag(np.r_[np.ones(v.shape[0] - 1), -1.0])
        scale = max(1.0, float(np.max(np.abs(v))) ** 2)
        if np.max(np.abs(v.T @ j @ v - j)) > INVARIANT_TOL * scale:
            raise ValueError("matrix does not preserve the Minkowski form")
        if v[-1, -1] < 1.0 - INVARIANT_TOL * scale:
            raise ValueError("matrix reverses time orientation")
        return v

    @classmethod
    def identity(cls, k: int) -> "Lorentz":
        return cls(matrix=np.eye(k + 1))

    def compose(self, other: "Lorentz") -> "Lorentz":
        return Lorentz(matrix=self.matrix @ other.matrix)

    def inverse(self) -> "Lorentz":
        j = np.diag(np.r_[np.ones(self.matrix.shape[0] - 1), -1.0])
        return Lorentz(matrix=j @ self.matrix.T @ j)


class TorusElement(FrozenModel):
    """Product g₁ × … × g_p of planar rotations/reflections."""

    kind: Literal["torus"] = "torus"
    blocks: Array

    @field_validator("blocks", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 2, 2)
        return arr

    @field_validator("blocks")
    @classmethod
    def _check(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 3 or v.shape[1:] != (2, 2):
            raise ValueError("torus isometry blocks must have shape (p, 2, 2)")
        if not all(_is_orthogonal(b) for b in v):
            raise ValueError("every torus block must lie in O(2)")
        return v

    @classmethod
    def identity(cls, p: int) -> "TorusElement":
        return cls(blocks=np.tile(np.eye(2), (p, 1, 1)))

    @classmethod
    def diagonal(cls, g: Any, p: int) -> "TorusElement":
        """g × … × g."""
        return cls(blocks=np.tile(np.asarray(g, dtype=float), (p, 1, 1)))

    @property
    def determinants(self) -> np.ndarray:
        return np.rint(np.linalg.det(self.blocks))

    def compose(self, other: "TorusElement") -> "TorusElement":
        return TorusElement(blocks=self.blocks @ other.blocks)

    def inverse(self) -> "TorusElement":
        return TorusElement(blocks=np.transpose(self.blocks, (0, 2, 1)))


class SpdConjugation(FrozenModel):
    """X ↦ c·UXUᵀ; c = 1 is the O(p) action used throughout."""

    kind: Literal["spd_conjugation"] = "spd_conjugation"
    matrix: Array
    scale: PositiveFloat = 1.0

    @field_validator("matrix", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        return _square(value, "matrix")

    @field_validator("matrix")
    @classmethod
    def _check(cls, v: np.ndarray) -> np.ndarray:
        if not _is_orthogonal(v):
            raise ValueError("conjugating matrix is not orthogonal")
        return v

    @classmethod
    def identity(cls, p: int) -> "SpdConjugation":
        return cls(matrix=np.eye(p))

    def compose(self, other: "SpdConjugation") -> "SpdConjugation":
        return SpdConjugation(matrix=self.matrix @ other.matrix, scale=self.scale * other.scale)

    def inverse(self) -> "SpdConjugation":
        return SpdConjugation(matrix=self.matrix.T, scale=1.0 / self.scale)


class StiefelPair(FrozenModel):
    """(U, V) ∈ O(p) × O(k) acting by X ↦ UXVᵀ."""

    kind: Literal["stiefel_pair"] = "stiefel_pair"
    left: Array
    right: Array

    @field_validator("left", "right", mode="before")
    @classmethod
    def _reshape(cls, value: Any) -> Any:
        return _square(value, "factor")

    @field_validator("left", "right")
    @classmethod
    def _check(cls, v: np.ndarray) -> np.ndarray:
        if not _is_orthogonal(v):
            raise ValueError("Stiefel isometry factors must be orthogonal")
        return v

    @classmethod
    def identity(cls, p: int, k: int) -> "StiefelPair":
        return cls(left=np.eye(p), right=np.eye(k))

    def compose(self, other: "StiefelPair") -> "StiefelPair":
        return StiefelPair(left=self.left @ other.left, right=self.right @ other.right)

    def inverse(self) -> "StiefelPair":
        return StiefelPair(left=self.left.T, right=self.right.T)


Isometry = Annotated[
    Union[Orthogonal, Lorentz, TorusElement, SpdConjugation, StiefelPair],
    Field(discriminator="kind"),
]
