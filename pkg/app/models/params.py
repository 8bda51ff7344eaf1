"""
Parameters of the five parametric families and labels of parameter-space
orbits under the matching isometry group.
"""

from typing import Any, Literal, Union

import numpy as np
from pydantic import Field, PositiveFloat, field_validator, model_validator
from typing_extensions import Annotated

from app.models.base import Array, FrozenModel
from app.models.points import HyperboloidPoint, SpdMatrix, StiefelFrame, TorusPoint, UnitVector


def pair_count(p: int) -> int:
    return p * (p - 1) // 2


class VmfParams(FrozenModel):
    family: Literal["vmf"] = "vmf"
    mu: UnitVector
    kappa: PositiveFloat


class HyperbolicParams(FrozenModel):
    family: Literal["hyperbolic"] = "hyperbolic"
    mu: HyperboloidPoint
    kappa: PositiveFloat
    radius: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _check_radius(self) -> "HyperbolicParams":
        if abs(self.mu.radius - self.radius) > 1e-12 * self.radius:
            raise ValueError("mu does not lie on the hyperboloid of the given radius")
        return self


class LangevinParams(FrozenModel):
    """θ = λH with H a Stiefel frame."""

    family: Literal["langevin"] = "langevin"
    frame: StiefelFrame = Field(alias="H")
    lam: PositiveFloat = Field(alias="lambda")


class WishartParams(FrozenModel):
    family: Literal["wishart"] = "wishart"
    dof: int
    sigma: SpdMatrix

    @model_validator(mode="after")
    def _check_dof(self) -> "WishartParams":
        if self.dof < self.sigma.p:
            raise ValueError(f"degrees of freedom {self.dof} below dimension {self.sigma.p}")
        return self


class TorusModelParams(FrozenModel):
    """Location μ, concentrations κ and interactions λ_ij (i < j, row-major)."""

    family: Literal["torus"] = "torus"
    mu: TorusPoint
    kappa: Array
    lam: Array = Field(alias="lambda")

    @model_validator(mode="after")
    def _check_shapes(self) -> "TorusModelParams":
        p = self.mu.p
        if self.kappa.shape != (p,):
            raise ValueError(f"kappa must have length {p}")
        if np.any(self.kappa <= 0):
            raise ValueError("every kappa_i must be positive")
        if self.lam.shape != (pair_count(p),):
            raise ValueError(f"lambda must have length {pair_count(p)}")
        return self

    @property
    def p(self) -> int:
        return self.mu.p

    @classmethod
    def constant(cls, mu_angles: Any, kappa: float, lam: float) -> "TorusModelParams":
        a = np.atleast_1d(np.asarray(mu_angles, dtype=float))
        p = a.size
        return cls(
            mu=TorusPoint.from_angles(a),
            kappa=np.full(p, float(kappa)),
            lam=np.full(pair_count(p), float(lam)),
        )


ModelParams = Annotated[
    Union[VmfParams, HyperbolicParams, LangevinParams, WishartParams, TorusModelParams],
    Field(discriminator="family"),
]


class VmfOrbit(FrozenModel):
    kind: Literal["vmf"] = "vmf"
    kappa: PositiveFloat


class HyperbolicOrbit(FrozenModel):
    kind: Literal["hyperbolic"] = "hyperbolic"
    kappa: PositiveFloat
    radius: PositiveFloat = 1.0


class LangevinOrbit(FrozenModel):
    kind: Literal["langevin"] = "langevin"
    lam: PositiveFloat = Field(alias="lambda")


class WishartOrbit(FrozenModel):
    """O(p)-orbit of Σ, labelled by its eigenvalues; dof is the known model constant."""

    kind: Literal["wishart"] = "wishart"
    eigenvalues: Array
    dof: int

    @field_validator("eigenvalues")
    @classmethod
    def _check_sorted(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or v.size < 1:
            raise ValueError("eigenvalues must be a non-empty vector")
        if np.any(v <= 0):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(v) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        return v

    @model_validator(mode="after")
    def _check_dof(self) -> "WishartOrbit":
        if self.dof < self.eigenvalues.size:
            raise ValueError("degrees of freedom below dimension")
        return self

    @classmethod
    def from_eigenvalues(cls, eigenvalues: Any, dof: int) -> "WishartOrbit":
        return cls(eigenvalues=np.sort(np.asarray(eigenvalues, dtype=float))[::-1], dof=dof)


class TorusOrbit(FrozenModel):
    kind: Literal["torus"] = "torus"
    kappa: Array
    lam: Array = Field(alias="lambda")

    @model_validator(mode="after")
    def _check(self) -> "TorusOrbit":
        if self.kappa.ndim != 1 or np.any(self.kappa <= 0):
            raise ValueError("kappa must be a vector of positive reals")
        if self.lam.shape != (pair_count(self.kappa.size),):
            raise ValueError("lambda length does not match kappa")
        return self

    @property
    def p(self) -> int:
        return self.kappa.size


OrbitLabel = Annotated[
    Union[VmfOrbit, HyperbolicOrbit, LangevinOrbit, WishartOrbit, TorusOrbit],
    Field(discriminator="kind"),
]
