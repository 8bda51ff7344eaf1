"""
Request and report models shared by the CLI and the HTTP API.
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import Field, PositiveFloat, model_validator

from app.core.config import settings
from app.models.base import Array, FrozenModel
from app.models.params import (
    HyperbolicParams,
    LangevinParams,
    ModelParams,
    OrbitLabel,
    TorusModelParams,
    VmfParams,
    WishartParams,
    pair_count,
)
from app.models.points import HyperboloidPoint, ManifoldPoint, SpdMatrix, StiefelFrame, TorusPoint, UnitVector
from app.models.results import McmcConfig, MreDiagnostics
from app.models.simulation import RiskRow


def _first(values: np.ndarray) -> float:
    return float(np.ravel(values)[0])


Family = Literal["vmf", "hyperbolic", "langevin", "wishart", "torus"]


class SampleRequest(FrozenModel):
    """
    Draws from a family at its canonical location: e₁ (vmf), the apex
    (hyperbolic), [I_k, 0]ᵀ (langevin), all angles π/2 (torus). Wishart uses
    ``sigma`` if given, else the identity.
    """

    family: Family
    # sphere/hyperboloid dimension k, matrix size p (wishart, langevin) or number of angles (torus)
    dim: int = Field(ge=1)
    k: int = Field(default=1, ge=1)
    kappa: Optional[Array] = None
    lam: Optional[Array] = Field(default=None, alias="lambda")
    dof: Optional[int] = None
    sigma: Optional[Array] = None
    radius: PositiveFloat = 1.0
    n: int = Field(ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)

    @model_validator(mode="after")
    def _check(self) -> "SampleRequest":
        if self.family in ("vmf", "hyperbolic", "torus") and self.kappa is None:
            raise ValueError(f"{self.family} sampling needs kappa")
        if self.family in ("langevin", "torus") and self.lam is None:
            raise ValueError(f"{self.family} sampling needs lambda")
        if self.family == "wishart" and self.dof is None:
            raise ValueError("wishart sampling needs dof")
        if self.family == "langevin" and self.k > self.dim:
            raise ValueError("langevin frames need k <= p")
        if self.family == "torus":
            if self.kappa.size not in (1, self.dim):
                raise ValueError(f"torus kappa needs 1 or {self.dim} values")
            if self.lam.size not in (1, pair_count(self.dim)):
                raise ValueError(f"torus lambda needs 1 or {pair_count(self.dim)} values")
        return self

    def to_params(self) -> ModelParams:
        if self.family == "vmf":
            return VmfParams(mu=UnitVector(coords=np.eye(self.dim + 1)[0]), kappa=_first(self.kappa))
        if self.family == "hyperbolic":
            return HyperbolicParams(
                mu=HyperboloidPoint.apex(self.dim, self.radius), kappa=_first(self.kappa), radius=self.radius
            )
        if self.family == "langevin":
            return LangevinParams(frame=StiefelFrame.canonical(self.dim, self.k), lam=_first(self.lam))
        if self.family == "wishart":
            sigma = np.eye(self.dim) if self.sigma is None else self.sigma
            return WishartParams(dof=self.dof, sigma=SpdMatrix(entries=sigma))
        kappa = np.broadcast_to(np.ravel(self.kappa), (self.dim,))
        lam = np.broadcast_to(np.ravel(self.lam), (pair_count(self.dim),))
        return TorusModelParams(mu=TorusPoint.from_angles(np.full(self.dim, np.pi / 2)), kappa=kappa, lam=lam)


class FrechetRequest(FrozenModel):
    points: List[ManifoldPoint] = Field(min_length=1)
    metric: Optional[Literal["geodesic", "extrinsic"]] = None


EstimatorName = Literal["frechet", "mre_closed_form", "mre_mc", "adaptive_mre", "mle", "mom_orbit"]


class EstimateRequest(FrozenModel):
    estimator: EstimatorName
    metric: Optional[Literal["geodesic", "extrinsic"]] = None
    orbit: Optional[OrbitLabel] = None
    orbit_estimator: Literal["mle", "mom"] = "mle"
    dof: Optional[int] = None
    scaling: bool = False
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    inner_draws: Optional[int] = Field(default=None, ge=1)
    # draws behind E P at the canonical representative (Wishart orbits)
    population_draws: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)


class EstimateWithData(EstimateRequest):
    points: List[ManifoldPoint] = Field(min_length=1)


class EstimateReport(FrozenModel):
    estimator: str
    estimate: Optional[ManifoldPoint] = None
    orbit: Optional[OrbitLabel] = None
    diagnostics: Optional[MreDiagnostics] = None
    objective: Optional[float] = None
    converged: Optional[bool] = None
    residual: Optional[float] = None


class SimulationRequest(FrozenModel):
    scenario: str
    overrides: Dict[str, Any] = Field(default_factory=dict)


class SimulationStatus(FrozenModel):
    task_id: str
    scenario: str
    status: Literal["pending", "running", "completed", "failed"]
    rows: List[RiskRow] = Field(default_factory=list)
    detail: Optional[str] = None


class SampleResponse(FrozenModel):
    family: Family
    seed: int
    points: List[ManifoldPoint]
