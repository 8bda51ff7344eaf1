"""
Solver configurations, chain records and estimator results.
"""

from typing import Any, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from typing_extensions import Annotated

from app.core.config import settings
from app.models.base import Array, FrozenModel
from app.models.params import TorusModelParams, WishartOrbit
from app.models.points import ManifoldPoint


class FrechetSolverConfig(FrozenModel):
    max_iters: int = Field(default_factory=lambda: settings.FRECHET_MAX_ITERS, ge=1)
    tol: PositiveFloat = Field(default_factory=lambda: settings.FRECHET_TOL)
    # Initial step length of the Riemannian gradient iteration; halved on ascent
    step_size: PositiveFloat = 1.0


class FrechetResult(FrozenModel):
    mean: ManifoldPoint
    objective: float
    converged: bool
    iterations: int
    n_draws: Optional[int] = None


class UniformHaar(FrozenModel):
    """Independence proposals from the Haar law of a compact group."""

    kind: Literal["uniform_haar"] = "uniform_haar"


class RandomWalk(FrozenModel):
    """Symmetric left-multiplicative perturbations of tunable scale."""

    kind: Literal["random_walk"] = "random_walk"
    scale: PositiveFloat = Field(default_factory=lambda: settings.RANDOM_WALK_SCALE)


ProposalSpec = Annotated[Union[UniformHaar, RandomWalk], Field(discriminator="kind")]


class McmcConfig(FrozenModel):
    iterations: int = Field(default_factory=lambda: settings.MCMC_ITERATIONS)
    burn_in: int = Field(default_factory=lambda: settings.MCMC_BURN_IN)
    thin: int = Field(default_factory=lambda: settings.MCMC_THIN)
    proposal: ProposalSpec = Field(default_factory=UniformHaar)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check(self) -> "McmcConfig":
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        return self

    @property
    def retained(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


class MreDiagnostics(FrozenModel):
    acceptance_rate: float = Field(ge=0.0, le=1.0)
    chain_length: int
    frechet_converged: bool
    effective_sample_size: Optional[float] = None


class ChainState(BaseModel):
    """Mutable cursor of a running chain."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    current: Any
    log_target: float
    accepted_count: int = 0
    step_index: int = 0


class ChainTrace(FrozenModel):
    """
    Retained states plus per-iteration bookkeeping.

    ``log_targets`` and ``accepted`` cover every iteration (burn-in included);
    ``states`` holds the retained draws only: matrices for group chains,
    angle vectors for torus chains.
    """

    states: List[Any]
    log_targets: Array
    accepted: Array
    acceptance_rate: float = Field(ge=0.0, le=1.0)
    seed: Optional[int] = None

    @property
    def iterations(self) -> int:
        return int(self.accepted.size)

    def recount_acceptance(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted.size else 0.0


class MomSolution(FrozenModel):
    """Σ_MoM orbit with the log-eigenvalue residual of the moment equation."""

    orbit: WishartOrbit
    residual: float = Field(ge=0.0)
    converged: bool
    iterations: int


class TorusFit(FrozenModel):
    params: TorusModelParams
    log_likelihood: float
    converged: bool
