"""
Risk-simulation configuration and result rows.
"""

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import Field, PositiveFloat, model_validator

from app.core.config import settings
from app.models.base import FrozenModel
from app.models.results import McmcConfig

ESTIMATORS: Dict[str, Tuple[str, ...]] = {
    "wishart": ("sample_frechet", "mle", "mre_mle_orbit", "mre_mom_orbit", "oracle", "mre_true_orbit"),
    "torus": ("sample_frechet", "mle", "adaptive_mre", "oracle"),
    "vmf": ("sample_frechet", "mre_closed_form", "adaptive_mre", "oracle"),
}


class SimConfig(FrozenModel):
    scenario: str
    family: Literal["wishart", "torus", "vmf"]
    # matrix size (wishart), number of angles (torus) or ambient dimension (vmf)
    p: int = Field(ge=1)
    n: int = Field(ge=1)
    kappa: Optional[PositiveFloat] = None
    lam: Optional[float] = Field(default=None, alias="lambda")
    replicates: int = Field(ge=1)
    estimators: List[str] = Field(min_length=1)
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    workers: int = Field(default_factory=lambda: settings.EQUIMEAN_WORKERS, ge=1)
    rotate_truth: bool = False
    inner_draws: int = Field(default_factory=lambda: settings.INNER_MC_DRAWS, ge=1)
    population_draws: int = Field(default_factory=lambda: settings.POPULATION_MEAN_DRAWS, ge=1)
    output: Optional[str] = None

    @model_validator(mode="after")
    def _check_family(self) -> "SimConfig":
        unknown = [e for e in self.estimators if e not in ESTIMATORS[self.family]]
        if unknown:
            raise ValueError(f"unknown {self.family} estimators: {', '.join(unknown)}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ValueError("estimators must be distinct")
        if self.family == "wishart" and self.n < self.p:
            raise ValueError(f"degrees of freedom {self.n} below dimension {self.p}")
        if self.family == "torus" and (self.kappa is None or self.lam is None):
            raise ValueError("torus scenarios need kappa and lambda")
        if self.family == "vmf" and (self.kappa is None or self.p < 2):
            raise ValueError("vmf scenarios need kappa and an ambient dimension of at least 2")
        return self


class RiskRow(FrozenModel):
    """
    One estimator's risk in one scenario. Ratio rows (``ratio_to`` set) carry
    the ratio of paired risks in ``risk`` and its delta-method SE in ``mc_se``.
    """

    scenario: str
    estimator: str
    p: int
    n: int
    kappa: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")
    reps: int = Field(ge=0)
    failures: int = Field(ge=0)
    risk: Optional[float] = Field(default=None, ge=0.0)
    mc_se: Optional[float] = Field(default=None, ge=0.0)
    seed: int
    status: Literal["ok", "aborted"] = "ok"
    message: Optional[str] = None
    ratio_to: Optional[str] = None
