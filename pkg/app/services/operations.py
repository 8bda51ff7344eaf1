"""
Request-level operations shared by the CLI and the HTTP API.
"""

import logging
from typing import List, Sequence

import numpy as np

from app.core.errors import ConfigError
from app.models.params import TorusOrbit, VmfOrbit
from app.models.points import ManifoldPoint, UnitVector
from app.models.requests import EstimateReport, EstimateRequest, FrechetRequest, SampleRequest
from app.models.results import FrechetResult
from app.services.distributions import sample
from app.services.estimators import (
    adaptive_mre,
    estimate_orbit,
    fit_torus_mle,
    mre_hyperbolic_closed_form,
    mre_langevin_single_obs,
    mre_monte_carlo,
    mre_vmf_closed_form,
    solve_wishart_mom,
    vmf_kappa_mle,
    wishart_mle_frechet,
)
from app.services.frechet import sample_frechet_mean
from app.services.manifolds import Metric, stack_points

logger = logging.getLogger(__name__)


class EstimationService:
    """Runs one sampling, averaging or estimation request end to end."""

    def draw_sample(self, request: SampleRequest) -> List[ManifoldPoint]:
        theta = request.to_params()
        logger.info(f"Drawing {request.n} points from {theta.family} (seed {request.seed})")
        return sample(theta, request.n, np.random.default_rng(request.seed))

    def frechet_mean(self, request: FrechetRequest) -> FrechetResult:
        return sample_frechet_mean(request.points, request.metric)

    def estimate(self, points: Sequence[ManifoldPoint], request: EstimateRequest) -> EstimateReport:
        """
        Apply one estimator to a data set.

        Args:
            points: homogeneous sample on one manifold
            request: estimator name and its options

        Returns:
            The estimate together with whatever the estimator reports
            (orbit, chain diagnostics, objective, convergence, residual).
        """
        kind = stack_points(points)[0]
        rng = np.random.default_rng(request.seed)
        cfg = request.mcmc if request.mcmc.seed is not None else request.mcmc.model_copy(update={"seed": request.seed})
        logger.info(f"Running {request.estimator} on {len(points)} {kind} points")

        if request.estimator == "frechet":
            result = sample_frechet_mean(points, request.metric)
            return EstimateReport(
                estimator=request.estimator,
                estimate=result.mean,
                objective=result.objective,
                converged=result.converged,
            )
        if request.estimator == "mre_closed_form":
            return EstimateReport(estimator=request.estimator, estimate=self._closed_form(kind, points, request))
        if request.estimator == "mre_mc":
            if request.orbit is None:
                raise ConfigError("the Monte Carlo MRE needs an orbit")
            estimate, diagnostics = mre_monte_carlo(
                points, request.orbit, cfg, rng, scaling=request.scaling, population_draws=request.population_draws
            )
            return EstimateReport(
                estimator=request.estimator, estimate=estimate, orbit=request.orbit, diagnostics=diagnostics
            )
        if request.estimator == "adaptive_mre":
            estimate, orbit, diagnostics = adaptive_mre(
                points,
                request.orbit if request.orbit is not None else request.orbit_estimator,
                cfg,
                rng,
                dof=request.dof,
                scaling=request.scaling,
                n_mc=request.inner_draws,
                population_draws=request.population_draws,
            )
            return EstimateReport(estimator=request.estimator, estimate=estimate, orbit=orbit, diagnostics=diagnostics)
        if request.estimator == "mle":
            return self._mle(kind, points, request, rng)
        return self._mom(kind, points, request, rng)

    def _closed_form(self, kind: str, points: Sequence[ManifoldPoint], request: EstimateRequest) -> ManifoldPoint:
        if kind == "sphere":
            return mre_vmf_closed_form(points, request.metric or Metric.GEODESIC)
        if kind == "hyperboloid":
            return mre_hyperbolic_closed_form(points)
        if kind == "stiefel":
            return mre_langevin_single_obs(points)
        raise ConfigError(f"no closed-form MRE for {kind} data; use mre_mc or adaptive_mre")

    def _mle(
        self, kind: str, points: Sequence[ManifoldPoint], request: EstimateRequest, rng: np.random.Generator
    ) -> EstimateReport:
        if kind == "sphere":
            _, xs, _ = stack_points(points)
            return EstimateReport(
                estimator=request.estimator,
                estimate=UnitVector.normalized(xs.sum(axis=0)),
                orbit=VmfOrbit(kappa=vmf_kappa_mle(xs)),
            )
        if kind == "spd":
            dof = self._require_dof(request)
            return EstimateReport(
                estimator=request.estimator,
                estimate=wishart_mle_frechet(points, dof, rng, n_mc=request.inner_draws),
                orbit=estimate_orbit(points, "mle", rng, dof=dof),
            )
        if kind == "torus":
            fit = fit_torus_mle(points)
            return EstimateReport(
                estimator=request.estimator,
                estimate=fit.params.mu,
                orbit=TorusOrbit(kappa=fit.params.kappa, lam=fit.params.lam),
                objective=fit.log_likelihood,
                converged=fit.converged,
            )
        raise ConfigError(f"no MLE for {kind} data")

    def _mom(
        self, kind: str, points: Sequence[ManifoldPoint], request: EstimateRequest, rng: np.random.Generator
    ) -> EstimateReport:
        if kind != "spd":
            raise ConfigError("the method-of-moments orbit is only defined for Wishart data")
        solution = solve_wishart_mom(points, self._require_dof(request), rng, n_mc=request.inner_draws)
        return EstimateReport(
            estimator=request.estimator,
            orbit=solution.orbit,
            converged=solution.converged,
            residual=solution.residual,
        )

    @staticmethod
    def _require_dof(request: EstimateRequest) -> int:
        if request.dof is None:
            raise ConfigError("Wishart estimators need the degrees of freedom (dof)")
        return request.dof


estimation_service = EstimationService()
