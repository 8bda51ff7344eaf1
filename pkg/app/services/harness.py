"""
Risk simulations: paired replicates, scenario tables and output formatting.

Replicate r of a scenario draws its data from ``default_rng([seed, r])`` and
every estimator gets its own stream ``default_rng([seed, r, k])``, so rows
are reproducible and independent of worker scheduling.
"""

import csv
import hashlib
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import TypeAdapter, ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, InvariantViolation, NumericalError, UndefinedEstimate
from app.models.params import ModelParams, TorusModelParams, TorusOrbit, VmfParams, WishartOrbit, WishartParams
from app.models.points import ManifoldPoint, SpdMatrix, TorusElement, UnitVector
from app.models.results import McmcConfig, RandomWalk
from app.models.simulation import ESTIMATORS, RiskRow, SimConfig
from app.services.distributions import draw_array, transform_params
from app.services.estimators import (
    adaptive_mre,
    fit_torus_mle,
    mre_vmf_closed_form,
    solve_wishart_mom,
    standard_wishart_factors,
    wishart_log_mean_diagonal,
    wishart_mle_frechet,
)
from app.services.frechet import sample_frechet_mean
from app.services.manifolds import distance, haar_orthogonal, make_points, random_torus_element

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("scenario", "estimator", "p", "n", "kappa", "lambda", "reps", "failures", "risk", "mc_se", "seed")

TABLE1_GRID = [(p, n) for p in (2, 4) for n in (5, 10, 40)]
TABLE1_ESTIMATORS = ["sample_frechet", "mle", "mre_mle_orbit", "mre_mom_orbit"]

TABLE2_P = 3
TABLE2_GRID = [(2.0, 1.0, 5), (2.0, 1.0, 25), (2.0, 3.0, 5), (2.0, 3.0, 15), (2.0, 3.0, 25)]
TABLE2_ESTIMATORS = ["sample_frechet", "mle", "adaptive_mre"]
TABLE2_REFERENCE = "adaptive_mre"

# Keys accepted in override dictionaries (CLI flags with dashes replaced)
OVERRIDE_KEYS = {
    "reps",
    "seed",
    "mcmc_iters",
    "burn_in",
    "thin",
    "rw_scale",
    "workers",
    "rotate_truth",
    "inner_draws",
    "population_draws",
    "estimators",
    "p",
    "n",
    "kappa",
    "lambda",
}

# Second seed word of the truth stream; replicate indices stay below it
_TRUTH_STREAM = 2 ** 31 - 1


class Truth(NamedTuple):
    params: ModelParams
    mean: ManifoldPoint


class _Replicate:
    """Data of one replicate plus lazily shared fits."""

    def __init__(self, cfg: SimConfig, truth: Truth, points: List[ManifoldPoint]):
        self.cfg = cfg
        self.truth = truth
        self.points = points
        self._torus_fit = None

    def torus_fit(self):
        if self._torus_fit is None:
            self._torus_fit = fit_torus_mle(self.points)
        return self._torus_fit


# ---------------------------------------------------------------------------
# Estimators run by the harness: (replicate, rng) -> estimate of the truth mean
# ---------------------------------------------------------------------------


def _wishart_sample(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return SpdMatrix(entries=rep.points[0].entries / rep.cfg.n)


def _wishart_mle(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return wishart_mle_frechet(rep.points[0], rep.cfg.n, rng, n_mc=rep.cfg.inner_draws)


def _wishart_mre(rep: _Replicate, rng: np.random.Generator, orbit: Any) -> ManifoldPoint:
    estimate, _, _ = adaptive_mre(
        rep.points,
        orbit,
        rep.cfg.mcmc,
        rng,
        dof=rep.cfg.n,
        n_mc=rep.cfg.inner_draws,
        population_draws=rep.cfg.population_draws,
    )
    return SpdMatrix(entries=estimate.entries / rep.cfg.n)


def _wishart_mre_mle(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return _wishart_mre(rep, rng, "mle")


def _wishart_mre_mom(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    solution = solve_wishart_mom(rep.points[0], rep.cfg.n, rng, n_mc=rep.cfg.inner_draws)
    if not solution.converged:
        raise UndefinedEstimate(f"MoM residual {solution.residual:.3g} above tolerance")
    return _wishart_mre(rep, rng, solution.orbit)


def _wishart_mre_true(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    """MRE on the orbit of the true Σ; the MoM orbit pins log det δ to log det(X/n), this one does not."""
    sigma = rep.truth.params.sigma.entries
    return _wishart_mre(rep, rng, WishartOrbit.from_eigenvalues(np.linalg.eigvalsh(sigma), rep.cfg.n))


def _frechet(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return sample_frechet_mean(rep.points).mean


def _torus_mle(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return rep.torus_fit().params.mu


def _torus_adaptive(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    fit = rep.torus_fit().params
    estimate, _, _ = adaptive_mre(rep.points, TorusOrbit(kappa=fit.kappa, lam=fit.lam), rep.cfg.mcmc, rng)
    return estimate


def _vmf_closed_form(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return mre_vmf_closed_form(rep.points)


def _vmf_adaptive(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    estimate, _, _ = adaptive_mre(rep.points, "mle", rep.cfg.mcmc, rng)
    return estimate


def _oracle(rep: _Replicate, rng: np.random.Generator) -> ManifoldPoint:
    return rep.truth.mean


HARNESS_ESTIMATORS: Dict[str, Dict[str, Callable[[_Replicate, np.random.Generator], ManifoldPoint]]] = {
    "wishart": {
        "sample_frechet": _wishart_sample,
        "mle": _wishart_mle,
        "mre_mle_orbit": _wishart_mre_mle,
        "mre_mom_orbit": _wishart_mre_mom,
        "oracle": _oracle,
        "mre_true_orbit": _wishart_mre_true,
    },
    "torus": {
        "sample_frechet": _frechet,
        "mle": _torus_mle,
        "adaptive_mre": _torus_adaptive,
        "oracle": _oracle,
    },
    "vmf": {
        "sample_frechet": _frechet,
        "mre_closed_form": _vmf_closed_form,
        "adaptive_mre": _vmf_adaptive,
        "oracle": _oracle,
    },
}


# ---------------------------------------------------------------------------
# Truth and replicates
# ---------------------------------------------------------------------------


def scenario_truth(cfg: SimConfig) -> Truth:
    """True parameters and true Fréchet mean (of X/n for Wishart scenarios)."""
    rng = np.random.default_rng([cfg.seed, _TRUTH_STREAM])
    if cfg.family == "wishart":
        eigenvalues = np.arange(1.0, cfg.p + 1.0)
        factors = standard_wishart_factors(cfg.p, cfg.n, cfg.population_draws, rng)
        mean_diag = np.exp(wishart_log_mean_diagonal(eigenvalues, factors))
        u = haar_orthogonal(cfg.p, rng) if cfg.rotate_truth else np.eye(cfg.p)
        params = WishartParams(dof=cfg.n, sigma=SpdMatrix.symmetrized((u * eigenvalues) @ u.T))
        return Truth(params=params, mean=SpdMatrix.symmetrized((u * mean_diag) @ u.T))
    if cfg.family == "torus":
        params = TorusModelParams.constant(np.full(cfg.p, np.pi / 2), cfg.kappa, cfg.lam)
        if cfg.rotate_truth:
            params = transform_params(TorusElement(blocks=random_torus_element(cfg.p, rng)), params)
        return Truth(params=params, mean=params.mu)
    mu = np.eye(cfg.p)[0]
    if cfg.rotate_truth:
        mu = haar_orthogonal(cfg.p, rng) @ mu
    params = VmfParams(mu=UnitVector.normalized(mu), kappa=cfg.kappa)
    return Truth(params=params, mean=params.mu)


def _replicate_data(cfg: SimConfig, truth: Truth, r: int) -> List[ManifoldPoint]:
    rng = np.random.default_rng([cfg.seed, r])
    # a Wishart replicate is a single observation with n degrees of freedom
    size = 1 if cfg.family == "wishart" else cfg.n
    kind, arr, radius = draw_array(truth.params, size, rng)
    logger.debug(f"{cfg.scenario} replicate {r}: data sha256 {hashlib.sha256(arr.tobytes()).hexdigest()}")
    return make_points(kind, arr, radius)


def replicate_losses(cfg: SimConfig, truth: Truth, r: int) -> List[Optional[float]]:
    """Squared-distance losses of every estimator on replicate ``r``; None marks a failure."""
    rep = _Replicate(cfg, truth, _replicate_data(cfg, truth, r))
    registry = HARNESS_ESTIMATORS[cfg.family]
    streams = ESTIMATORS[cfg.family]
    losses: List[Optional[float]] = []
    for name in cfg.estimators:
        rng = np.random.default_rng([cfg.seed, r, streams.index(name) + 1])
        try:
            estimate = registry[name](rep, rng)
        except InvariantViolation:
            raise
        except NumericalError as exc:
            logger.warning(f"{cfg.scenario} replicate {r}: {name} failed: {exc}")
            losses.append(None)
            continue
        if estimate.manifold != truth.mean.manifold:
            raise InvariantViolation(f"{name} returned a {estimate.manifold} point for {truth.mean.manifold} data")
        loss = distance(estimate, truth.mean) ** 2
        if not np.isfinite(loss):
            raise InvariantViolation(f"{name} produced a non-finite loss on replicate {r}")
        losses.append(float(loss))
    return losses


def _run_replicates(cfg: SimConfig, truth: Truth) -> List[List[Optional[float]]]:
    job = partial(replicate_losses, cfg, truth)
    if cfg.workers <= 1:
        return [job(r) for r in range(cfg.replicates)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        # map() yields in submission order, so output does not depend on scheduling
        return list(pool.map(job, range(cfg.replicates)))


# ---------------------------------------------------------------------------
# Risk estimation
# ---------------------------------------------------------------------------


def _scenario_fields(cfg: SimConfig) -> Dict[str, Any]:
    return {
        "scenario": cfg.scenario,
        "p": cfg.p,
        "n": cfg.n,
        "kappa": cfg.kappa,
        "lam": cfg.lam,
        "seed": cfg.seed,
    }


def _aborted_rows(cfg: SimConfig, message: str, failures: int = 0) -> List[RiskRow]:
    return [
        RiskRow(
            estimator=name,
            reps=0,
            failures=failures,
            status="aborted",
            message=message,
            **_scenario_fields(cfg),
        )
        for name in cfg.estimators
    ]


def simulate(cfg: SimConfig) -> Tuple[List[RiskRow], Optional[np.ndarray]]:
    """Risk rows plus the (used replicates × estimators) loss matrix behind them."""
    logger.info(f"scenario {cfg.scenario}: {cfg.replicates} replicates of {', '.join(cfg.estimators)}")
    try:
        truth = scenario_truth(cfg)
        results = _run_replicates(cfg, truth)
    except (InvariantViolation, ValidationError) as exc:
        logger.error(f"scenario {cfg.scenario} aborted: {exc}")
        return _aborted_rows(cfg, str(exc)), None

    table = np.array([[np.nan if v is None else v for v in row] for row in results], dtype=float)
    used = table[~np.isnan(table).any(axis=1)]
    failures = cfg.replicates - used.shape[0]
    if failures:
        logger.warning(f"scenario {cfg.scenario}: {failures} replicates dropped after estimator failures")
    if used.shape[0] == 0:
        return _aborted_rows(cfg, "every replicate failed", failures), None

    count = used.shape[0]
    rows = []
    for j, name in enumerate(cfg.estimators):
        losses = used[:, j]
        se = float(np.std(losses, ddof=1) / np.sqrt(count)) if count > 1 else 0.0
        rows.append(
            RiskRow(
                estimator=name,
                reps=count,
                failures=failures,
                risk=float(np.mean(losses)),
                mc_se=se,
                **_scenario_fields(cfg),
            )
        )
    logger.info(f"scenario {cfg.scenario} done: {count} replicates used")
    return rows, used


def estimate_risk(cfg: SimConfig) -> List[RiskRow]:
    rows, _ = simulate(cfg)
    return rows


def risk_ratio(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Ratio of mean paired losses with its delta-method standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mean_b = float(np.mean(b))
    if mean_b <= 0:
        raise UndefinedEstimate("reference risk is zero; ratio undefined")
    ratio = float(np.mean(a)) / mean_b
    if a.size < 2:
        return ratio, 0.0
    cov = np.cov(a, b)
    var = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio ** 2 * cov[1, 1]) / (a.size * mean_b ** 2)
    return ratio, float(np.sqrt(max(var, 0.0)))


def ratio_rows(
    cfg: SimConfig, losses: np.ndarray, failures: int, reference: str = TABLE2_REFERENCE
) -> List[RiskRow]:
    if reference not in cfg.estimators:
        return []
    j_ref = cfg.estimators.index(reference)
    rows = []
    for j, name in enumerate(cfg.estimators):
        if j == j_ref:
            continue
        try:
            ratio, se = risk_ratio(losses[:, j], losses[:, j_ref])
        except UndefinedEstimate as exc:
            logger.warning(f"{cfg.scenario}: {name}/{reference}: {exc}")
            continue
        rows.append(
            RiskRow(
                estimator=f"{name}/{reference}",
                reps=losses.shape[0],
                failures=failures,
                risk=ratio,
                mc_se=se,
                ratio_to=reference,
                **_scenario_fields(cfg),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Scenario tables
# ---------------------------------------------------------------------------


def _check_overrides(overrides: Dict[str, Any]) -> Dict[str, Any]:
    unknown = set(overrides) - OVERRIDE_KEYS
    if unknown:
        raise ConfigError(f"unknown option(s): {', '.join(sorted(unknown))}")
    return {k: v for k, v in overrides.items() if v is not None}


def _mcmc_config(overrides: Dict[str, Any], seed: int) -> McmcConfig:
    fields: Dict[str, Any] = {"seed": seed}
    if "mcmc_iters" in overrides:
        fields["iterations"] = int(overrides["mcmc_iters"])
    if "burn_in" in overrides:
        fields["burn_in"] = int(overrides["burn_in"])
    elif "iterations" in fields and fields["iterations"] <= settings.MCMC_BURN_IN:
        fields["burn_in"] = fields["iterations"] // 3
    if "thin" in overrides:
        fields["thin"] = int(overrides["thin"])
    if "rw_scale" in overrides:
        fields["proposal"] = RandomWalk(scale=float(overrides["rw_scale"]))
    return McmcConfig(**fields)


def _build_config(base: Dict[str, Any], overrides: Dict[str, Any], default_reps: int) -> SimConfig:
    seed = int(overrides.get("seed", settings.DEFAULT_SEED))
    estimators = overrides.get("estimators", base.pop("estimators"))
    if isinstance(estimators, str):
        estimators = [e.strip() for e in estimators.split(",") if e.strip()]
    try:
        return SimConfig(
            replicates=int(overrides.get("reps", default_reps)),
            estimators=list(estimators),
            mcmc=_mcmc_config(overrides, seed),
            seed=seed,
            workers=int(overrides.get("workers", settings.EQUIMEAN_WORKERS)),
            rotate_truth=bool(overrides.get("rotate_truth", False)),
            inner_draws=int(overrides.get("inner_draws", settings.INNER_MC_DRAWS)),
            population_draws=int(overrides.get("population_draws", settings.POPULATION_MEAN_DRAWS)),
            **base,
        )
    except ValidationError as exc:
        raise ConfigError(f"invalid simulation configuration: {exc}") from exc


def table1_name(p: int, n: int) -> str:
    return f"table1_p{p}_n{n}"


def table2_name(kappa: float, lam: float, n: int) -> str:
    return f"table2_k{kappa:g}_l{lam:g}_n{n}"


def table1_config(p: int, n: int, overrides: Optional[Dict[str, Any]] = None) -> SimConfig:
    overrides = _check_overrides(overrides or {})
    base = {"scenario": table1_name(p, n), "family": "wishart", "p": p, "n": n, "estimators": TABLE1_ESTIMATORS}
    return _build_config(base, overrides, settings.TABLE1_REPLICATES)


def table2_config(kappa: float, lam: float, n: int, overrides: Optional[Dict[str, Any]] = None) -> SimConfig:
    overrides = _check_overrides(overrides or {})
    base = {
        "scenario": table2_name(kappa, lam, n),
        "family": "torus",
        "p": TABLE2_P,
        "n": n,
        "kappa": kappa,
        "lam": lam,
        "estimators": TABLE2_ESTIMATORS,
    }
    return _build_config(base, overrides, settings.TABLE2_REPLICATES)


def _matches(value: Any, wanted: Any) -> bool:
    return wanted is None or float(value) == float(wanted)


def run_table1(overrides: Optional[Dict[str, Any]] = None) -> List[RiskRow]:
    """Wishart scenarios p ∈ {2, 4} × n ∈ {5, 10, 40}, optionally filtered by ``p``/``n``."""
    overrides = _check_overrides(overrides or {})
    rows: List[RiskRow] = []
    for p, n in TABLE1_GRID:
        if _matches(p, overrides.get("p")) and _matches(n, overrides.get("n")):
            rows.extend(estimate_risk(table1_config(p, n, overrides)))
    if not rows:
        raise ConfigError("no Table 1 scenario matches the requested p/n")
    return rows


def _torus_rows(cfg: SimConfig) -> List[RiskRow]:
    rows, losses = simulate(cfg)
    if losses is not None:
        rows.extend(ratio_rows(cfg, losses, cfg.replicates - losses.shape[0]))
    return rows


def run_table2(overrides: Optional[Dict[str, Any]] = None) -> List[RiskRow]:
    """Torus scenarios (p = 3) with risks and ratios to the adaptive MRE."""
    overrides = _check_overrides(overrides or {})
    rows: List[RiskRow] = []
    for kappa, lam, n in TABLE2_GRID:
        if (
            _matches(kappa, overrides.get("kappa"))
            and _matches(lam, overrides.get("lambda"))
            and _matches(n, overrides.get("n"))
        ):
            rows.extend(_torus_rows(table2_config(kappa, lam, n, overrides)))
    if not rows:
        raise ConfigError("no Table 2 scenario matches the requested kappa/lambda/n")
    return rows


def scenario_names() -> List[str]:
    return [table1_name(p, n) for p, n in TABLE1_GRID] + [table2_name(k, l, n) for k, l, n in TABLE2_GRID]


def run_scenario(name: str, overrides: Optional[Dict[str, Any]] = None) -> List[RiskRow]:
    """Run one named scenario of either table."""
    for p, n in TABLE1_GRID:
        if name == table1_name(p, n):
            return estimate_risk(table1_config(p, n, overrides))
    for kappa, lam, n in TABLE2_GRID:
        if name == table2_name(kappa, lam, n):
            return _torus_rows(table2_config(kappa, lam, n, overrides))
    raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(scenario_names())}")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def format_csv(rows: List[RiskRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.scenario,
                row.estimator,
                row.p,
                row.n,
                _fmt(row.kappa),
                _fmt(row.lam),
                row.reps,
                row.failures,
                _fmt(row.risk),
                _fmt(row.mc_se),
                row.seed,
            ]
        )
    return buffer.getvalue()


def format_json(rows: List[RiskRow]) -> str:
    return TypeAdapter(List[RiskRow]).dump_json(rows, indent=2, by_alias=True).decode() + "\n"
