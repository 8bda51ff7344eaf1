from pydantic_settings import BaseSettings
from typing import Optional
from functools import lru_cache


class Settings(BaseSettings):
    # Project metadata
    PROJECT_NAME: str = "EquiMean"
    VERSION: str = "0.1.0"
    API_V1_STR: str = "/api/v1"

    # Logging
    LOG_LEVEL: str = "INFO"

    # Randomness
    DEFAULT_SEED: int = 0

    # Fréchet mean solvers
    FRECHET_MAX_ITERS: int = 200
    FRECHET_TOL: float = 1e-10

    # Metropolis-Hastings defaults (1500 iterations, one third burn-in)
    MCMC_ITERATIONS: int = 1500
    MCMC_BURN_IN: int = 500
    MCMC_THIN: int = 1
    RANDOM_WALK_SCALE: float = 0.3

    # Monte Carlo draw counts
    POPULATION_MEAN_DRAWS: int = 20000
    INNER_MC_DRAWS: int = 2000

    # Samplers
    GIBBS_BURN_IN: int = 50
    LANGEVIN_MIN_ACCEPTANCE: float = 1e-4
    LANGEVIN_TRIAL_SIZE: int = 20000

    # Torus model
    TORUS_QUADRATURE_POINTS: int = 64
    TORUS_MAX_DIM: int = 4

    # Method-of-moments solver for the Wishart orbit
    MOM_MAX_ITERS: int = 50
    MOM_DAMPING: float = 1.0
    MOM_TOL: float = 1e-10
    # convergence needs residual <= 0.05 * max(|log(X/n)|_F, floor)
    MOM_TARGET_FLOOR: float = 0.1

    # Simulation harness
    TABLE1_REPLICATES: int = 500
    TABLE2_REPLICATES: int = 1000
    EQUIMEAN_WORKERS: int = 1

    # Optional CSV dumps of MCMC traces (debug)
    TRACE_DUMP_DIR: Optional[str] = None

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    """
    Creates a cached instance of settings.
    This prevents reading the .env file multiple times.
    """
    return Settings()


settings = get_settings()
