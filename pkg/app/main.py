from fastapi import FastAPI, APIRouter, HTTPException, Depends, BackgroundTasks
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import logging

from pydantic import ValidationError

from app.api.deps import SimulationStore, get_app_settings, get_estimation_service, get_simulation_store
from app.core.config import Settings, settings
from app.core.errors import ConfigError, EquiMeanError, NumericalError
from app.core.logging import configure_logging
from app.models.requests import (
    EstimateReport,
    EstimateWithData,
    FrechetRequest,
    SampleRequest,
    SampleResponse,
    SimulationRequest,
    SimulationStatus,
)
from app.models.results import FrechetResult
from app.services.harness import run_scenario, scenario_names
from app.services.operations import EstimationService

# Set up logging
configure_logging()
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title=settings.PROJECT_NAME,
    description="Equivariant estimation of Fréchet means on manifolds",
    version=settings.VERSION,
)

# Set up CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Create API router
api_router = APIRouter()


def run_simulation_task(store: SimulationStore, task_id: str, request: SimulationRequest) -> None:
    """Background body of POST /simulations."""
    store.update(task_id, "running")
    try:
        rows = run_scenario(request.scenario, request.overrides)
    except (EquiMeanError, ValidationError) as e:
        logger.error(f"Simulation {task_id} failed: {str(e)}")
        store.update(task_id, "failed", detail=str(e))
        return
    store.update(task_id, "completed", rows=rows)
    logger.info(f"Simulation {task_id} completed with {len(rows)} rows")


# Endpoints
@api_router.post("/sample", response_model=SampleResponse)
def draw_sample(request: SampleRequest, service: EstimationService = Depends(get_estimation_service)):
    """
    Draw i.i.d. points from a family at its canonical location.
    """
    points = service.draw_sample(request)
    return SampleResponse(family=request.family, seed=request.seed, points=points)


@api_router.post("/frechet-mean", response_model=FrechetResult)
def frechet_mean(request: FrechetRequest, service: EstimationService = Depends(get_estimation_service)):
    """
    Sample Fréchet mean of the posted points.
    """
    return service.frechet_mean(request)


@api_router.post("/estimate", response_model=EstimateReport)
def estimate(request: EstimateWithData, service: EstimationService = Depends(get_estimation_service)):
    """
    Apply one estimator to the posted points.
    """
    return service.estimate(request.points, request)


@api_router.post("/simulations", response_model=SimulationStatus, status_code=202)
def start_simulation(
    request: SimulationRequest,
    background_tasks: BackgroundTasks,
    store: SimulationStore = Depends(get_simulation_store),
):
    """
    Start a named risk scenario in the background.
    """
    if request.scenario not in scenario_names():
        raise HTTPException(status_code=404, detail=f"Unknown scenario: {request.scenario}")
    status = store.create(request.scenario)
    background_tasks.add_task(run_simulation_task, store, status.task_id, request)
    logger.info(f"Queued simulation {status.task_id} for {request.scenario}")
    return status


@api_router.get("/simulations/{task_id}", response_model=SimulationStatus)
def get_simulation(task_id: str, store: SimulationStore = Depends(get_simulation_store)):
    """
    Status and, once completed, risk rows of a simulation.
    """
    status = store.get(task_id)
    if status is None:
        raise HTTPException(status_code=404, detail="Simulation not found")
    return status


# Include API router in app
app.include_router(api_router, prefix=settings.API_V1_STR)


# Root endpoint
@app.get("/")
async def root(config: Settings = Depends(get_app_settings)):
    return {
        "status": "online",
        "name": config.PROJECT_NAME,
        "version": config.VERSION,
        "scenarios": scenario_names(),
    }


# Health check endpoint
@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.on_event("startup")
async def startup_event():
    logger.info(f"Starting up {settings.PROJECT_NAME} API...")


# Exception handlers
@app.exception_handler(ConfigError)
async def config_exception_handler(request, exc):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(ValidationError)
async def validation_exception_handler(request, exc):
    return JSONResponse(status_code=422, content={"detail": f"Invalid input: {str(exc)}"})


@app.exception_handler(NumericalError)
async def numerical_exception_handler(request, exc):
    logger.error(f"Numerical failure on {request.url.path}: {str(exc)}")
    return JSONResponse(status_code=500, content={"detail": str(exc)})
