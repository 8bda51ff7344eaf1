import threading
import uuid
from functools import lru_cache
from typing import Dict, List, Optional

from app.core.config import Settings, get_settings
from app.models.requests import SimulationStatus
from app.models.simulation import RiskRow
from app.services.operations import EstimationService, estimation_service


class SimulationStore:
    """
    In-memory registry of background simulations, keyed by task id.

    Entries live for the lifetime of the process.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._tasks: Dict[str, SimulationStatus] = {}

    def create(self, scenario: str) -> SimulationStatus:
        status = SimulationStatus(task_id=f"sim-{uuid.uuid4().hex[:12]}", scenario=scenario, status="pending")
        with self._lock:
            self._tasks[status.task_id] = status
        return status

    def get(self, task_id: str) -> Optional[SimulationStatus]:
        with self._lock:
            return self._tasks.get(task_id)

    def update(
        self,
        task_id: str,
        status: str,
        rows: Optional[List[RiskRow]] = None,
        detail: Optional[str] = None,
    ) -> SimulationStatus:
        with self._lock:
            current = self._tasks[task_id]
            changes = {"status": status, "detail": detail}
            if rows is not None:
                changes["rows"] = rows
            self._tasks[task_id] = current.model_copy(update=changes)
            return self._tasks[task_id]


@lru_cache()
def get_simulation_store() -> SimulationStore:
    return SimulationStore()


def get_app_settings() -> Settings:
    return get_settings()


def get_estimation_service() -> EstimationService:
    return estimation_service
