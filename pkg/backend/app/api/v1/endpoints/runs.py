"""
Experiment run endpoints.
"""
from typing import Any, Dict

from fastapi import APIRouter, Body, status

from app.dependencies import http_errors
from app.schemas.experiment import ExperimentConfig, RunResult
from app.services.experiment_service import ExperimentService

router = APIRouter()


@router.post("/", response_model=RunResult, status_code=status.HTTP_201_CREATED)
def create_run(values: Dict[str, Any] = Body(...)):
    """Run a bandit, multictx or classify config to completion."""
    with http_errors():
        config = ExperimentConfig.parse(values)
        return ExperimentService.cmd_run(config)
