"""
Shared fixtures.
"""
import sys

import numpy as np
import pytest
from structlog._config import BoundLoggerLazyProxy

from app.core import logging as app_logging
from app.core.config import settings
from app.core.rng import derive_rng
from app.schemas.experiment import ExperimentConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return derive_rng(1234, 0)


@pytest.fixture(autouse=True)
def _reset_log_stream():
    """Drop logger bindings cached on a per-test capture stream (e.g. capsys), which pytest closes."""
    yield
    for module in list(sys.modules.values()):
        for value in list(getattr(module, "__dict__", {}).values()):
            if isinstance(value, BoundLoggerLazyProxy):
                value.__dict__.pop("bind", None)
    app_logging.configure_logging()


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    """Every test writes its runs under its own tmp directory."""
    out = tmp_path / "runs"
    monkeypatch.setattr(settings, "OUTPUT_DIR", out)
    return out


@pytest.fixture
def bandit_config(output_dir) -> ExperimentConfig:
    return ExperimentConfig.parse(
        dict(testbed="bandit", label="small", num_actions=10, batch=20, steps=30, seeds=3, output_dir=output_dir)
    )


@pytest.fixture
def multictx_config(output_dir) -> ExperimentConfig:
    return ExperimentConfig.parse(
        dict(testbed="multictx", label="small", estimators="pg,dg,ce", contexts=8, num_actions=5,
             steps=20, seeds=2, output_dir=output_dir)
    )


@pytest.fixture
def classify_config(output_dir) -> ExperimentConfig:
    return ExperimentConfig.parse(
        dict(
            testbed="classify",
            label="small",
            estimators="pg,dg,ce",
            synthetic_classes=3,
            synthetic_dim=4,
            synthetic_per_class=20,
            batch=16,
            width=8,
            steps=12,
            eval_every=5,
            learning_rate=1e-2,
            seeds=2,
            output_dir=output_dir,
        )
    )
