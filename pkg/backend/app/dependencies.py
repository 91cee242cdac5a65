"""
Dependencies shared by the API routers.
"""
import contextlib
from typing import Iterator

from fastapi import HTTPException, status
from pydantic import ValidationError

from app.core.config import Settings, settings
from app.core.exceptions import ConfigError, DatasetError, DomainError
from app.core.logging import get_logger

logger = get_logger(__name__)


def get_settings() -> Settings:
    """Current settings; overridable in tests."""
    return settings


@contextlib.contextmanager
def http_errors() -> Iterator[None]:
    """Map library errors onto HTTP status codes."""
    try:
        yield
    except ConfigError as exc:
        logger.warning("api.config_error", field=exc.field, error=str(exc))
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"field": exc.field, "message": str(exc)},
        ) from exc
    except (DomainError, ValidationError) as exc:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=str(exc),
        ) from exc
    except DatasetError as exc:
        logger.warning("api.dataset_error", error=str(exc))
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(exc),
        ) from exc
