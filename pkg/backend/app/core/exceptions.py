"""
Exception hierarchy shared by services, CLI and API.
"""
from typing import Optional


class DelightError(Exception):
    """Base class for all library errors."""


class DomainError(DelightError, ValueError):
    """Numeric input outside the domain of an operation."""


class ConfigError(DelightError, ValueError):
    """Invalid experiment configuration (usage error)."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}")


class DatasetError(DelightError):
    """Base class for dataset ingestion errors."""


class IdxFormatError(DatasetError):
    """IDX archive with an unexpected magic number or header."""


class IdxReadError(DatasetError, OSError):
    """IDX archive that is truncated or cannot be read."""


class DatasetConsistencyError(DatasetError):
    """Images/labels disagree, or a required split is missing."""
