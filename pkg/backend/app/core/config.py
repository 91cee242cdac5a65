"""
Configuration settings for the application.
"""
from pathlib import Path
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings."""

    API_V1_STR: str = "/api/v1"
    PROJECT_NAME: str = "Delight Gradient Lab"
    VERSION: str = "1.0.0"

    # Outputs
    OUTPUT_DIR: Path = Path("runs")

    # Datasets
    MNIST_DIR: Optional[Path] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = False

    # Seeds and fan-out
    DEFAULT_SEED: int = 0
    VERIFY_SEED: int = 2024
    MAX_WORKERS: int = 1

    @field_validator("LOG_LEVEL")
    @classmethod
    def normalize_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator("MAX_WORKERS")
    @classmethod
    def positive_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("MAX_WORKERS must be at least 1")
        return v

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
