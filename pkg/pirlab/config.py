"""
Configuration management for pirlab.
Loads environment variables and provides library and CLI settings.
"""

from typing import Optional

from dotenv import find_dotenv, load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from the nearest .env file (searching upward)
load_dotenv(find_dotenv())


class Settings(BaseSettings):
    """Settings loaded from ``PIRLAB_*`` environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PIRLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # CLI size cap for K and N (plan size grows as N*(N^K-1)/(N-1))
    max_kn: int = Field(8, ge=1)

    # Logging Configuration
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Trial execution
    n_jobs: int = 1
    default_seed: int = Field(0, ge=0)

    # Privacy checkers
    sampled_trials: int = Field(10_000, ge=1_000)
    histogram_buckets: int = Field(1024, ge=2)
    pass_threshold: float = Field(0.01, gt=0.0, lt=1.0)
    fail_threshold: float = Field(1e-6, gt=0.0, lt=1.0)
    exhaustive_limit: int = Field(2**20, ge=1)
    structural_seeds: int = Field(16, ge=2)


# Global settings instance
settings = Settings()
