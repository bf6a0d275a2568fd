import os
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings
from pydantic_settings import SettingsConfigDict


class Settings(BaseSettings):

    PHILAB_THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    PHILAB_SEED: int = 20240607
    PHILAB_CHUNK_SIZE: int = Field(default=2048, ge=1)
    PHILAB_BATCHES: int = Field(default=32, ge=32)
    PHILAB_MIN_EFFECTIVE: float = Field(default=8.0, gt=0)
    PHILAB_BESOV_OVERSAMPLE: int = Field(default=4, ge=1)
    PHILAB_PARTITION: Literal["smooth", "sharp"] = "smooth"
    PHILAB_RESULTS_DIR: str = "results"
    PHILAB_LOG_LEVEL: str = "INFO"
    PHILAB_PROGRESS: bool = True
    PHILAB_MEMORY_MB: int = Field(default=4096, ge=64)
    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

settings = Settings()
