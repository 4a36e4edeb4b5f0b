"""Process-level settings loaded from environment variables."""

from functools import lru_cache

import numpy as np
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Output root for run directories (MASKCONS_OUT)
    out: str = "runs"

    # Numerics
    precision: str = "f64"  # f64 | f32 (f32 allowed for training loops only)

    # Parallel (method, seed) cells / toy seeds
    jobs: int = 1

    # Logging
    log_level: str = "INFO"
    log_file: str = ""  # Empty = stdout only
    log_every: int = 100  # Training progress record period, in steps

    model_config = {
        "env_prefix": "MASKCONS_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
    }

    @property
    def dtype(self) -> np.dtype:
        """Map the precision switch onto a numpy dtype."""
        if self.precision.lower() == "f32":
            return np.dtype(np.float32)
        return np.dtype(np.float64)


@lru_cache
def get_settings() -> Settings:
    return Settings()
