from functools import lru_cache
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="SCED_",
        env_file=".env",
        case_sensitive=False,
    )

    log_level: str = "INFO"
    log_json: bool = True
    workers: int = 1
    frame_cap: int = 100_000_000
    batch_size: int = 256
    llr_clip: float = 30.0
    enumerate_max_k: int = 24
    lc_sample_count: int = 10_000
    max_attempts: int = 1000
    snr_search_low_db: float = -2.0
    snr_search_high_db: float = 10.0
    pilot_frames: int = 20_000
    pilot_min_errors: int = 50
    bisection_max_steps: int = 24
    metrics_file: Optional[str] = None

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}")
        return v.upper()

    @field_validator("workers", "batch_size", "frame_cap", "pilot_frames", "max_attempts")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("llr_clip")
    @classmethod
    def validate_clip(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("llr_clip must be > 0")
        return v


@lru_cache()
def get_settings() -> Settings:
    return Settings()
