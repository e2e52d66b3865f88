from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="SIAMMAN_", env_file=".env", extra="ignore")

    THREADS: int = Field(4, ge=1)
    LOG_LEVEL: str = "INFO"
    DATA_ROOT: Path = Path("data")


@lru_cache
def get_settings() -> Settings:
    return Settings()
