"""Process settings, read from PENALTYNASH_* environment variables or a local .env file."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PENALTYNASH_", env_file=".env", extra="ignore")

    output_dir: Path = Path("results")
    log_level: str = "INFO"
    log_file: Path | None = None
    sweep_workers: int = Field(default=2, ge=1)


def get_settings() -> Settings:
    return Settings()
