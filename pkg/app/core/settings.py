"""Process-level settings read from the environment (and a .env file)."""
from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_PRESETS_PATH = Path(__file__).resolve().parent.parent / "schema" / "presets.yaml"


class Settings(BaseSettings):
    """Runtime configuration; every field can be overridden with SURFRECON_<NAME>."""

    model_config = SettingsConfigDict(env_prefix="SURFRECON_", env_file=".env", extra="ignore")

    database_url: str = "sqlite:///./surfrecon.db"
    out_dir: Path = Path("runs")
    workers: int = 1
    log_level: str = "INFO"
    log_every: int = 100
    presets_path: Path = DEFAULT_PRESETS_PATH


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
