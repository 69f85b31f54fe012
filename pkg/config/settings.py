import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()


def _as_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class Settings:
    """Process-level settings read from the environment (.env supported)"""
    workers: int
    output_dir: str
    host: str
    port: int
    debug: bool
    run_slow: bool


def load_settings() -> Settings:
    return Settings(
        workers=int(os.getenv("TVBO_WORKERS", os.cpu_count() or 1)),
        output_dir=os.getenv("TVBO_OUTPUT_DIR", "results"),
        host=os.getenv("TVBO_HOST", "127.0.0.1"),
        port=int(os.getenv("TVBO_PORT", 5000)),
        debug=_as_bool(os.getenv("TVBO_DEBUG", "false")),
        run_slow=_as_bool(os.getenv("TVBO_RUN_SLOW", "false")),
    )


settings = load_settings()
