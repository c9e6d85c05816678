"""
Configuration Settings for the CV-QKD desk simulator

Process-wide knobs (output location, log verbosity, transport timeout) come
from the environment or a .env file in the project root. Per-run physics and
protocol parameters live in ``src.core.run_config.RunConfig``.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load .env from project root
PROJECT_ROOT = Path(__file__).parent.parent
load_dotenv(PROJECT_ROOT / ".env")


def _resolve_path(env_key: str, default: str) -> Path:
    """Resolve path from env var. Supports relative (to PROJECT_ROOT) and absolute."""
    raw = os.getenv(env_key, default)
    p = Path(raw)
    if not p.is_absolute():
        p = PROJECT_ROOT / p
    return p


def _float_env(env_key: str, default: float) -> float:
    raw = os.getenv(env_key, "")
    try:
        return float(raw) if raw else default
    except ValueError:
        return default


class Settings:
    """Global settings - all configurable via .env"""

    PROJECT_ROOT: Path = PROJECT_ROOT

    # ── Output ──
    OUTPUT_DIR: Path = _resolve_path("QKD_OUTPUT_DIR", "output")

    # ── Logging ──
    LOG_LEVEL: str = os.getenv("QKD_LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

    # ── Transport ──
    TRANSPORT_TIMEOUT_S: float = _float_env("QKD_TRANSPORT_TIMEOUT_S", 60.0)

    VALID_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

    @classmethod
    def ensure_dirs(cls, out_dir: Path | None = None) -> Path:
        """Create the output directory if it doesn't exist and return it."""
        target = Path(out_dir) if out_dir is not None else cls.OUTPUT_DIR
        target.mkdir(parents=True, exist_ok=True)
        return target

    @classmethod
    def validate(cls) -> list[dict]:
        """Validate environment. Returns list of issues: [{"level": "error"|"warning", "msg": ...}]"""
        issues = []

        if cls.LOG_LEVEL not in cls.VALID_LOG_LEVELS:
            issues.append({
                "level": "warning",
                "msg": f"Unknown QKD_LOG_LEVEL '{cls.LOG_LEVEL}', falling back to INFO."
            })

        if cls.TRANSPORT_TIMEOUT_S <= 0:
            issues.append({
                "level": "error",
                "msg": "QKD_TRANSPORT_TIMEOUT_S must be positive."
            })

        # Output dir writable
        try:
            cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
            test_file = cls.OUTPUT_DIR / ".write_test"
            test_file.touch()
            test_file.unlink()
        except Exception:
            issues.append({
                "level": "error",
                "msg": f"Output directory is not writable: {cls.OUTPUT_DIR}"
            })

        return issues

    @classmethod
    def log_level(cls) -> str:
        """Return a level name logging understands."""
        return cls.LOG_LEVEL if cls.LOG_LEVEL in cls.VALID_LOG_LEVELS else "INFO"
