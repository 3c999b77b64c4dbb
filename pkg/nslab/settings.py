"""Process settings and logging setup.

Numerical results never depend on anything read here; run parameters live in
the JSON run manifest.
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Load .env files from the places a user is likely to keep one
load_dotenv()
_env_candidates = [
    Path(__file__).resolve().parent / ".env",         # nslab/.env
    Path(__file__).resolve().parent.parent / ".env",  # repo root .env
    Path.cwd() / ".env",                              # current working dir
]
for _p in _env_candidates:
    try:
        if _p.exists():
            # Files only fill missing values, the real environment wins
            load_dotenv(dotenv_path=_p, override=False)
    except OSError:
        pass

os.environ.setdefault("NSLAB_LOG_LEVEL", "INFO")
os.environ.setdefault("NSLAB_FFT_WORKERS", "1")
os.environ.setdefault("NSLAB_OUTPUT_DIR", "nslab_runs")

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s | %(message)s"


def fft_workers() -> int:
    """Thread count handed to scipy.fft; never changes results."""
    try:
        return max(1, int(os.environ.get("NSLAB_FFT_WORKERS", "1")))
    except ValueError:
        return 1


def default_output_dir() -> Path:
    return Path(os.environ.get("NSLAB_OUTPUT_DIR", "nslab_runs"))


def configure_logging(level: str | None = None) -> None:
    """Configure the root ``nslab`` logger once."""
    name = (level or os.environ.get("NSLAB_LOG_LEVEL", "INFO")).upper()
    logger = logging.getLogger("nslab")
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    logger.setLevel(getattr(logging, name, logging.INFO))
