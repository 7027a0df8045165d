import logging
import os
from typing import Optional

from dotenv import load_dotenv

from csi_id.errors import ConfigError

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv("CSIID_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(levelname)s - %(message)s',
)
logger = logging.getLogger(__name__)

THREADS_ENV = "CSIID_THREADS"
TOLERANCE_ENV = "CSIID_TOLERANCE"

DEFAULT_THREADS = 1
DEFAULT_TOLERANCE = 1e-9


def get_threads(threads: Optional[int] = None) -> int:
    """
    Resolve the worker pool size.

    Args:
        threads: Explicit value (e.g. from --threads); wins over the environment

    Returns:
        Number of workers, at least 1
    """
    if threads is None:
        raw = os.getenv(THREADS_ENV)
        if raw is None or raw.strip() == "":
            return DEFAULT_THREADS
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'")
        logger.debug(f"Using {threads} worker(s) from {THREADS_ENV}")

    if threads < 1:
        raise ConfigError(f"thread count must be at least 1, got {threads}")
    return threads


def get_tolerance(tolerance: Optional[float] = None) -> float:
    """
    Resolve the absolute tolerance used by float-valued CSI tests.

    Args:
        tolerance: Explicit value; wins over the environment

    Returns:
        Non-negative tolerance
    """
    if tolerance is None:
        raw = os.getenv(TOLERANCE_ENV)
        if raw is None or raw.strip() == "":
            return DEFAULT_TOLERANCE
        try:
            tolerance = float(raw)
        except ValueError:
            raise ConfigError(f"{TOLERANCE_ENV} must be a number, got '{raw}'")

    if tolerance < 0:
        raise ConfigError(f"tolerance must be non-negative, got {tolerance}")
    return tolerance
