import os
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger

# Load environment variables from .env file if it exists
load_dotenv()

# Paths
PROJ_ROOT = Path(__file__).resolve().parents[1]
logger.debug(f"PROJ_ROOT path is: {PROJ_ROOT}")

DATA_DIR = PROJ_ROOT / "data"
GRAPHS_DIR = DATA_DIR / "graphs"
CONFIGS_DIR = PROJ_ROOT / "configs"

REPORTS_DIR = Path(os.getenv("PCOSYNC_OUTPUT_DIR", PROJ_ROOT / "reports"))

# Worker count for Monte Carlo fan-out; None lets the executor decide
_workers = os.getenv("PCOSYNC_WORKERS")
WORKERS: int | None = int(_workers) if _workers else None

LOG_LEVEL = os.getenv("PCOSYNC_LOG_LEVEL", "INFO")

# Numerics shared by every module
TIE_TOL = 1e-12
PHASE_TOL = 1e-12
DEFAULT_CONV_TOL = 1e-9
ORACLE_TOL = 1e-9
B1_CAP = 1.0 - 1e-6
DEFAULT_S2_SAMPLES = 10_000

# If tqdm is installed, configure loguru with tqdm.write
# https://github.com/Delgan/loguru/issues/135
try:
    from tqdm import tqdm

    logger.remove()
    logger.add(lambda msg: tqdm.write(msg, end=""), colorize=True, level=LOG_LEVEL)
except ModuleNotFoundError:
    pass
