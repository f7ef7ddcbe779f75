# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

import os
from pathlib import Path

import dotenv
import psutil

dotenv.load_dotenv(Path(__file__).parent / '.env')


def _strtobool(value: str) -> bool:
    return value.strip().lower() in ('1', 'true', 'yes', 'on', 'y', 't')


DEBUG_MODE = _strtobool(os.environ.get('HOMODRIFT_DEBUG', 'False'))
LOG_LEVEL = os.environ.get('HOMODRIFT_LOG_LEVEL', 'DEBUG' if DEBUG_MODE else None)
LOG_FILE = _strtobool(os.environ.get('HOMODRIFT_LOG_FILE', 'False'))
THREADS = int(
    os.environ.get('HOMODRIFT_THREADS', psutil.cpu_count(logical=False) or 1),
)
OUT_DIR = Path(os.environ.get('HOMODRIFT_OUT_DIR', 'results'))
FULL_SCALE = _strtobool(os.environ.get('HOMODRIFT_FULL_SCALE', 'False'))

SENTRY_DSN = os.environ.get('SENTRY_DSN', '')

DEFAULT_N_QUAD = 4096
DEFAULT_H_TARGET = 0.05
DEFAULT_R_FLOOR = 1.7
DEFAULT_N_QUAD_PER_ELEM = 2
DEFAULT_TOL_SCORE = 1e-8
DEFAULT_STEP_TOL = 1e-10
DEFAULT_MAX_ITER = 100
DEFAULT_REL_STEP = 1e-5
DEFAULT_N_REP = 15
DEFAULT_MASTER_SEED = 2021
FAILURE_FLAG_RATIO = 0.5

# horizon of the long J sweeps, desk scale unless HOMODRIFT_FULL_SCALE is set
DESK_SCALE_T = 2.0**12
FULL_SCALE_T = 2.0**15
