"""
Environment-backed defaults.

Values can be overridden from a .env file in the working directory or the
process environment; the CLI uses them as flag defaults.
"""

import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_THREADS = int(os.getenv("SONGSPACE_THREADS", "1"))
LOG_LEVEL = os.getenv("SONGSPACE_LOG_LEVEL", "WARNING").upper()

# d = 100 is the base model size; lr and C must be tuned on a validation set
DEFAULT_DIM = int(os.getenv("SONGSPACE_DIM", "100"))
DEFAULT_LR = float(os.getenv("SONGSPACE_LR", "0.01"))
DEFAULT_C = float(os.getenv("SONGSPACE_C", "1.0"))
DEFAULT_SEED = int(os.getenv("SONGSPACE_SEED", "0"))

DEFAULT_MAX_STEPS = int(os.getenv("SONGSPACE_MAX_STEPS", "100000"))
DEFAULT_PATIENCE = int(os.getenv("SONGSPACE_PATIENCE", "5"))
