"""
Environment-backed defaults for the genericity lab
"""
import os
from dotenv import load_dotenv

load_dotenv(override=True)

# Configuration
LOG_LEVEL = os.getenv("LAB_LOG_LEVEL", "INFO").upper()
REPORT_DIR = os.getenv("LAB_REPORT_DIR", "reports")
DEFAULT_SEED = int(os.getenv("LAB_SEED", "0"))
WORKERS = max(1, int(os.getenv("LAB_WORKERS", "1")))
