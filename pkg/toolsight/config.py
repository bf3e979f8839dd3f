from dotenv import load_dotenv
import os

load_dotenv()

LOG_LEVEL = os.getenv("TOOLSIGHT_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("TOOLSIGHT_LOG_FILE", "toolsight.log")
NUM_WORKERS = int(os.getenv("TOOLSIGHT_NUM_WORKERS", "4"))
RUNS_DIR = os.getenv("TOOLSIGHT_RUNS_DIR", "runs")

if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
    raise ValueError(f"TOOLSIGHT_LOG_LEVEL is not a logging level: {LOG_LEVEL}")

if NUM_WORKERS < 1:
    raise ValueError("TOOLSIGHT_NUM_WORKERS must be at least 1")
