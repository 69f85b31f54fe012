import logging
import os
from logging.handlers import RotatingFileHandler

# Create logs directory if not exists
LOG_DIR = os.getenv("TVBO_LOG_DIR", "logs")
os.makedirs(LOG_DIR, exist_ok=True)

LOG_FILE = os.path.join(LOG_DIR, "tvbo.log")
CONSOLE_LEVEL = os.getenv("TVBO_LOG_LEVEL", "INFO").upper()

# Configure logging
formatter = logging.Formatter(
    fmt="%(asctime)s [%(levelname)s] [%(name)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S"
)

file_handler = RotatingFileHandler(
    LOG_FILE,
    maxBytes=5 * 1024 * 1024,  # 5 MB per file
    backupCount=5               # keep last 5 log files
)
file_handler.setFormatter(formatter)
file_handler.setLevel(logging.INFO)

# stderr only: stdout is reserved for protocol frames in the stdio transport
console_handler = logging.StreamHandler()
console_handler.setFormatter(formatter)
console_handler.setLevel(CONSOLE_LEVEL)

logger = logging.getLogger("tvbo")
logger.setLevel(min(logging.INFO, console_handler.level))
if not logger.handlers:
    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
logger.propagate = False
