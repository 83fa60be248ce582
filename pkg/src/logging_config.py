import logging
import os

from dotenv import load_dotenv

load_dotenv()


def setup_logging():
    """Configures logging for the application."""

    handlers = [logging.StreamHandler()]  # Log to console (stderr)
    log_file = os.getenv("TEMPOGRAPH_LOG_FILE", "/tmp/tempograph.log")
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))  # Log to a file

    logging.basicConfig(
        level=os.getenv("TEMPOGRAPH_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s - %(filename)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )
    return logging.getLogger("tempograph")


logger = setup_logging()
