"""
Logging configuration for the DSFAD pipeline.
"""
import logging
import os
from datetime import datetime

from config.settings import LOG_DIR, LOG_LEVEL


def setup_logging(log_dir=LOG_DIR, level=LOG_LEVEL):
    """Set up logging configuration."""
    # Create logs directory if it doesn't exist
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    # Generate log filename with timestamp
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    log_filename = os.path.join(log_dir, f'dsfad_{timestamp}.log')

    # Configure logging
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_filename),
            logging.StreamHandler()
        ]
    )

    # Return logger
    return logging.getLogger('dsfad')
