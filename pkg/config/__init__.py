"""
Configuration package initialization.
"""
from config.settings import *
from config.logging_config import setup_logging