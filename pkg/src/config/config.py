"""Centralized configuration management for StratBoot."""

import os
import logging
from pathlib import Path
from typing import Optional, Tuple

from dotenv import load_dotenv


def _env_float(name: str, default: float) -> float:
    value = os.environ.get(name)
    return float(value) if value not in (None, '') else default


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else default


def load_env_file(env_file: Path = Path('.env')) -> None:
    """Load environment variables from file."""
    if env_file.exists():
        load_dotenv(env_file)


load_env_file()


class Config:
    """Base configuration class."""

    # Application
    APP_NAME = "StratBoot"
    VERSION = "1.0.0"

    # Paths
    BASE_DIR = Path(__file__).parent.parent.parent
    OUTPUT_DIR = Path(os.environ.get('STRATBOOT_OUTPUT_DIR', 'results'))

    DEBUG = False
    TESTING = False

    # Estimation
    GRAD_TOL = _env_float('STRATBOOT_GRAD_TOL', 1e-8)
    MAX_ITER = _env_int('STRATBOOT_MAX_ITER', 50)
    NUISANCE_BOUND = _env_float('STRATBOOT_NUISANCE_BOUND', 50.0)
    DEVIANCE_TOL = 1e-6

    # Bootstrap
    BOOTSTRAP_K = _env_int('STRATBOOT_BOOTSTRAP_K', 1000)
    BOOTSTRAP_FAIL_BUDGET = _env_float('STRATBOOT_BOOTSTRAP_FAIL_BUDGET', 0.01)

    # Higher order
    MC_SIZE = _env_int('STRATBOOT_MC_SIZE', 2000)
    RSTAR_WINDOW = 0.05

    # Simulation
    EXPERIMENT_FAIL_BUDGET = _env_float('STRATBOOT_EXPERIMENT_FAIL_BUDGET', 0.005)
    DEFAULT_LEVELS: Tuple[float, ...] = (1.0, 2.5, 5.0, 95.0, 97.5, 99.0)
    WORKERS = _env_int('STRATBOOT_WORKERS', 1)

    # Logging
    LOG_LEVEL = os.environ.get('STRATBOOT_LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    @classmethod
    def init_logging(cls, level: Optional[str] = None) -> None:
        """Set up logging for command-line runs."""
        logging.basicConfig(
            level=getattr(logging, (level or cls.LOG_LEVEL).upper()),
            format=cls.LOG_FORMAT
        )


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('STRATBOOT_LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    DEBUG = True
    LOG_LEVEL = 'WARNING'

    # Keep Monte Carlo paths light in unit tests
    BOOTSTRAP_K = 200
    MC_SIZE = 500


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(config_name: Optional[str] = None) -> type:
    """Get configuration class based on environment."""
    config_name = config_name or os.environ.get('STRATBOOT_ENV', 'default')
    return config.get(config_name, config['default'])
