"""Pytest configuration and fixtures for StratBoot tests."""

import os

os.environ.setdefault('STRATBOOT_ENV', 'testing')

from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pytest

from src.config.config import get_config
from src.models.base import ParamPoint, layout, simulate
from src.models.dataset import StratifiedDataset
from src.models.registry import MODEL_NAMES, build, default_truths
from src.utils.rng import stream

FIXTURES_DIR = Path(__file__).parent / 'fixtures'


@pytest.fixture(scope='session')
def test_config():
    """Testing configuration class."""
    return get_config('testing')


@pytest.fixture(scope='session')
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(params=MODEL_NAMES)
def any_model(request):
    """Every registered model in turn."""
    return build(request.param)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test-local draws."""
    return stream(20240601, 99)


@pytest.fixture(scope='session')
def make_data() -> Callable[..., StratifiedDataset]:
    """Factory for seeded balanced datasets drawn from a model."""

    def _make(name: str, q: int, m: int, seed: int = 1,
              theta: Optional[ParamPoint] = None) -> StratifiedDataset:
        model = build(name)
        theta = theta or default_truths(name, q, seed)
        template = model.prepare(layout(model, q, m))
        return simulate(model, template, theta, stream(seed, 0, 0))

    return _make


@pytest.fixture
def bf_pair() -> StratifiedDataset:
    """Single Behrens-Fisher stratum y = (0, 2)."""
    return StratifiedDataset.from_strata([[0.0, 2.0]])


@pytest.fixture
def output_dir(tmp_path) -> Path:
    out = tmp_path / 'results'
    out.mkdir()
    return out


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )
