"""Counter-based random streams.

Every random draw in the package comes from a generator built by
``stream(seed, *path)``. The path identifies the consumer (experiment
replicate, bootstrap replicate, Monte Carlo expectation, ...) so streams
never overlap and never depend on execution order or worker count.
"""

from typing import Tuple

import numpy as np

from src.utils.errors import ValidationError

# Path tags
DATA = 0
BOOTSTRAP = 1
EXPECTATION = 2
TRUTH = 3

VARIANT_CODES = {'unconstrained': 0, 'constrained': 1}

_MAX_SEED = 2 ** 64


def validate_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"Seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < _MAX_SEED:
        raise ValidationError("Seed must be a 64-bit unsigned integer")
    return int(seed)


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox generator keyed by ``seed`` and ``path``."""
    key: Tuple[int, ...] = tuple(int(p) for p in path)
    seq = np.random.SeedSequence(entropy=validate_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
