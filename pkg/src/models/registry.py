"""Model factory and default simulation truths."""

import logging
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from src.models.base import ParamPoint, StratumModel
from src.models.behrens_fisher import BehrensFisher
from src.models.beta import BetaSharedPrecision
from src.models.curved_normal import CurvedExpNormal
from src.models.gamma import GammaSharedShape
from src.models.matched_pairs import BinomialMatchedPairs
from src.utils.errors import ValidationError
from src.utils.rng import TRUTH, stream

logger = logging.getLogger(__name__)

_MODELS: Dict[str, Callable[..., StratumModel]] = {
    'gamma': GammaSharedShape,
    'beta': BetaSharedPrecision,
    'curved_normal': CurvedExpNormal,
    'behrens_fisher': BehrensFisher,
    'matched_pairs': BinomialMatchedPairs,
}

# Config keys each model accepts
_OPTIONS = {
    'matched_pairs': {'m'},
}

MODEL_NAMES = tuple(_MODELS)


def build(name: str, config: Optional[Mapping[str, Any]] = None) -> StratumModel:
    """Instantiate a model by its CLI name."""
    if name not in _MODELS:
        raise ValidationError(f"Unknown model '{name}'; choose from {', '.join(MODEL_NAMES)}")
    config = dict(config or {})
    unknown = set(config) - _OPTIONS.get(name, set())
    if unknown:
        raise ValidationError(f"Model '{name}' does not accept option(s): {', '.join(sorted(unknown))}")
    return _MODELS[name](**config)


def _nuisance_draws(name: str, q: int, rng: np.random.Generator) -> np.ndarray:
    if name == 'gamma':
        return np.log(rng.exponential(scale=2.0, size=q))
    if name == 'behrens_fisher':
        return rng.uniform(0.0, 1.0, size=q)
    return rng.standard_normal(q)


_TRUE_PSI = {
    'gamma': np.log(2.0),
    'beta': np.log(2.0),
    'curved_normal': np.log(0.5),
    'behrens_fisher': 0.0,
    'matched_pairs': 1.0,
}


def default_truths(name: str, q: int, seed: int) -> ParamPoint:
    """Seeded true parameter for simulation studies.

    gamma: psi = log 2, lam = log of exponential draws with mean 2.
    beta: psi = log 2, lam standard normal. curved_normal: psi = log 1/2,
    lam standard normal. behrens_fisher: psi = 0, lam uniform on (0, 1).
    matched_pairs: psi = 1, lam standard normal.
    """
    if name not in _TRUE_PSI:
        raise ValidationError(f"Unknown model '{name}'")
    if q < 1:
        raise ValidationError("default_truths requires q >= 1")
    lam = _nuisance_draws(name, q, stream(seed, TRUTH))
    return ParamPoint(psi=float(_TRUE_PSI[name]), lam=lam)
