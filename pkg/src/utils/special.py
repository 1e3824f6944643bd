"""Gamma-family special functions with domain checking."""

import numpy as np
from scipy import special

from src.utils.errors import ValidationError


def _positive(name: str, *values) -> None:
    for value in values:
        arr = np.asarray(value, dtype=float)
        if not np.all(arr > 0):
            raise ValidationError(f"{name} requires strictly positive arguments")


def log_gamma(x):
    """log Γ(x) for x > 0."""
    _positive('log_gamma', x)
    return special.gammaln(x)


def digamma(x):
    """ψ(x) = d/dx log Γ(x) for x > 0."""
    _positive('digamma', x)
    return special.digamma(x)


def trigamma(x):
    """ψ'(x) for x > 0."""
    _positive('trigamma', x)
    return special.polygamma(1, x)


def log_beta(a, b):
    """log B(a, b) for a, b > 0."""
    _positive('log_beta', a, b)
    return special.betaln(a, b)
