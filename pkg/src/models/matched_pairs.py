"""Binomial matched-pairs logistic model."""

import logging
from typing import Optional

import numpy as np
from scipy.special import expit

from src.models.base import StratumModel
from src.models.dataset import StratifiedDataset
from src.utils.errors import ValidationError

logger = logging.getLogger(__name__)


class BinomialMatchedPairs(StratumModel):
    """Bernoulli observations with ``logit p_ij = lam_i + psi * x_ij``.

    The design is fixed: ``x_ij = 1`` for the first half of each stratum and
    0 for the second half. Strata whose responses are all equal have no
    interior nuisance maximum and are dropped by the estimators.
    """

    name = 'matched_pairs'
    discrete = True
    placeholder_y = 0.0

    def __init__(self, m: Optional[int] = None):
        if m is not None and (m < 2 or m % 2):
            raise ValidationError(f"matched_pairs requires an even stratum size, got m={m}")
        self.m = m

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(m={self.m})"

    def log_density(self, y, x, psi, lam):
        eta = lam + psi * x
        return y * eta - np.logaddexp(0.0, eta)

    def score(self, y, x, psi, lam):
        resid = y - expit(lam + psi * x)
        return x * resid, resid

    def observed_info(self, y, x, psi, lam):
        return self.expected_info(x, psi, lam)

    def expected_info(self, x, psi, lam):
        p = expit(lam + psi * x)
        v = p * (1.0 - p)
        return x * x * v, x * v, v

    def sample(self, x, psi, lam, rng):
        p = expit(lam + psi * x)
        return rng.binomial(1, p).astype(float)

    def design_covariates(self, m: int) -> np.ndarray:
        if m % 2:
            raise ValidationError(f"matched_pairs requires an even stratum size, got m={m}")
        return np.repeat([1.0, 0.0], m // 2)

    def prepare(self, data: StratifiedDataset) -> StratifiedDataset:
        self.check_observations(data)
        if self.m is not None and not (data.is_balanced and data.m == self.m):
            raise ValidationError(f"matched_pairs model was built for m={self.m}")
        design = np.concatenate([self.design_covariates(int(size)) for size in data.sizes])
        if data.x is None:
            logger.debug("Filling matched-pairs design covariates")
            return StratifiedDataset(y=data.y, stratum=data.stratum, x=design, origin=data.origin)
        if not np.array_equal(data.x, design):
            raise ValidationError("matched_pairs covariates must be 1 for the first half of each stratum, 0 after")
        return data

    def check_observations(self, data: StratifiedDataset) -> None:
        if not np.all((data.y == 0) | (data.y == 1)):
            raise ValidationError("matched_pairs observations must be exactly 0 or 1")

    def psi_start(self, data: StratifiedDataset) -> float:
        # Mantel-Haenszel log odds ratio with half-count corrections
        x = data.xs
        treated = data.stratum_sum(data.y * x)
        control = data.stratum_sum(data.y * (1.0 - x))
        n_treated = data.stratum_sum(x)
        n_control = data.sizes - n_treated
        a, b = treated + 0.5, n_treated - treated + 0.5
        c, d = control + 0.5, n_control - control + 0.5
        ratio = np.sum(a * d / data.sizes) / np.sum(b * c / data.sizes)
        return float(np.log(ratio))

    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        mean = (data.stratum_sum(data.y) + 0.5) / (data.sizes + 1.0)
        offset = data.stratum_means(psi * data.xs)
        return np.log(mean) - np.log1p(-mean) - offset
