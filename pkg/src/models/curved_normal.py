"""Curved exponential family: normal with linked mean and variance."""

import numpy as np

from src.models.base import StratumModel
from src.models.dataset import StratifiedDataset

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class CurvedExpNormal(StratumModel):
    """Normal observations with mean ``exp(lam_i)`` and variance ``exp(psi + lam_i / 2)``."""

    name = 'curved_normal'

    def log_density(self, y, x, psi, lam):
        log_v = psi + 0.5 * lam
        resid = y - np.exp(lam)
        return -_HALF_LOG_2PI - 0.5 * log_v - 0.5 * resid ** 2 * np.exp(-log_v)

    def score(self, y, x, psi, lam):
        inv_v = np.exp(-(psi + 0.5 * lam))
        mean = np.exp(lam)
        resid = y - mean
        half_sq = 0.5 * resid ** 2 * inv_v
        return half_sq - 0.5, resid * mean * inv_v + 0.5 * half_sq - 0.25

    def observed_info(self, y, x, psi, lam):
        inv_v = np.exp(-(psi + 0.5 * lam))
        mean = np.exp(lam)
        resid = y - mean
        sq = resid ** 2 * inv_v
        return 0.5 * sq, resid * mean * inv_v + 0.25 * sq, mean ** 2 * inv_v + 0.125 * sq

    def expected_info(self, x, psi, lam):
        lam = np.asarray(lam, dtype=float)
        inv_v = np.exp(-(psi + 0.5 * lam))
        return (np.full(lam.shape, 0.5), np.full(lam.shape, 0.25),
                np.exp(2.0 * lam) * inv_v + 0.125)

    def sample(self, x, psi, lam, rng):
        lam = np.asarray(lam, dtype=float)
        sd = np.exp(0.5 * (psi + 0.5 * lam))
        return np.exp(lam) + sd * rng.standard_normal(lam.shape)

    def psi_start(self, data: StratifiedDataset) -> float:
        means = data.stratum_means()
        variances = data.stratum_means((data.y - data.expand(means)) ** 2)
        lam = np.log(np.maximum(np.abs(means), 1e-3))
        return float(np.median(np.log(np.maximum(variances, 1e-12)) - 0.5 * lam))

    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return np.log(np.maximum(data.stratum_means(), 1e-3))
