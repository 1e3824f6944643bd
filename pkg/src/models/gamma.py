"""Stratified gamma model with common shape."""

import numpy as np

from src.models.base import ExponentialFamilyMixin, StratumModel
from src.models.dataset import StratifiedDataset
from src.utils.errors import ValidationError
from src.utils.special import digamma, log_gamma, trigamma


class GammaSharedShape(ExponentialFamilyMixin, StratumModel):
    """Gamma observations with shape ``exp(psi)`` and stratum scale ``exp(lam_i)``.

    Scale family in each stratum: for fixed psi the constrained nuisance
    estimate is ``log(mean(y_i)) - psi``.
    """

    name = 'gamma'

    def log_density(self, y, x, psi, lam):
        alpha = np.exp(psi)
        return -log_gamma(alpha) - alpha * lam + (alpha - 1.0) * np.log(y) - y * np.exp(-lam)

    def score(self, y, x, psi, lam):
        alpha = np.exp(psi)
        u_psi = alpha * (np.log(y) - lam - digamma(alpha))
        u_lam = y * np.exp(-lam) - alpha
        return u_psi, u_lam

    def observed_info(self, y, x, psi, lam):
        alpha = np.exp(psi)
        j_pp = alpha ** 2 * trigamma(alpha) - alpha * (np.log(y) - lam - digamma(alpha))
        j_pl = np.full(np.shape(y), alpha)
        j_ll = y * np.exp(-lam)
        return j_pp, j_pl, j_ll

    def expected_info(self, x, psi, lam):
        alpha = np.exp(psi)
        shape = np.shape(lam)
        return (np.full(shape, alpha ** 2 * trigamma(alpha)), np.full(shape, alpha),
                np.full(shape, alpha))

    def sample(self, x, psi, lam, rng):
        y = rng.gamma(shape=np.exp(psi), scale=np.exp(lam))
        return np.maximum(y, np.finfo(float).tiny)

    def check_observations(self, data: StratifiedDataset) -> None:
        if np.any(data.y <= 0):
            raise ValidationError("Gamma observations must be positive")

    def psi_start(self, data: StratifiedDataset) -> float:
        means = data.stratum_means()
        variances = data.stratum_means((data.y - data.expand(means)) ** 2)
        ratio = means ** 2 / np.maximum(variances, 1e-12 * means ** 2)
        return float(np.log(np.clip(np.median(ratio), 1e-2, 1e4)))

    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return np.log(data.stratum_means()) - psi

    def closed_form_nuisance(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return np.log(data.stratum_means()) - psi

    # Sufficient statistic (log y, y), natural parameter (alpha, -exp(-lam))

    def natural_params(self, x, psi, lam):
        lam = np.asarray(lam, dtype=float)
        return np.stack([np.full(lam.shape, np.exp(psi)), -np.exp(-lam)], axis=-1)

    def natural_jacobian(self, x, psi, lam):
        lam = np.asarray(lam, dtype=float)
        jac = np.zeros(lam.shape + (2, 2))
        jac[..., 0, 0] = np.exp(psi)
        jac[..., 1, 1] = np.exp(-lam)
        return jac

    def sufficient_cov(self, x, psi, lam):
        lam = np.asarray(lam, dtype=float)
        alpha = np.exp(psi)
        beta = np.exp(lam)
        cov = np.empty(lam.shape + (2, 2))
        cov[..., 0, 0] = trigamma(alpha)
        cov[..., 0, 1] = beta
        cov[..., 1, 0] = beta
        cov[..., 1, 1] = alpha * beta ** 2
        return cov
