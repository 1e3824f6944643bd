"""Multi-sample Behrens-Fisher setting."""

import numpy as np

from src.models.base import ExponentialFamilyMixin, StratumModel
from src.models.dataset import StratifiedDataset

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class BehrensFisher(ExponentialFamilyMixin, StratumModel):
    """Normal observations with common mean ``psi`` and variance ``exp(lam_i)``.

    Mean and variance are orthogonal, so the cross information is zero and
    the partial information is ``sum_i m_i exp(-lam_i)``.
    """

    name = 'behrens_fisher'

    def log_density(self, y, x, psi, lam):
        return -_HALF_LOG_2PI - 0.5 * lam - 0.5 * (y - psi) ** 2 * np.exp(-lam)

    def score(self, y, x, psi, lam):
        prec = np.exp(-lam)
        resid = y - psi
        return resid * prec, 0.5 * resid ** 2 * prec - 0.5

    def observed_info(self, y, x, psi, lam):
        prec = np.exp(-lam)
        resid = y - psi
        return np.broadcast_to(prec, np.shape(resid)), resid * prec, 0.5 * resid ** 2 * prec

    def expected_info(self, x, psi, lam):
        lam = np.asarray(lam, dtype=float)
        return np.exp(-lam), np.zeros(lam.shape), np.full(lam.shape, 0.5)

    def sample(self, x, psi, lam, rng):
        lam = np.asarray(lam, dtype=float)
        return psi + np.exp(0.5 * lam) * rng.standard_normal(lam.shape)

    def psi_start(self, data: StratifiedDataset) -> float:
        return float(np.mean(data.y))

    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return np.log(np.maximum(data.stratum_means((data.y - psi) ** 2), 1e-300))

    def closed_form_nuisance(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return np.log(data.stratum_means((data.y - psi) ** 2))

    # Sufficient statistic (y, y^2), natural parameter (psi e^-lam, -e^-lam / 2)

    def natural_params(self, x, psi, lam):
        prec = np.exp(-np.asarray(lam, dtype=float))
        return np.stack([psi * prec, -0.5 * prec], axis=-1)

    def natural_jacobian(self, x, psi, lam):
        prec = np.exp(-np.asarray(lam, dtype=float))
        jac = np.zeros(prec.shape + (2, 2))
        jac[..., 0, 0] = prec
        jac[..., 0, 1] = -psi * prec
        jac[..., 1, 1] = 0.5 * prec
        return jac

    def sufficient_cov(self, x, psi, lam):
        var = np.exp(np.asarray(lam, dtype=float))
        cov = np.empty(var.shape + (2, 2))
        cov[..., 0, 0] = var
        cov[..., 0, 1] = 2.0 * psi * var
        cov[..., 1, 0] = 2.0 * psi * var
        cov[..., 1, 1] = 2.0 * var ** 2 + 4.0 * psi ** 2 * var
        return cov
