"""Stratified beta model with common precision."""

import numpy as np
from scipy.special import expit, logit

from src.models.base import StratumModel
from src.models.dataset import StratifiedDataset
from src.utils.errors import ValidationError
from src.utils.special import digamma, log_beta, trigamma

# Largest double below one; keeps log(1 - y) finite for draws that round to 1
_ONE_MINUS = np.nextafter(1.0, 0.0)


class BetaSharedPrecision(StratumModel):
    """Beta observations with precision ``exp(psi)`` and stratum mean ``expit(lam_i)``."""

    name = 'beta'

    @staticmethod
    def _shapes(psi, lam):
        phi = np.exp(psi)
        mu = expit(lam)
        return phi, mu, mu * phi, expit(np.negative(lam)) * phi

    def log_density(self, y, x, psi, lam):
        _, _, a, b = self._shapes(psi, lam)
        return -log_beta(a, b) + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y)

    def _partials(self, y, psi, lam):
        phi, mu, a, b = self._shapes(psi, lam)
        dig_ab = digamma(phi)
        s_a = dig_ab - digamma(a) + np.log(y)
        s_b = dig_ab - digamma(b) + np.log1p(-y)
        return phi, mu, a, b, s_a, s_b

    def score(self, y, x, psi, lam):
        phi, mu, a, b, s_a, s_b = self._partials(y, psi, lam)
        w = a * b / phi ** 2
        return a * s_a + b * s_b, phi * w * (s_a - s_b)

    def _info_terms(self, psi, lam):
        phi, mu, a, b = self._shapes(psi, lam)
        w = a * b / phi ** 2
        t_a, t_b, t_ab = trigamma(a), trigamma(b), trigamma(phi)
        i_pp = a ** 2 * t_a + b ** 2 * t_b - phi ** 2 * t_ab
        i_pl = phi * w * (a * t_a - b * t_b)
        i_ll = (phi * w) ** 2 * (t_a + t_b)
        return mu, i_pp, i_pl, i_ll

    def observed_info(self, y, x, psi, lam):
        u_psi, u_lam = self.score(y, x, psi, lam)
        mu, i_pp, i_pl, i_ll = self._info_terms(psi, lam)
        return i_pp - u_psi, i_pl - u_lam, i_ll - (1.0 - 2.0 * mu) * u_lam

    def expected_info(self, x, psi, lam):
        _, i_pp, i_pl, i_ll = self._info_terms(psi, lam)
        return i_pp, i_pl, i_ll

    def sample(self, x, psi, lam, rng):
        _, _, a, b = self._shapes(psi, lam)
        y = rng.beta(a, b)
        return np.clip(y, np.finfo(float).tiny, _ONE_MINUS)

    def check_observations(self, data: StratifiedDataset) -> None:
        if np.any((data.y <= 0) | (data.y >= 1)):
            raise ValidationError("Beta observations must lie in (0, 1)")

    def psi_start(self, data: StratifiedDataset) -> float:
        means = data.stratum_means()
        variances = data.stratum_means((data.y - data.expand(means)) ** 2)
        ratio = means * (1.0 - means) / np.maximum(variances, 1e-12) - 1.0
        return float(np.log(np.clip(np.median(ratio), 1e-1, 1e4)))

    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        return logit(np.clip(data.stratum_means(), 1e-6, 1.0 - 1e-6))
