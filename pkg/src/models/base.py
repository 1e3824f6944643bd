"""Parameter points and the behavioral contract every stratified model satisfies."""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.models.dataset import StratifiedDataset
from src.utils.errors import DimensionMismatch, NonFiniteDensity, ValidationError

Blocks = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class ParamPoint:
    """Interest parameter ``psi`` with per-stratum nuisance vector ``lam``."""
    psi: float
    lam: np.ndarray

    def __post_init__(self):
        psi = float(self.psi)
        lam = np.array(self.lam, dtype=float).reshape(-1)
        if not np.isfinite(psi) or not np.all(np.isfinite(lam)):
            raise ValidationError("Parameter components must be finite")
        lam.setflags(write=False)
        object.__setattr__(self, 'psi', psi)
        object.__setattr__(self, 'lam', lam)

    @property
    def q(self) -> int:
        return int(self.lam.size)

    def check(self, data: StratifiedDataset) -> None:
        if self.q != data.q:
            raise DimensionMismatch(f"Nuisance vector has length {self.q}, dataset has {data.q} strata")

    def to_dict(self) -> Dict[str, Any]:
        return {'psi': self.psi, 'lambda': self.lam.tolist()}


class StratumModel(ABC):
    """Per-observation likelihood contract for one stratum.

    All methods are elementwise: ``y``, ``x`` and ``lam`` are arrays of the
    same shape (``lam`` repeated per observation), ``psi`` is a scalar.
    Information blocks are returned as ``(psi-psi, psi-lambda,
    lambda-lambda)`` triples.
    """

    name: str = ''
    discrete: bool = False
    # Response used to fill simulation templates; must lie in the support
    placeholder_y: float = 0.5

    @abstractmethod
    def log_density(self, y, x, psi, lam) -> np.ndarray:
        ...

    @abstractmethod
    def score(self, y, x, psi, lam) -> Tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def observed_info(self, y, x, psi, lam) -> Blocks:
        ...

    @abstractmethod
    def expected_info(self, x, psi, lam) -> Blocks:
        ...

    @abstractmethod
    def sample(self, x, psi, lam, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def psi_start(self, data: StratifiedDataset) -> float:
        """Moment-based starting value for the interest parameter."""

    @abstractmethod
    def nuisance_start(self, data: StratifiedDataset, psi: float) -> np.ndarray:
        """Per-stratum starting values for the constrained fit."""

    def closed_form_nuisance(self, data: StratifiedDataset, psi: float) -> Optional[np.ndarray]:
        """Exact constrained nuisance estimate when one exists."""
        return None

    @property
    def has_analytic_expectations(self) -> bool:
        return False

    def check_observations(self, data: StratifiedDataset) -> None:
        """Reject observations outside the model support."""

    def design_covariates(self, m: int) -> Optional[np.ndarray]:
        """Covariates the model fixes for a stratum of size ``m``."""
        return None

    def prepare(self, data: StratifiedDataset) -> StratifiedDataset:
        """Validate a dataset against the model; fill design covariates."""
        self.check_observations(data)
        return data

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"


class ExponentialFamilyMixin:
    """Analytic moment expectations for exponential-family observations.

    Models provide the natural parameter, its Jacobian with respect to
    ``(psi, lam)`` and the covariance of the sufficient statistic. The score
    is then ``D^T (T - E T)`` so cross-moments of likelihood quantities
    follow in closed form.
    """

    @property
    def has_analytic_expectations(self) -> bool:
        return True

    def natural_params(self, x, psi, lam) -> np.ndarray:
        """Shape ``(n, d)``."""
        raise NotImplementedError

    def natural_jacobian(self, x, psi, lam) -> np.ndarray:
        """Shape ``(n, d, 2)``: columns are d/dpsi and d/dlam."""
        raise NotImplementedError

    def sufficient_cov(self, x, psi, lam) -> np.ndarray:
        """Shape ``(n, d, d)``."""
        raise NotImplementedError

    def loglik_score_cov(self, x, theta_a, theta_b, theta_ref) -> np.ndarray:
        """E_ref[{l(theta_a) - l(theta_b)} U(theta_ref)] per observation, shape ``(n, 2)``."""
        eta_diff = self.natural_params(x, *theta_a) - self.natural_params(x, *theta_b)
        sigma = self.sufficient_cov(x, *theta_ref)
        jac = self.natural_jacobian(x, *theta_ref)
        return np.einsum('nd,nde,nek->nk', eta_diff, sigma, jac)

    def score_score_cov(self, x, theta_b, theta_ref) -> np.ndarray:
        """E_ref[U(theta_b) U(theta_ref)^T] per observation, shape ``(n, 2, 2)``."""
        jac_b = self.natural_jacobian(x, *theta_b)
        sigma = self.sufficient_cov(x, *theta_ref)
        jac_ref = self.natural_jacobian(x, *theta_ref)
        return np.einsum('ndj,nde,nek->njk', jac_b, sigma, jac_ref)


def _expanded(data: StratifiedDataset, theta: ParamPoint) -> np.ndarray:
    theta.check(data)
    return data.expand(theta.lam)


def total_loglik(model: StratumModel, data: StratifiedDataset, theta: ParamPoint) -> float:
    """Sum of log-densities over all strata and observations."""
    lam = _expanded(data, theta)
    with np.errstate(all='ignore'):
        values = model.log_density(data.y, data.xs, theta.psi, lam)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteDensity(
            f"Log-density not finite at observation {bad} (stratum {int(data.stratum[bad])}, y={data.y[bad]!r})"
        )
    return float(np.sum(values))


def total_score(model: StratumModel, data: StratifiedDataset,
                theta: ParamPoint) -> Tuple[float, np.ndarray]:
    """Score for psi and the per-stratum nuisance scores."""
    lam = _expanded(data, theta)
    u_psi, u_lam = model.score(data.y, data.xs, theta.psi, lam)
    if not (np.all(np.isfinite(u_psi)) and np.all(np.isfinite(u_lam))):
        raise NonFiniteDensity("Score not finite at the given parameter")
    return float(np.sum(u_psi)), data.stratum_sum(u_lam)


def stratum_information(model: StratumModel, data: StratifiedDataset, theta: ParamPoint,
                        expected: bool = False) -> Tuple[float, np.ndarray, np.ndarray]:
    """Total psi-psi information with per-stratum cross and nuisance blocks."""
    lam = _expanded(data, theta)
    if expected:
        i_pp, i_pl, i_ll = model.expected_info(data.xs, theta.psi, lam)
    else:
        i_pp, i_pl, i_ll = model.observed_info(data.y, data.xs, theta.psi, lam)
    i_pp = np.broadcast_to(i_pp, data.y.shape)
    return float(np.sum(i_pp)), data.stratum_sum(i_pl), data.stratum_sum(i_ll)


def layout(model: StratumModel, q: int, m: int) -> StratifiedDataset:
    """Balanced q x m placeholder dataset carrying the model's design covariates."""
    if q < 1 or m < 2:
        raise ValidationError("Need q >= 1 strata of size m >= 2")
    x = model.design_covariates(m)
    return StratifiedDataset.balanced(np.full((q, m), model.placeholder_y), x)


def simulate(model: StratumModel, template: StratifiedDataset, theta: ParamPoint,
             rng: np.random.Generator) -> StratifiedDataset:
    """Draw a dataset with the template's layout at ``theta``."""
    lam = _expanded(template, theta)
    return template.with_y(model.sample(template.xs, theta.psi, lam, rng))
