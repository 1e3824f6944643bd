"""Modified signed likelihood root from expected moments of likelihood quantities.

The sample-space derivatives in R* are replaced by covariances of the
log-likelihood and score under a fitted parameter (Severini's
approximation). With stratum-separable nuisance parameters the matrix of
covariances is an arrowhead, so every determinant is a product over strata
and is accumulated on the log scale.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from src.config.config import Config
from src.models.base import ParamPoint, StratumModel, stratum_information
from src.models.dataset import StratifiedDataset
from src.services.estimation import FitOptions, FitResult, profile_info, retained
from src.services.pivots import null_fit, signed_root
from src.utils.errors import (NonPositiveInformation, SignMismatch, UnavailableExpectations,
                              ValidationError)
from src.utils.rng import EXPECTATION, stream

logger = logging.getLogger(__name__)

METHODS = ('auto', 'analytic', 'monte_carlo')
METHOD_LABELS = {'analytic': 'analytic-expectation', 'monte_carlo': 'monte-carlo-expectation'}

# Observations per Monte Carlo block; fixed so draws do not depend on memory settings
_MC_BLOCK = 256


@dataclass(frozen=True)
class RStarOptions:
    """Settings for the modified signed root.

    ``expectation_point`` selects the parameter the moments are taken
    under: ``'full'`` (theta_hat) or ``'constrained'`` (theta_hat_psi0). Left
    unset, analytic moments use theta_hat and Monte Carlo moments are drawn
    at theta_hat_psi0.
    """
    method: str = 'auto'
    mc_size: Optional[int] = Config.MC_SIZE
    seed: int = 0
    stream_key: Tuple[int, ...] = (EXPECTATION,)
    window: float = Config.RSTAR_WINDOW
    expectation_point: Optional[str] = None
    fit_options: Optional[FitOptions] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"Unknown expectation method '{self.method}'")
        if self.mc_size is not None and self.mc_size < 0:
            raise ValidationError("mc_size must be non-negative")
        if not self.window >= 0:
            raise ValidationError("window must be non-negative")
        if self.expectation_point not in (None, 'full', 'constrained'):
            raise ValidationError(f"Unknown expectation point '{self.expectation_point}'")


@dataclass(frozen=True)
class RStarResult:
    rstar: float
    r: float
    correction: float
    method: str
    mc_size: Optional[int] = None
    interpolated: bool = field(default=False)
    expectation_point: str = 'full'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rstar': self.rstar,
            'r': self.r,
            'correction': self.correction,
            'method': self.method,
            'mc_size': self.mc_size,
            'interpolated': self.interpolated,
            'expectation_point': self.expectation_point,
        }


def _resolve_method(model: StratumModel, options: RStarOptions) -> str:
    mc_enabled = bool(options.mc_size and options.mc_size >= 2)
    if options.method == 'analytic' or (options.method == 'auto' and model.has_analytic_expectations):
        if not model.has_analytic_expectations:
            raise UnavailableExpectations(f"Model '{model.name}' has no analytic expectations")
        return 'analytic'
    if not mc_enabled:
        raise UnavailableExpectations(
            f"Model '{model.name}' needs Monte Carlo expectations but mc_size={options.mc_size}"
        )
    return 'monte_carlo'


def _per_obs(data: StratifiedDataset, theta: ParamPoint) -> Tuple[float, np.ndarray]:
    return theta.psi, data.expand(theta.lam)


def _analytic_moments(model, data, full, null, ref) -> np.ndarray:
    cross = model.loglik_score_cov(data.xs, full, null, ref)
    scores = model.score_score_cov(data.xs, null, ref)
    return np.stack([cross[:, 0], cross[:, 1], scores[:, 1, 0], scores[:, 1, 1]])


def _covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a - a.mean(axis=0)) * (b - b.mean(axis=0)), axis=0) / (a.shape[0] - 1)


def _monte_carlo_moments(model, data, full, null, ref, size: int,
                         rng: np.random.Generator) -> np.ndarray:
    out = np.empty((4, data.n))
    for start in range(0, data.n, _MC_BLOCK):
        block = slice(start, min(start + _MC_BLOCK, data.n))
        shape = (size, block.stop - block.start)
        x = np.broadcast_to(data.xs[block], shape)
        at = {name: (theta[0], np.broadcast_to(theta[1][block], shape))
              for name, theta in (('full', full), ('null', null), ('ref', ref))}
        with np.errstate(all='ignore'):
            y = model.sample(x, *at['ref'], rng)
            drop = model.log_density(y, x, *at['full']) - model.log_density(y, x, *at['null'])
            u_psi, u_lam = model.score(y, x, *at['ref'])
            _, v_lam = model.score(y, x, *at['null'])
        out[0, block] = _covariance(drop, u_psi)
        out[1, block] = _covariance(drop, u_lam)
        out[2, block] = _covariance(v_lam, u_psi)
        out[3, block] = _covariance(v_lam, u_lam)
    if not np.all(np.isfinite(out)):
        raise NonPositiveInformation("Monte Carlo moments are not finite")
    return out


def _positive(name: str, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(values > 0):
        raise NonPositiveInformation(f"{name} is not positive")
    return values


def _log_u(model: StratumModel, data: StratifiedDataset, full_fit: FitResult,
           constrained_fit: FitResult, moments: np.ndarray) -> Tuple[float, float]:
    """Sign and log-magnitude of the adjusted quantity u."""
    a0 = float(np.sum(moments[0]))
    b, c, d = (data.stratum_sum(row) for row in moments[1:])
    schur = a0 - float(np.sum(b * c / d))
    sign = float(np.prod(np.sign(d)) * np.sign(schur))

    i_pp, i_pl, i_ll = stratum_information(model, data, full_fit.theta, expected=True)
    i_ll = _positive("Expected nuisance information", i_ll)
    i_partial = float(_positive("Partial information", i_pp - np.sum(i_pl ** 2 / i_ll)))
    j_pp, j_pl, j_ll = stratum_information(model, data, full_fit.theta)
    j_ll = _positive("Observed nuisance information at the full fit", j_ll)
    j_p = float(_positive("Profile information", j_pp - np.sum(j_pl ** 2 / j_ll)))
    _, _, jn_ll = stratum_information(model, data, constrained_fit.theta)
    jn_ll = _positive("Observed nuisance information at the constrained fit", jn_ll)

    with np.errstate(divide='ignore'):
        per_stratum = np.log(np.abs(d)) - np.log(i_ll) + 0.5 * np.log(j_ll) - 0.5 * np.log(jn_ll)
        log_abs = float(np.sum(per_stratum) + np.log(abs(schur)) + 0.5 * np.log(j_p) - np.log(i_partial))
    return sign, log_abs


def modified_root(r: float, u: float) -> float:
    """r + log(u / r) / r for u and r of the same sign."""
    if r == 0 or not u / r > 0:
        raise SignMismatch(f"u={u:.6g} and r={r:.6g} do not share a sign")
    return r + np.log(u / r) / r


def _modified_root_log(r: float, sign: float, log_abs_u: float) -> float:
    if r == 0 or sign != np.sign(r) or not np.isfinite(log_abs_u):
        raise SignMismatch(f"Adjusted quantity (sign {sign:+.0f}) does not match r={r:.6g}")
    return r + (log_abs_u - np.log(abs(r))) / r


class _Evaluator:
    """R and R* at arbitrary psi for one dataset and full fit."""

    def __init__(self, model: StratumModel, data: StratifiedDataset, full_fit: FitResult,
                 options: RStarOptions):
        self.model = model
        self.data = data
        self.kept = retained(data, full_fit)
        self.full_fit = full_fit
        self.options = options
        self.method = _resolve_method(model, options)
        self.expectation_point = options.expectation_point or (
            'constrained' if self.method == 'monte_carlo' else 'full')

    def null(self, psi: float) -> FitResult:
        return null_fit(self.model, self.data, psi, self.full_fit, self.options.fit_options)

    def r(self, psi: float, constrained_fit: Optional[FitResult] = None) -> float:
        constrained_fit = constrained_fit or self.null(psi)
        return signed_root(self.model, self.data, psi, self.full_fit, constrained_fit)

    def moments(self, constrained_fit: FitResult) -> np.ndarray:
        full = _per_obs(self.kept, self.full_fit.theta)
        null = _per_obs(self.kept, constrained_fit.theta)
        ref = full if self.expectation_point == 'full' else null
        if self.method == 'analytic':
            return _analytic_moments(self.model, self.kept, full, null, ref)
        # Same stream at every psi so R* is smooth in psi
        rng = stream(self.options.seed, *self.options.stream_key)
        return _monte_carlo_moments(self.model, self.kept, full, null, ref,
                                    self.options.mc_size, rng)

    def rstar(self, psi: float, constrained_fit: Optional[FitResult] = None) -> Tuple[float, float]:
        constrained_fit = constrained_fit or self.null(psi)
        r = self.r(psi, constrained_fit)
        sign, log_abs = _log_u(self.model, self.kept, self.full_fit, constrained_fit,
                               self.moments(constrained_fit))
        return r, _modified_root_log(r, sign, log_abs)

    def psi_at(self, target: float) -> float:
        """psi where R(psi) equals ``target``; R decreases in psi through psi_hat."""
        psi_hat = self.full_fit.psi
        se = 1.0 / np.sqrt(profile_info(self.model, self.data, psi_hat, fit=self.full_fit))
        direction = -np.sign(target)
        step = 1.5 * abs(target) * se

        def gap(psi):
            return self.r(psi) - target

        edge = psi_hat + direction * step
        for _ in range(40):
            if np.sign(gap(edge)) == np.sign(target):
                break
            step *= 2.0
            edge = psi_hat + direction * step
        else:
            raise NonPositiveInformation(f"Could not bracket R(psi) = {target:g}")
        lo, hi = sorted((psi_hat, edge))
        return brentq(gap, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)


def rstar(model: StratumModel, data: StratifiedDataset, psi0: float,
          full_fit: FitResult, constrained_fit: FitResult,
          options: Optional[RStarOptions] = None) -> RStarResult:
    """Modified signed likelihood root at ``psi0``.

    For ``|r|`` below the window width the value is the quadratic in r
    through R* at R = -w, +w and 2w sign(r).
    """
    options = options or RStarOptions()
    evaluator = _Evaluator(model, data, full_fit, options)
    label = METHOD_LABELS[evaluator.method]
    mc_size = options.mc_size if evaluator.method == 'monte_carlo' else None
    r = evaluator.r(psi0, constrained_fit)

    if abs(r) >= options.window and (r != 0 or options.window == 0):
        _, value = evaluator.rstar(psi0, constrained_fit)
        return RStarResult(rstar=float(value), r=r, correction=float(value - r),
                           method=label, mc_size=mc_size,
                           expectation_point=evaluator.expectation_point)

    w = options.window
    side = 1.0 if r >= 0 else -1.0
    targets = (-w, w, 2.0 * w * side)
    points = [evaluator.rstar(evaluator.psi_at(target)) for target in targets]
    rs, values = (np.array(column) for column in zip(*points))
    value = float(np.polyval(np.polyfit(rs, values, 2), r))
    logger.debug(f"R* interpolated inside |r| < {w:g} at r={r:.3g}")
    return RStarResult(rstar=value, r=r, correction=value - r, method=label,
                       mc_size=mc_size, interpolated=True,
                       expectation_point=evaluator.expectation_point)
