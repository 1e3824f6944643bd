"""First-order likelihood pivots, moment adjustment and normal-scale transforms."""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from src.config.config import Config
from src.models.base import StratumModel
from src.models.dataset import StratifiedDataset
from src.services.estimation import (FitOptions, FitResult, fit_constrained, fit_mle,
                                     partial_expected_info, profile_info, profile_score,
                                     retained)
from src.utils.errors import NegativeDeviance, ValidationError

logger = logging.getLogger(__name__)

ADJUST_MODES = ('location', 'location_scale')


@dataclass(frozen=True)
class PivotSet:
    """Signed likelihood root, score and Wald statistics at ``psi0``."""
    r: float
    s: float
    t: float
    psi0: float

    def get(self, name: str) -> float:
        return {'r': self.r, 's': self.s, 't': self.t}[name]

    def to_dict(self) -> Dict[str, Any]:
        return {'psi0': self.psi0, 'r': self.r, 's': self.s, 't': self.t}


@dataclass(frozen=True)
class MomentAdjustment:
    """Bootstrap mean and standard deviation of a statistic."""
    mean: float
    sd: float
    source: str

    def __post_init__(self):
        if not self.sd > 0:
            raise ValidationError("Moment adjustment requires sd > 0")
        if self.source not in ('constrained', 'unconstrained'):
            raise ValidationError(f"Unknown moment source '{self.source}'")

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean, 'sd': self.sd, 'source': self.source}


def _check_same_strata(full_fit: FitResult, constrained_fit: FitResult) -> None:
    if full_fit.dropped_strata != constrained_fit.dropped_strata:
        raise ValidationError("Full and constrained fits must retain the same strata")


def signed_root(model: StratumModel, data: StratifiedDataset, psi0: float,
                full_fit: FitResult, constrained_fit: FitResult,
                deviance_tol: float = Config.DEVIANCE_TOL) -> float:
    """sign(psi_hat - psi0) * sqrt(2 {l(theta_hat) - l(theta_hat_psi0)})."""
    _check_same_strata(full_fit, constrained_fit)
    drop = full_fit.loglik - constrained_fit.loglik
    if drop < -deviance_tol:
        raise NegativeDeviance(f"Constrained log-likelihood exceeds full by {-drop:.3g} at psi0={psi0:.6g}")
    drop = max(drop, 0.0)
    return float(np.sign(full_fit.psi - psi0) * np.sqrt(2.0 * drop))


def score_stat(model: StratumModel, data: StratifiedDataset, psi0: float,
               constrained_fit: FitResult) -> float:
    """U_p(psi0) / sqrt(partial expected information at theta_hat_psi0)."""
    kept = retained(data, constrained_fit)
    u_p = profile_score(model, kept, psi0, fit=constrained_fit)
    return u_p / np.sqrt(partial_expected_info(model, kept, constrained_fit.theta))


def wald_stat(model: StratumModel, data: StratifiedDataset, psi0: float,
              full_fit: FitResult) -> float:
    """(psi_hat - psi0) * sqrt(j_p(psi_hat))."""
    j_p = profile_info(model, data, full_fit.psi, fit=full_fit)
    return float((full_fit.psi - psi0) * np.sqrt(j_p))


def compute_pivots(model: StratumModel, data: StratifiedDataset, psi0: float,
                   full_fit: Optional[FitResult] = None,
                   constrained_fit: Optional[FitResult] = None,
                   options: Optional[FitOptions] = None) -> PivotSet:
    """R, S and T at ``psi0`` over the strata the full fit retains."""
    if full_fit is None:
        full_fit = fit_mle(model, data, options=options)
    if constrained_fit is None:
        constrained_fit = null_fit(model, data, psi0, full_fit, options)
    return PivotSet(
        r=signed_root(model, data, psi0, full_fit, constrained_fit),
        s=score_stat(model, data, psi0, constrained_fit),
        t=wald_stat(model, data, psi0, full_fit),
        psi0=float(psi0),
    )


def _strict(options: Optional[FitOptions]) -> FitOptions:
    return replace(options or FitOptions(), drop_divergent=False)


def _tag(fit: FitResult, like: FitResult) -> FitResult:
    """Carry the dropped-strata record of ``like`` onto a fit made on retained data."""
    return FitResult(theta=fit.theta, loglik=fit.loglik, iterations=fit.iterations,
                     converged=fit.converged, dropped_strata=like.dropped_strata)


def null_fit(model: StratumModel, data: StratifiedDataset, psi0: float,
             full_fit: FitResult, options: Optional[FitOptions] = None) -> FitResult:
    """Constrained fit at ``psi0`` over the strata retained by ``full_fit``."""
    kept = retained(data, full_fit)
    fit = fit_constrained(model, kept, psi0, start=full_fit.theta.lam, options=_strict(options))
    return _tag(fit, full_fit)


def adjust(stat: float, adj: MomentAdjustment, mode: str) -> float:
    """Location or location-and-scale adjustment by bootstrap moments."""
    if mode == 'location':
        return stat - adj.mean
    if mode == 'location_scale':
        return (stat - adj.mean) / adj.sd
    raise ValidationError(f"Unknown adjustment mode '{mode}'")


def normal_pvalue(stat):
    """Standard normal distribution function."""
    return ndtr(stat)


def inverse_normal(p):
    """Standard normal quantile for p in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0) & (arr < 1)):
        raise ValidationError("inverse_normal requires 0 < p < 1")
    return ndtri(p)
