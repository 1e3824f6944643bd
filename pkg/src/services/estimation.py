"""Constrained and full maximum-likelihood fitting.

The log-likelihood separates over strata once psi is fixed, so the
constrained fit is q independent one-dimensional maximizations solved
together by the vectorised safeguarded Newton in ``src.utils.solvers``.
The full fit maximizes the profile log-likelihood with the same solver
applied to the scalar psi.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.config import Config
from src.models.base import (ParamPoint, StratumModel, stratum_information, total_loglik,
                             total_score)
from src.models.dataset import StratifiedDataset
from src.utils.errors import (AllStrataDiverged, EstimationError, NoConvergence,
                              NonFiniteDensity, NonPositiveInformation, StratumDiverged,
                              ValidationError)
from src.utils.solvers import maximize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    """Solver settings shared by the constrained and full fits.

    ``drop_divergent`` chooses what happens to a stratum whose nuisance
    estimate escapes to infinity: drop it (recorded in ``dropped_strata``)
    or raise ``StratumDiverged``. ``None`` means drop for discrete models
    and raise otherwise.
    """
    grad_tol: float = Config.GRAD_TOL
    max_iter: int = Config.MAX_ITER
    bound: float = Config.NUISANCE_BOUND
    drop_divergent: Optional[bool] = None
    use_closed_form: bool = True

    def drops(self, model: StratumModel) -> bool:
        return model.discrete if self.drop_divergent is None else self.drop_divergent


@dataclass(frozen=True, eq=False)
class FitResult:
    """Maximum-likelihood fit over the retained strata."""
    theta: ParamPoint
    loglik: float
    iterations: int
    converged: bool
    dropped_strata: Tuple[int, ...] = field(default=())

    @property
    def psi(self) -> float:
        return self.theta.psi

    def to_dict(self) -> Dict[str, Any]:
        return {
            'psi_hat': self.theta.psi,
            'lambda_hat': self.theta.lam.tolist(),
            'loglik': self.loglik,
            'iterations': self.iterations,
            'converged': self.converged,
            'dropped_strata': list(self.dropped_strata),
        }


def retained(data: StratifiedDataset, fit: FitResult) -> StratifiedDataset:
    """The dataset restricted to the strata a fit kept."""
    if not fit.dropped_strata:
        return data
    positions = np.flatnonzero(np.isin(data.origin, fit.dropped_strata))
    return data.drop(positions)


def _nuisance_problem(model: StratumModel, data: StratifiedDataset, psi: float):
    def fun(lam):
        lam_obs = data.expand(lam)
        _, u_lam = model.score(data.y, data.xs, psi, lam_obs)
        _, _, j_ll = model.observed_info(data.y, data.xs, psi, lam_obs)
        return data.stratum_sum(u_lam), data.stratum_sum(j_ll)
    return fun


def fit_constrained(model: StratumModel, data: StratifiedDataset, psi: float,
                    start: Optional[np.ndarray] = None,
                    options: Optional[FitOptions] = None) -> FitResult:
    """Maximize the log-likelihood over the nuisance vector with psi fixed."""
    options = options or FitOptions()
    psi = float(psi)
    if not np.isfinite(psi):
        raise ValidationError("psi must be finite")

    closed = model.closed_form_nuisance(data, psi) if options.use_closed_form else None
    if closed is not None and np.all(np.isfinite(closed)):
        theta = ParamPoint(psi=psi, lam=closed)
        return FitResult(theta=theta, loglik=total_loglik(model, data, theta),
                         iterations=0, converged=True)

    if start is None or np.size(start) != data.q:
        start = model.nuisance_start(data, psi)
    result = maximize(_nuisance_problem(model, data, psi), start, grad_tol=options.grad_tol,
                      max_iter=options.max_iter, bound=options.bound)

    dropped: List[int] = []
    if result.diverged.any():
        positions = np.flatnonzero(result.diverged)
        if not options.drops(model):
            raise StratumDiverged(int(data.origin[positions[0]]))
        if positions.size == data.q:
            raise AllStrataDiverged(f"All {data.q} strata diverged at psi={psi:.6g}")
        dropped = [int(i) for i in data.origin[positions]]
        logger.debug(f"Dropping {len(dropped)} divergent strata at psi={psi:.6g}")

    keep = ~result.diverged
    if not result.converged[keep].all():
        bad = int(data.origin[np.flatnonzero(keep & ~result.converged)[0]])
        raise NoConvergence(f"Nuisance fit for stratum {bad} did not converge in "
                            f"{options.max_iter} iterations at psi={psi:.6g}")

    fitted = data.drop(np.flatnonzero(result.diverged)) if dropped else data
    theta = ParamPoint(psi=psi, lam=result.x[keep])
    return FitResult(theta=theta, loglik=total_loglik(model, fitted, theta),
                     iterations=result.iterations, converged=True,
                     dropped_strata=tuple(dropped))


def _block_profile_info(model: StratumModel, data: StratifiedDataset, theta: ParamPoint) -> float:
    j_pp, j_pl, j_ll = stratum_information(model, data, theta)
    return float(j_pp - np.sum(j_pl ** 2 / j_ll))


def _restrict(model: StratumModel, data: StratifiedDataset, psi: float,
              options: Optional[FitOptions]) -> Tuple[StratifiedDataset, FitResult]:
    fit = fit_constrained(model, data, psi, options=options)
    return retained(data, fit), fit


def fit_mle(model: StratumModel, data: StratifiedDataset,
            options: Optional[FitOptions] = None,
            psi_start: Optional[float] = None,
            lam_start: Optional[np.ndarray] = None) -> FitResult:
    """Maximize the profile log-likelihood over psi.

    Divergent strata are identified once, at the starting value, and
    excluded from every later constrained fit so the null and full fits
    share one set of retained strata.
    """
    options = options or FitOptions()
    psi0 = model.psi_start(data) if psi_start is None else float(psi_start)
    if not np.isfinite(psi0):
        psi0 = 0.0

    initial = fit_constrained(model, data, psi0, start=lam_start, options=options)
    work = retained(data, initial)
    inner = replace(options, drop_divergent=False)
    warm = {'lam': initial.theta.lam}

    def profile(psi_arr):
        psi = float(psi_arr[0])
        try:
            fit = fit_constrained(model, work, psi, start=warm['lam'], options=inner)
            warm['lam'] = fit.theta.lam
            u_p, _ = total_score(model, work, fit.theta)
            j_p = _block_profile_info(model, work, fit.theta)
        except (EstimationError, NonFiniteDensity) as e:
            logger.debug(f"Profile evaluation failed at psi={psi:.6g}: {e}")
            return np.array([np.nan]), np.array([np.nan])
        return np.array([u_p]), np.array([j_p])

    result = maximize(profile, [psi0], grad_tol=options.grad_tol, max_iter=options.max_iter,
                      bound=options.bound)
    if result.diverged[0]:
        raise NoConvergence(f"Profile maximizer for psi escaped beyond +/-{options.bound:g}")
    if not result.converged[0]:
        raise NoConvergence(f"Profile score did not reach {options.grad_tol:g} in "
                            f"{options.max_iter} iterations (|U_p|={abs(result.gradient[0]):.3g})")

    psi_hat = float(result.x[0])
    final = fit_constrained(model, work, psi_hat, start=warm['lam'], options=inner)
    logger.debug(f"Full fit converged after {result.iterations} outer iterations, psi_hat={psi_hat:.8g}")
    return FitResult(theta=final.theta, loglik=final.loglik, iterations=result.iterations,
                     converged=True, dropped_strata=initial.dropped_strata)


def profile_loglik(model: StratumModel, data: StratifiedDataset, psi: float,
                   options: Optional[FitOptions] = None) -> float:
    """l_p(psi) = l(psi, lam_hat_psi)."""
    return fit_constrained(model, data, psi, options=options).loglik


def profile_curve(model: StratumModel, data: StratifiedDataset, psis: Sequence[float],
                  options: Optional[FitOptions] = None) -> np.ndarray:
    """Profile log-likelihood on a grid of psi values, warm-starting along the grid."""
    values = np.empty(len(psis))
    start = None
    for i, psi in enumerate(psis):
        fit = fit_constrained(model, data, psi, start=start, options=options)
        start = fit.theta.lam if not fit.dropped_strata else None
        values[i] = fit.loglik
    return values


def profile_score(model: StratumModel, data: StratifiedDataset, psi: float,
                  fit: Optional[FitResult] = None, options: Optional[FitOptions] = None) -> float:
    """U_p(psi) = sum over strata of U_psi at (psi, lam_hat_psi)."""
    if fit is None:
        data, fit = _restrict(model, data, psi, options)
    else:
        data = retained(data, fit)
    u_psi, _ = total_score(model, data, fit.theta)
    return u_psi


def profile_info(model: StratumModel, data: StratifiedDataset, psi: float,
                 fit: Optional[FitResult] = None, options: Optional[FitOptions] = None) -> float:
    """Profile observed information j_pp - sum_i j_pl_i^2 / j_ll_i at (psi, lam_hat_psi)."""
    if fit is None:
        data, fit = _restrict(model, data, psi, options)
    else:
        data = retained(data, fit)
    value = _block_profile_info(model, data, fit.theta)
    if not value > 0:
        raise NonPositiveInformation(f"Profile information {value:.6g} at psi={fit.psi:.6g}")
    return value


def partial_expected_info(model: StratumModel, data: StratifiedDataset, theta: ParamPoint) -> float:
    """i_pp - sum_i i_pl_i^2 / i_ll_i with per-stratum sums taken first."""
    i_pp, i_pl, i_ll = stratum_information(model, data, theta, expected=True)
    value = float(i_pp - np.sum(i_pl ** 2 / i_ll))
    if not value > 0:
        raise NonPositiveInformation(f"Partial information {value:.6g} at psi={theta.psi:.6g}")
    return value


def efficient_score(model: StratumModel, data: StratifiedDataset, theta: ParamPoint) -> float:
    """U_psi minus its projection on the nuisance scores under expected information."""
    _, i_pl, i_ll = stratum_information(model, data, theta, expected=True)
    u_psi, u_lam = total_score(model, data, theta)
    return float(u_psi - np.sum(i_pl / i_ll * u_lam))
