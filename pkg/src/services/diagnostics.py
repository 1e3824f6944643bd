"""Empirical moments of pivots under a known parameter."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.config.config import Config
from src.models.base import ParamPoint, StratumModel, layout, simulate
from src.services.estimation import FitOptions, efficient_score, fit_mle, partial_expected_info
from src.services.pivots import compute_pivots, null_fit
from src.utils.errors import BudgetExceeded, StratBootError, ValidationError
from src.utils.rng import DATA, stream

logger = logging.getLogger(__name__)

DIAGNOSTIC_STATISTICS = ('r', 's', 't', 'efficient_score')


@dataclass(frozen=True)
class MomentDiagnostic:
    """Sample mean and variance of a statistic with their standard errors."""
    statistic: str
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    n_eff: int
    failures: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'statistic': self.statistic,
            'mean': self.mean,
            'variance': self.variance,
            'mean_se': self.mean_se,
            'variance_se': self.variance_se,
            'n_eff': self.n_eff,
            'failures': self.failures,
        }


def _draw(model: StratumModel, template, theta: ParamPoint, statistic: str,
          rep: int, seed: int, options: Optional[FitOptions]) -> float:
    data = simulate(model, template, theta, stream(seed, DATA, rep))
    if statistic == 'efficient_score':
        return efficient_score(model, data, theta) / np.sqrt(partial_expected_info(model, data, theta))
    full = fit_mle(model, data, options=options)
    null = null_fit(model, data, theta.psi, full, options)
    return compute_pivots(model, data, theta.psi, full, null).get(statistic)


def simulate_statistic(model: StratumModel, theta: ParamPoint, q: int, m: int, statistic: str,
                       n_reps: int, seed: int,
                       fail_budget: float = Config.EXPERIMENT_FAIL_BUDGET,
                       options: Optional[FitOptions] = None) -> np.ndarray:
    """Draws of a statistic evaluated at the true psi over fresh datasets.

    Replicate ``rep`` uses the data stream ``(0, rep)``; failed replicates
    are skipped and counted against ``fail_budget``.
    """
    if statistic not in DIAGNOSTIC_STATISTICS:
        raise ValidationError(f"Unknown statistic '{statistic}'; choose from {DIAGNOSTIC_STATISTICS}")
    if n_reps < 1:
        raise ValidationError("n_reps must be at least 1")
    if theta.q != q:
        raise ValidationError(f"theta has {theta.q} nuisance values for q={q}")

    template = model.prepare(layout(model, q, m))
    values = []
    failures = 0
    for rep in range(n_reps):
        try:
            value = _draw(model, template, theta, statistic, rep, seed, options)
        except StratBootError as e:
            logger.debug(f"Replicate {rep} failed: {e}")
            failures += 1
            continue
        if np.isfinite(value):
            values.append(value)
        else:
            failures += 1

    if failures:
        logger.warning(f"{failures} of {n_reps} replicates failed for statistic {statistic}")
    if failures > fail_budget * n_reps or not values:
        raise BudgetExceeded(f"{failures} of {n_reps} replicates failed (budget {fail_budget:.2%})",
                             payload={'failures': failures, 'n_reps': n_reps})
    return np.array(values)


def summarize_moments(values, statistic: str, failures: int = 0) -> MomentDiagnostic:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ValidationError("Need at least two values for a moment diagnostic")
    centered = values - values.mean()
    variance = float(np.sum(centered ** 2) / (n - 1))
    fourth = float(np.mean(centered ** 4))
    return MomentDiagnostic(
        statistic=statistic,
        mean=float(values.mean()),
        variance=variance,
        mean_se=float(np.sqrt(variance / n)),
        variance_se=float(np.sqrt(max(fourth - variance ** 2, 0.0) / n)),
        n_eff=n,
        failures=failures,
    )


def moment_diagnostic(model: StratumModel, theta0: ParamPoint, q: int, m: int, statistic: str,
                      n_reps: int, seed: int,
                      fail_budget: float = Config.EXPERIMENT_FAIL_BUDGET,
                      options: Optional[FitOptions] = None) -> MomentDiagnostic:
    """Monte Carlo mean and variance of ``statistic`` at ``theta0``."""
    values = simulate_statistic(model, theta0, q, m, statistic, n_reps, seed,
                                fail_budget=fail_budget, options=options)
    result = summarize_moments(values, statistic, failures=n_reps - values.size)
    logger.info(f"{model.name} {statistic}: mean {result.mean:.4f} (se {result.mean_se:.4f}), "
                f"variance {result.variance:.4f} (se {result.variance_se:.4f})")
    return result
