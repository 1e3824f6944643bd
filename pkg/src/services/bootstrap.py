"""Constrained and unconstrained parametric bootstrap.

Replicate ``k`` of a run draws its data from ``stream(seed, *stream_key,
variant_code, k)``, so a replicate's outcome depends only on the plan and
the observed data. Chunks of replicates may run in worker processes; the
tally is always taken over replicates in index order.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config.config import Config
from src.models.base import ParamPoint, StratumModel, simulate
from src.models.dataset import StratifiedDataset
from src.services.estimation import FitOptions, FitResult, fit_mle, retained
from src.services.pivots import MomentAdjustment, compute_pivots, null_fit
from src.utils.errors import DegenerateSample, StratBootError, TooManyFailures, ValidationError
from src.utils.rng import VARIANT_CODES, stream

logger = logging.getLogger(__name__)

STATISTICS = ('r', 's', 't')


class BootstrapPlan(BaseModel):
    """Validated bootstrap request."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    variant: Literal['constrained', 'unconstrained']
    k: int = Field(default=Config.BOOTSTRAP_K, ge=1)
    seed: int = Field(ge=0, lt=2 ** 64)
    statistic: Literal['r', 's', 't'] = 'r'
    fail_budget: float = Field(default=Config.BOOTSTRAP_FAIL_BUDGET, ge=0.0, le=1.0)
    workers: int = Field(default=1, ge=1)
    stream_key: Tuple[int, ...] = ()
    # Start replicate refits from the observed full fit
    warm_start: bool = True


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Bootstrap p-value for one statistic with the replicate sample behind it."""
    variant: str
    statistic: str
    observed: float
    pvalue: float
    replicate_stats: np.ndarray
    failures: int
    k: int
    moments: Optional[MomentAdjustment] = field(default=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'variant': self.variant,
            'statistic': self.statistic,
            'observed': self.observed,
            'pvalue': self.pvalue,
            'k': self.k,
            'failures': self.failures,
            'moments': self.moments.to_dict() if self.moments else None,
        }


def tail_pvalue(replicate_stats: Sequence[float], observed: float) -> float:
    """Fraction of replicates at or below the observed value."""
    stats = np.asarray(replicate_stats, dtype=float)
    if stats.size == 0:
        raise ValidationError("No replicate statistics to compare against")
    return float(np.count_nonzero(stats <= observed)) / stats.size


def sample_moments(replicate_stats: Sequence[float], source: str) -> MomentAdjustment:
    """Mean and standard deviation (divisor K - 1) of replicate statistics."""
    stats = np.asarray(replicate_stats, dtype=float)
    if stats.size < 2:
        raise DegenerateSample(f"Need at least 2 replicates for moments, got {stats.size}")
    sd = float(np.std(stats, ddof=1))
    if np.ptp(stats) == 0 or not sd > 0:
        raise DegenerateSample("Replicate statistics have zero standard deviation")
    return MomentAdjustment(mean=float(np.mean(stats)), sd=sd, source=source)


@dataclass(frozen=True, eq=False)
class _Job:
    model: StratumModel
    template: StratifiedDataset
    theta: ParamPoint
    psi_eval: float
    start: FitResult
    seed: int
    path: Tuple[int, ...]
    options: Optional[FitOptions]
    statistics: Tuple[str, ...]
    warm_start: bool = True


def _replicate(job: _Job, index: int) -> Optional[Tuple[float, ...]]:
    rng = stream(job.seed, *job.path, index)
    try:
        data = simulate(job.model, job.template, job.theta, rng)
        if job.warm_start:
            full = fit_mle(job.model, data, options=job.options, psi_start=job.start.psi,
                           lam_start=job.start.theta.lam)
        else:
            full = fit_mle(job.model, data, options=job.options)
        null = null_fit(job.model, data, job.psi_eval, full, job.options)
        pivots = compute_pivots(job.model, data, job.psi_eval, full, null)
    except (StratBootError, FloatingPointError) as e:
        logger.debug(f"Bootstrap replicate {index} failed: {e}")
        return None
    values = tuple(pivots.get(name) for name in job.statistics)
    if not all(np.isfinite(values)):
        return None
    return values


def _run_chunk(job: _Job, indices: Sequence[int]) -> List[Optional[Tuple[float, ...]]]:
    return [_replicate(job, i) for i in indices]


def _chunks(k: int, workers: int) -> List[range]:
    size = max(1, -(-k // (4 * workers)))
    return [range(start, min(start + size, k)) for start in range(0, k, size)]


def run_bootstrap(model: StratumModel, data: StratifiedDataset, psi0: float, plan: BootstrapPlan,
                  full_fit: Optional[FitResult] = None,
                  constrained_fit: Optional[FitResult] = None,
                  options: Optional[FitOptions] = None,
                  statistics: Sequence[str] = STATISTICS) -> Dict[str, BootstrapResult]:
    """Bootstrap R, S and T jointly from one set of replicate refits.

    Unconstrained replicates are drawn at theta_hat and their statistics
    evaluated at psi_hat; constrained replicates are drawn at theta_hat_psi0
    and evaluated at psi0. The observed statistics are always at psi0.
    """
    statistics = tuple(statistics)
    if not statistics or not set(statistics) <= set(STATISTICS):
        raise ValidationError(f"Bootstrap statistics must be drawn from {STATISTICS}")

    started = time.time()
    if full_fit is None:
        full_fit = fit_mle(model, data, options=options)
    if constrained_fit is None:
        constrained_fit = null_fit(model, data, psi0, full_fit, options)
    observed = compute_pivots(model, data, psi0, full_fit, constrained_fit)
    template = retained(data, full_fit)

    if plan.variant == 'unconstrained':
        theta, psi_eval = full_fit.theta, full_fit.psi
    else:
        theta, psi_eval = constrained_fit.theta, float(psi0)

    job = _Job(model=model, template=template, theta=theta, psi_eval=psi_eval, start=full_fit,
               seed=plan.seed, path=tuple(plan.stream_key) + (VARIANT_CODES[plan.variant],),
               options=options, statistics=statistics, warm_start=plan.warm_start)

    if plan.workers > 1 and plan.k > 1:
        chunks = _chunks(plan.k, plan.workers)
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
        outcomes = [value for part in parts for value in part]
    else:
        outcomes = _run_chunk(job, range(plan.k))

    failures = sum(1 for value in outcomes if value is None)
    if failures:
        logger.warning(f"{failures} of {plan.k} {plan.variant} bootstrap replicates failed")
    if failures == plan.k or failures > plan.fail_budget * plan.k:
        raise TooManyFailures(
            f"{failures} of {plan.k} {plan.variant} bootstrap refits failed "
            f"(budget {plan.fail_budget:.2%})",
            payload={'failures': failures, 'k': plan.k},
        )

    table = np.array([value for value in outcomes if value is not None], dtype=float)
    results = {}
    for column, name in enumerate(statistics):
        stats = table[:, column]
        stats.setflags(write=False)
        try:
            moments = sample_moments(stats, plan.variant)
        except DegenerateSample:
            moments = None
        results[name] = BootstrapResult(
            variant=plan.variant, statistic=name, observed=observed.get(name),
            pvalue=tail_pvalue(stats, observed.get(name)), replicate_stats=stats,
            failures=failures, k=plan.k, moments=moments,
        )

    logger.debug(f"{plan.variant} bootstrap with K={plan.k} finished in {time.time() - started:.2f}s")
    return results


def unconstrained_pvalue(model: StratumModel, data: StratifiedDataset, psi0: float,
                         plan: BootstrapPlan, **kwargs) -> BootstrapResult:
    """p-value from replicates simulated at the full MLE."""
    plan = plan.model_copy(update={'variant': 'unconstrained'})
    return run_bootstrap(model, data, psi0, plan, statistics=(plan.statistic,), **kwargs)[plan.statistic]


def constrained_pvalue(model: StratumModel, data: StratifiedDataset, psi0: float,
                       plan: BootstrapPlan, **kwargs) -> BootstrapResult:
    """p-value from replicates simulated at the constrained MLE."""
    plan = plan.model_copy(update={'variant': 'constrained'})
    return run_bootstrap(model, data, psi0, plan, statistics=(plan.statistic,), **kwargs)[plan.statistic]


def bootstrap_moments(model: StratumModel, data: StratifiedDataset, psi0: float,
                      plan: BootstrapPlan, **kwargs) -> MomentAdjustment:
    """Bootstrap mean and standard deviation of the plan's statistic."""
    result = run_bootstrap(model, data, psi0, plan, statistics=(plan.statistic,), **kwargs)[plan.statistic]
    return sample_moments(result.replicate_stats, plan.variant)
