"""Per-replicate work for simulation experiments."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from src.config.experiment import ExperimentSpec, parse_statistic
from src.models.base import ParamPoint, StratumModel, simulate
from src.models.dataset import StratifiedDataset
from src.services.bootstrap import BootstrapPlan, BootstrapResult, run_bootstrap
from src.services.estimation import FitOptions, fit_mle
from src.services.higher_order import RStarOptions, rstar
from src.services.pivots import PivotSet, adjust, compute_pivots, normal_pvalue, null_fit
from src.utils.errors import StratBootError
from src.utils.rng import BOOTSTRAP, DATA, EXPECTATION, stream

logger = logging.getLogger(__name__)

# (statistic, value, pvalue, variant)
ArchiveRow = Tuple[str, float, float, str]


@dataclass(frozen=True, eq=False)
class CellContext:
    """Everything a worker needs to run replicates of one experiment cell."""
    spec: ExperimentSpec
    model: StratumModel
    template: StratifiedDataset
    theta0: ParamPoint
    options: Optional[FitOptions] = None


@dataclass
class ReplicateOutcome:
    replicate: int
    rows: List[ArchiveRow] = field(default_factory=list)
    failed: List[str] = field(default_factory=list)


def _bootstraps(ctx: CellContext, data: StratifiedDataset, full, null,
                rep: int) -> Dict[str, Optional[Dict[str, BootstrapResult]]]:
    spec = ctx.spec
    results = {}
    for variant in spec.variants():
        plan = BootstrapPlan(variant=variant, k=spec.k_bootstrap, seed=spec.seed,
                             fail_budget=spec.bootstrap_fail_budget, stream_key=(BOOTSTRAP, rep))
        try:
            results[variant] = run_bootstrap(ctx.model, data, ctx.theta0.psi, plan, full_fit=full,
                                             constrained_fit=null, options=ctx.options,
                                             statistics=spec.bases())
        except StratBootError as e:
            logger.debug(f"Replicate {rep}: {variant} bootstrap failed: {e}")
            results[variant] = None
    return results


def _row(name: str, pivots: PivotSet, boots, rstar_fn) -> ArchiveRow:
    base, variant, mode = parse_statistic(name)
    if base == 'rstar':
        value = rstar_fn()
        return name, value, float(normal_pvalue(value)), 'none'
    if variant is None:
        value = pivots.get(base)
        return name, value, float(normal_pvalue(value)), 'none'

    runs = boots.get(variant)
    if runs is None:
        raise StratBootError(f"{variant} bootstrap unavailable")
    result = runs[base]
    if mode is None:
        # Bootstrap p-value on the normal scale; 0 and 1 map to -inf and +inf
        value = float(ndtri(result.pvalue))
        return name, value, result.pvalue, variant
    if result.moments is None:
        raise StratBootError(f"{variant} bootstrap moments of {base} are degenerate")
    value = adjust(pivots.get(base), result.moments, mode)
    return name, value, float(normal_pvalue(value)), variant


def run_replicate(ctx: CellContext, rep: int) -> ReplicateOutcome:
    """
    Draw one dataset at the true parameter and evaluate every requested statistic.

    Args:
        ctx: Experiment cell context
        rep: Replicate index; selects the data, bootstrap and expectation streams

    Returns:
        Archive rows for the statistics that could be computed and the names of
        those that failed
    """
    spec = ctx.spec
    psi0 = ctx.theta0.psi
    outcome = ReplicateOutcome(replicate=rep)
    try:
        data = simulate(ctx.model, ctx.template, ctx.theta0, stream(spec.seed, DATA, rep))
        full = fit_mle(ctx.model, data, options=ctx.options)
        null = null_fit(ctx.model, data, psi0, full, ctx.options)
        pivots = compute_pivots(ctx.model, data, psi0, full, null)
    except StratBootError as e:
        logger.debug(f"Replicate {rep} failed before statistics: {e}")
        outcome.failed = list(spec.statistics)
        return outcome

    boots = _bootstraps(ctx, data, full, null, rep)
    rstar_options = RStarOptions(mc_size=spec.mc_size, seed=spec.seed,
                                 stream_key=(EXPECTATION, rep), fit_options=ctx.options)

    def rstar_fn() -> float:
        return rstar(ctx.model, data, psi0, full, null, rstar_options).rstar

    for name in spec.statistics:
        try:
            row = _row(name, pivots, boots, rstar_fn)
        except StratBootError as e:
            logger.debug(f"Replicate {rep}: statistic {name} failed: {e}")
            outcome.failed.append(name)
            continue
        if np.isnan(row[1]):
            outcome.failed.append(name)
            continue
        outcome.rows.append(row)
    return outcome


def run_replicates(ctx: CellContext, reps: Sequence[int]) -> List[ReplicateOutcome]:
    """Run a chunk of replicates in order."""
    return [run_replicate(ctx, rep) for rep in reps]
