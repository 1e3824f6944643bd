"""Coordinator for simulation experiments.

Replicates are split into ordered chunks and run in worker processes when
more than one worker is requested. Chunk results are merged in replicate
order, so the archive and the report do not depend on the worker count.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config.experiment import ExperimentSpec
from src.models.base import ParamPoint, layout
from src.models.registry import build, default_truths
from src.services.estimation import FitOptions
from src.services.reporting import ARCHIVE_COLUMNS, REPORT_COLUMNS, TailReport, tail_report
from src.tasks.replicate_tasks import CellContext, ReplicateOutcome, run_replicates
from src.utils.errors import BudgetExceeded, ErrorContext, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Outcome of one experiment cell."""
    spec: ExperimentSpec
    report: TailReport
    archive: pd.DataFrame
    failures: Dict[str, int]
    runtime: float
    theta0: ParamPoint
    breaches: List[str] = field(default_factory=list)

    def check_budget(self) -> None:
        if self.breaches:
            raise BudgetExceeded(
                f"Failure budget of {self.spec.failure_budget:.2%} exceeded for: {', '.join(self.breaches)}",
                payload={'failures': self.failures},
            )

    @property
    def meta(self) -> Dict[str, Any]:
        return self.report.meta


def _meta(spec: ExperimentSpec, theta0: ParamPoint, failures: Dict[str, int],
          breaches: List[str], runtime: float, workers: int) -> Dict[str, Any]:
    return {
        'model': spec.model,
        'q': spec.q,
        'm': spec.m,
        'spec_hash': spec.spec_hash(),
        'seed': spec.seed,
        'n_reps': spec.n_reps,
        'k_bootstrap': spec.k_bootstrap,
        'statistics': list(spec.statistics),
        'levels': list(spec.levels),
        'psi0': theta0.psi,
        'failures': failures,
        'breaches': breaches,
        'runtime_seconds': round(runtime, 3),
        'workers': workers,
    }


def prepare_cell(spec: ExperimentSpec, options: Optional[FitOptions] = None) -> CellContext:
    """Build the model, true parameter and data layout for a single-cell spec."""
    if spec.is_grid:
        raise ValidationError("prepare_cell needs a single (q, m) cell; expand the grid first")
    model = build(spec.model, spec.model_options)
    truth = default_truths(spec.model, spec.q, spec.seed)
    psi0 = truth.psi if spec.psi0 is None else spec.psi0
    lam0 = truth.lam if spec.lambda0 is None else np.asarray(spec.lambda0, dtype=float)
    template = model.prepare(layout(model, spec.q, spec.m))
    return CellContext(spec=spec, model=model, template=template,
                       theta0=ParamPoint(psi=psi0, lam=lam0), options=options)


def _chunks(n: int, workers: int) -> List[range]:
    size = max(1, -(-n // (8 * workers)))
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def _collect(ctx: CellContext, workers: int) -> List[ReplicateOutcome]:
    n = ctx.spec.n_reps
    if workers <= 1 or n <= 1:
        return run_replicates(ctx, range(n))
    chunks = _chunks(n, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run_replicates, [ctx] * len(chunks), chunks))
    return [outcome for part in parts for outcome in part]


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None,
                   options: Optional[FitOptions] = None) -> ExperimentResult:
    """
    Run every replicate of a single-cell experiment and tabulate tail frequencies.

    Args:
        spec: Experiment specification with scalar q and m
        workers: Worker processes; defaults to ``spec.workers``
        options: Solver settings for every fit

    Returns:
        ExperimentResult with the tail report, the raw archive and failure counts
    """
    workers = spec.workers if workers is None else workers
    if workers < 1:
        raise ValidationError("workers must be at least 1")

    with ErrorContext(f"experiment {spec.model} q={spec.q} m={spec.m}"):
        started = time.time()
        ctx = prepare_cell(spec, options)
        logger.info(f"Starting {spec.model} experiment q={spec.q} m={spec.m} with "
                    f"{spec.n_reps} replicates on {workers} worker(s)")

        outcomes = _collect(ctx, workers)

        failures = {name: 0 for name in spec.statistics}
        records = []
        for outcome in outcomes:
            for name in outcome.failed:
                failures[name] += 1
            for name, value, pvalue, variant in outcome.rows:
                records.append((outcome.replicate, name, value, pvalue, variant))
        archive = pd.DataFrame.from_records(records, columns=ARCHIVE_COLUMNS)

        limit = spec.failure_budget * spec.n_reps
        breaches = [name for name, count in failures.items() if count > limit or count == spec.n_reps]
        runtime = time.time() - started

        if breaches:
            logger.error(f"Failure budget exceeded for {', '.join(breaches)}: {failures}")
        elif any(failures.values()):
            logger.warning(f"Replicate failures within budget: {failures}")

        meta = _meta(spec, ctx.theta0, failures, breaches, runtime, workers)
        present = [name for name in spec.statistics if failures[name] < spec.n_reps]
        if present:
            report = tail_report(archive, spec.model, spec.q, spec.m, spec.levels,
                                 statistics=present, meta=meta)
        else:
            report = TailReport(table=pd.DataFrame(columns=REPORT_COLUMNS), meta=meta)

        logger.info(f"Finished {spec.model} experiment q={spec.q} m={spec.m} in {runtime:.1f}s")
        return ExperimentResult(spec=spec, report=report, archive=archive, failures=failures,
                                runtime=runtime, theta0=ctx.theta0, breaches=breaches)


def run_grid(spec: ExperimentSpec, workers: Optional[int] = None,
             options: Optional[FitOptions] = None) -> List[ExperimentResult]:
    """Run every (q, m) cell of a spec in grid order."""
    return [run_experiment(cell, workers=workers, options=options) for cell in spec.grid()]
