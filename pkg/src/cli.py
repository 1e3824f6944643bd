"""Command-line interface: fit, pvalue, simulate and report."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import ndtri

from src.config.config import Config, get_config
from src.config.experiment import ADJUST_SUFFIXES, BASES, ExperimentSpec
from src.models.dataset import read_csv
from src.models.registry import MODEL_NAMES, build
from src.services.bootstrap import BootstrapPlan, run_bootstrap
from src.services.estimation import fit_mle, profile_curve, retained
from src.services.higher_order import RStarOptions, rstar
from src.services.pivots import adjust, compute_pivots, normal_pvalue, null_fit
from src.services.reporting import (TailReport, archive_name, parse_archive_name, read_archive,
                                    read_archive_meta, tail_report, write_archive,
                                    write_density_summary)
from src.tasks.experiment_runner import run_grid
from src.utils.errors import (EstimationError, HigherOrderError, StratBootError, ValidationError,
                              handle_cli_error)

logger = logging.getLogger(__name__)

VARIANT_CODES = {'unconstrained': 'u', 'constrained': 'c'}
PVALUE_COLUMNS = ['statistic', 'value', 'pvalue', 'variant']


class CliConfig(BaseModel):
    """Validated arguments of one CLI invocation."""
    model_config = ConfigDict(frozen=True, extra='forbid', protected_namespaces=())

    subcommand: Literal['fit', 'pvalue', 'simulate', 'report']
    model: Optional[str] = None
    data: Optional[Path] = None
    spec: Optional[Path] = None
    archives: Tuple[Path, ...] = ()
    psi0: Optional[float] = None
    variants: Tuple[str, ...] = ('unconstrained', 'constrained')
    k: int = Field(default=Config.BOOTSTRAP_K, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64)
    workers: int = Field(default=1, ge=1)
    mc_size: int = Field(default=Config.MC_SIZE, ge=0)
    out: Optional[Path] = None
    profile_grid: Optional[Tuple[float, float, int]] = None
    levels: Optional[Tuple[float, ...]] = None
    density: bool = False


def _load(config: CliConfig):
    model = build(config.model)
    data = model.prepare(read_csv(config.data))
    return model, data


def _write_json(payload: Dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + '\n', encoding='utf-8')
    logger.info(f"Wrote {path}")


# Command implementations

def cmd_fit(config: CliConfig) -> Dict[str, Any]:
    """Full maximum-likelihood fit of a CSV dataset."""
    model, data = _load(config)
    fit = fit_mle(model, data)
    payload = {
        'model': model.name,
        'psi_hat': fit.psi,
        'lambda_hat': fit.theta.lam.tolist(),
        'loglik': fit.loglik,
        'iterations': fit.iterations,
        'converged': fit.converged,
        'dropped_strata': [i + 1 for i in fit.dropped_strata],
    }
    if config.profile_grid is not None:
        lo, hi, n = config.profile_grid
        psis = np.linspace(lo, hi, int(n))
        values = profile_curve(model, retained(data, fit), psis)
        payload['profile'] = [{'psi': float(p), 'loglik': float(v)} for p, v in zip(psis, values)]
    if config.out is not None:
        _write_json(payload, config.out / 'fit.json')
    return payload


def cmd_pvalue(config: CliConfig) -> pd.DataFrame:
    """Pivots, R*, bootstrap p-values and adjusted statistics at psi0."""
    model, data = _load(config)
    psi0 = config.psi0
    seed = config.seed or 0
    full = fit_mle(model, data)
    null = null_fit(model, data, psi0, full)
    pivots = compute_pivots(model, data, psi0, full, null)

    rows: List[Tuple[str, float, float, str]] = [
        (base, pivots.get(base), float(normal_pvalue(pivots.get(base))), 'none') for base in BASES
    ]
    try:
        result = rstar(model, data, psi0, full, null, RStarOptions(mc_size=config.mc_size, seed=seed))
        rows.append(('rstar', result.rstar, float(normal_pvalue(result.rstar)), 'none'))
    except (HigherOrderError, EstimationError) as e:
        logger.warning(f"R* unavailable at psi0={psi0:g}: {e.message}")

    for variant in config.variants:
        code = VARIANT_CODES[variant]
        plan = BootstrapPlan(variant=variant, k=config.k, seed=seed, workers=config.workers)
        results = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        for base in BASES:
            p = results[base].pvalue
            rows.append((f"{base}_{code}", float(ndtri(p)), p, variant))
        for base in BASES:
            moments = results[base].moments
            if moments is None:
                logger.warning(f"{variant} bootstrap moments of {base} are degenerate")
                continue
            for suffix, mode in ADJUST_SUFFIXES.items():
                value = adjust(pivots.get(base), moments, mode)
                rows.append((f"{base}_{code}_{suffix}", value, float(normal_pvalue(value)), variant))

    table = pd.DataFrame.from_records(rows, columns=PVALUE_COLUMNS)
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        table.to_csv(config.out / 'pvalue.csv', index=False, float_format='%.10g', lineterminator='\n')
    return table


def cmd_simulate(config: CliConfig) -> Tuple[TailReport, List[Any]]:
    """Run an experiment spec (or grid) and write archives, report and metadata."""
    spec = ExperimentSpec.from_json(config.spec, overrides={'seed': config.seed,
                                                            'workers': config.workers})
    results = run_grid(spec)
    report = TailReport.concat([r.report for r in results])
    if config.out is not None:
        for result in results:
            write_archive(result.archive, config.out / archive_name(spec.model, result.spec.q, result.spec.m),
                          meta=result.meta)
        report.to_csv(config.out / 'report.csv')
        (config.out / 'report.txt').write_text(report.render(), encoding='utf-8')
        _write_json({'spec_hash': spec.spec_hash(), 'cells': [r.meta for r in results]},
                    config.out / 'meta.json')
    return report, results


def cmd_report(config: CliConfig) -> TailReport:
    """Tail report recomputed from archives alone.

    Levels come from ``--levels``, else from the levels the archive was
    simulated with, else the configured defaults.
    """
    reports = []
    for path in config.archives:
        cell = parse_archive_name(path)
        archive = read_archive(path)
        levels = config.levels or read_archive_meta(path).get('levels') or Config.DEFAULT_LEVELS
        reports.append(tail_report(archive, cell['model'], cell['q'], cell['m'], levels))
        if config.density:
            out_dir = config.out or path.parent
            prefix = f"{cell['model']}_q{cell['q']}_m{cell['m']}_"
            for name in dict.fromkeys(archive['statistic']):
                write_density_summary(archive, name, out_dir, prefix=prefix)
    report = TailReport.concat(reports)
    if config.out is not None:
        report.to_csv(config.out / 'report.csv')
    return report


# click wiring

class StratBootGroup(click.Group):
    """Group mapping usage errors to exit 1 and domain errors to their exit codes."""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise
        except StratBootError as e:
            raise handle_cli_error(e)


def _parse_grid(ctx, param, value):
    if value is None:
        return None
    try:
        lo, hi, n = value.split(',')
        grid = (float(lo), float(hi), int(n))
    except ValueError:
        raise click.BadParameter("expected LO,HI,N")
    if grid[2] < 2 or not grid[0] < grid[1]:
        raise click.BadParameter("need LO < HI and N >= 2")
    return grid


def _parse_levels(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value.split(','))
    except ValueError:
        raise click.BadParameter("expected comma-separated numbers")


def _config(**kwargs) -> CliConfig:
    try:
        return CliConfig(**kwargs)
    except Exception as e:
        raise ValidationError(f"Invalid arguments: {e}")


model_option = click.option('--model', required=True, type=click.Choice(MODEL_NAMES),
                            help='Stratified model')
data_option = click.option('--data', required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
                           help='CSV dataset with columns stratum,y[,x]')
out_option = click.option('--out', type=click.Path(file_okay=False, path_type=Path), default=None,
                          help='Output directory')


@click.group(cls=StratBootGroup)
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.version_option(Config.VERSION, prog_name=Config.APP_NAME)
def cli(verbose):
    """Higher-order inference for stratified models."""
    get_config().init_logging('DEBUG' if verbose else None)


@cli.command()
@model_option
@data_option
@out_option
@click.option('--profile-grid', callback=_parse_grid, default=None, metavar='LO,HI,N',
              help='Also evaluate the profile log-likelihood on a grid')
def fit(model, data, out, profile_grid):
    """Fit the full maximum-likelihood estimate."""
    payload = cmd_fit(_config(subcommand='fit', model=model, data=data, out=out,
                              profile_grid=profile_grid))
    click.echo(json.dumps(payload, indent=2))


@cli.command()
@model_option
@data_option
@click.option('--psi0', required=True, type=float, help='Hypothesised value of psi')
@click.option('--variant', type=click.Choice(['constrained', 'unconstrained']), default=None,
              help='Bootstrap variant (default: both)')
@click.option('--k', type=click.IntRange(min=1), default=Config.BOOTSTRAP_K, show_default=True,
              help='Bootstrap replicates')
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--mc-size', type=click.IntRange(min=0), default=Config.MC_SIZE, show_default=True,
              help='Monte Carlo draws for R* expectations')
@out_option
def pvalue(model, data, psi0, variant, k, seed, workers, mc_size, out):
    """Test psi = PSI0 with every statistic."""
    variants = (variant,) if variant else ('unconstrained', 'constrained')
    table = cmd_pvalue(_config(subcommand='pvalue', model=model, data=data, psi0=psi0,
                               variants=variants, k=k, seed=seed, workers=workers,
                               mc_size=mc_size, out=out))
    click.echo(table.to_csv(index=False, float_format='%.10g', lineterminator='\n'), nl=False)


@cli.command()
@click.argument('spec', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), required=True)
@click.option('--workers', type=click.IntRange(min=1), default=Config.WORKERS, show_default=True)
@out_option
def simulate(spec, seed, workers, out):
    """Run the simulation experiment described by SPEC."""
    out = out or Config.OUTPUT_DIR
    report, results = cmd_simulate(_config(subcommand='simulate', spec=spec, seed=seed,
                                           workers=workers, out=out))
    click.echo(report.render())
    for result in results:
        result.check_budget()


@cli.command()
@click.option('--archive', 'archives', multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--levels', callback=_parse_levels, default=None, metavar='L1,L2,...',
              help='Nominal levels in percent')
@click.option('--density', is_flag=True, help='Write density, histogram and QQ tables')
@out_option
def report(archives, levels, density, out):
    """Render tail-probability tables from replicate archives."""
    result = cmd_report(_config(subcommand='report', archives=tuple(archives), levels=levels,
                                density=density, out=out))
    click.echo(result.render())


@cli.command('check-config')
def check_config():
    """Show the active numerical configuration."""
    cfg = get_config()
    click.echo(f'{cfg.APP_NAME} {cfg.VERSION} configuration ({cfg.__name__})')
    click.echo('=' * 40)
    for key in ('GRAD_TOL', 'MAX_ITER', 'NUISANCE_BOUND', 'DEVIANCE_TOL', 'BOOTSTRAP_K',
                'BOOTSTRAP_FAIL_BUDGET', 'MC_SIZE', 'RSTAR_WINDOW', 'EXPERIMENT_FAIL_BUDGET',
                'DEFAULT_LEVELS', 'WORKERS', 'OUTPUT_DIR', 'LOG_LEVEL'):
        click.echo(f'  {key}: {getattr(cfg, key)}')


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=argv, prog_name='stratboot')
