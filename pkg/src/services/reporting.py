"""Tail-probability reports, replicate archives and plot-ready summaries."""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import ndtri
from scipy.stats import gaussian_kde

from src.utils.errors import EmptyArchive, ValidationError

logger = logging.getLogger(__name__)

ARCHIVE_COLUMNS = ['replicate', 'statistic', 'value', 'pvalue', 'variant']
REPORT_COLUMNS = ['model', 'q', 'm', 'statistic', 'level', 'freq', 'se', 'n_eff']

_ARCHIVE_NAME = re.compile(r'archive_(?P<model>[a-z_]+?)_q(?P<q>\d+)_m(?P<m>\d+)')


def archive_name(model: str, q: int, m: int) -> str:
    return f"archive_{model}_q{q}_m{m}.csv.gz"


def parse_archive_name(path: Union[str, Path]) -> Dict[str, Any]:
    """Recover model, q and m from an archive file name."""
    match = _ARCHIVE_NAME.search(Path(path).name)
    if not match:
        raise ValidationError(f"Cannot tell model, q and m from archive name {Path(path).name}")
    return {'model': match['model'], 'q': int(match['q']), 'm': int(match['m'])}


# Archive

def archive_meta_path(path: Union[str, Path]) -> Path:
    """Sidecar JSON next to an archive: ``archive_x_q1_m2.csv.gz`` -> ``archive_x_q1_m2.meta.json``."""
    path = Path(path)
    stem = path.name.split('.', 1)[0]
    return path.with_name(f"{stem}.meta.json")


def write_archive(archive: pd.DataFrame, path: Union[str, Path],
                  meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write replicate rows; gzip output carries a fixed timestamp so bytes are reproducible.

    ``meta`` (the cell's run metadata, including its levels) goes to the
    sidecar file so reports can be rebuilt from the archive alone.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    compression = {'method': 'gzip', 'mtime': 0} if path.suffix == '.gz' else None
    archive[ARCHIVE_COLUMNS].to_csv(path, index=False, compression=compression)
    if meta is not None:
        archive_meta_path(path).write_text(json.dumps(meta, indent=2) + '\n', encoding='utf-8')
    logger.info(f"Wrote {len(archive)} archive rows to {path}")
    return path


def read_archive_meta(path: Union[str, Path]) -> Dict[str, Any]:
    """Run metadata stored beside an archive; empty when there is none."""
    meta_path = archive_meta_path(path)
    if not meta_path.exists():
        return {}
    try:
        return json.loads(meta_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Archive metadata {meta_path} is not valid JSON: {e}")


def read_archive(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Archive {path} not found")
    try:
        frame = pd.read_csv(path, dtype={'statistic': str, 'variant': str})
    except pd.errors.EmptyDataError:
        raise EmptyArchive(f"Archive {path} is empty")
    missing = set(ARCHIVE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValidationError(f"Archive {path} lacks column(s): {', '.join(sorted(missing))}")
    if frame.empty:
        raise EmptyArchive(f"Archive {path} has no rows")
    return frame


# Tail report

@dataclass(frozen=True, eq=False)
class TailReport:
    """Empirical tail frequencies x100 per statistic and nominal level."""
    table: pd.DataFrame
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        text = self.table[REPORT_COLUMNS].to_csv(index=False, lineterminator='\n')
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text, encoding='utf-8')
        return text

    def render(self) -> str:
        return render_table(self.table)

    @classmethod
    def concat(cls, reports: Sequence['TailReport']) -> 'TailReport':
        if not reports:
            raise EmptyArchive("No reports to combine")
        table = pd.concat([r.table for r in reports], ignore_index=True)
        return cls(table=table, meta={'cells': [r.meta for r in reports]})


def tail_frequencies(pvalues: Sequence[float], levels: Sequence[float]) -> pd.DataFrame:
    """Frequency x100 of p <= level/100 with its binomial standard error."""
    p = np.asarray(pvalues, dtype=float)
    n = p.size
    if n == 0:
        raise EmptyArchive("No p-values to tabulate")
    rows = []
    for level in levels:
        frac = float(np.count_nonzero(p <= level / 100.0)) / n
        rows.append({'level': float(level), 'freq': 100.0 * frac,
                     'se': 100.0 * float(np.sqrt(frac * (1.0 - frac) / n)), 'n_eff': n})
    return pd.DataFrame(rows)


def tail_report(archive: pd.DataFrame, model: str, q: int, m: int, levels: Sequence[float],
                statistics: Optional[Sequence[str]] = None,
                meta: Optional[Dict[str, Any]] = None) -> TailReport:
    """Tail report computed from the archive's ``pvalue`` column only."""
    if archive.empty:
        raise EmptyArchive("Archive has no rows")
    if statistics is None:
        statistics = list(dict.fromkeys(archive['statistic']))
    blocks = []
    for name in statistics:
        rows = archive[archive['statistic'] == name]
        if rows.empty:
            logger.warning(f"No archive rows for statistic {name}")
            continue
        block = tail_frequencies(rows['pvalue'].to_numpy(), levels)
        block.insert(0, 'statistic', name)
        blocks.append(block)
    if not blocks:
        raise EmptyArchive("Archive has no rows for the requested statistics")
    table = pd.concat(blocks, ignore_index=True)
    table.insert(0, 'm', int(m))
    table.insert(0, 'q', int(q))
    table.insert(0, 'model', model)
    return TailReport(table=table[REPORT_COLUMNS], meta=dict(meta or {}))


def render_table(table: pd.DataFrame) -> str:
    """Aligned text blocks, one per model/q/m cell, values rounded to one decimal."""
    lines: List[str] = []
    for (model, q, m), cell in table.groupby(['model', 'q', 'm'], sort=False):
        levels = list(dict.fromkeys(cell['level']))
        statistics = list(dict.fromkeys(cell['statistic']))
        width = max(len('statistic'), *(len(s) for s in statistics))
        header = 'statistic'.ljust(width) + ''.join(f"{lv:>8g}" for lv in levels)
        lines.append(f"{model}  q={q}  m={m}")
        lines.append(header)
        lines.append('-' * len(header))
        for name in statistics:
            freqs = cell[cell['statistic'] == name].set_index('level')['freq']
            lines.append(name.ljust(width) + ''.join(f"{freqs[lv]:>8.1f}" for lv in levels))
        lines.append('')
    return '\n'.join(lines)


# Distribution summaries

def density_summary(archive: pd.DataFrame, statistic: str,
                    grid: Union[int, Sequence[float]] = 200,
                    bins: int = 20) -> Dict[str, pd.DataFrame]:
    """Plot-ready tables for one statistic.

    Returns ``density`` (x, density) from a Gaussian kernel estimate of the
    normal-scale values, ``histogram`` of the p-values on (0, 1), ``qq``
    pairs against standard normal quantiles and ``pvalues`` on both the
    (0, 1) and normal scales.
    """
    rows = archive[archive['statistic'] == statistic]
    if rows.empty:
        raise EmptyArchive(f"Archive has no rows for statistic {statistic}")
    values = rows['value'].to_numpy(dtype=float)
    values = values[np.isfinite(values)]
    pvalues = rows['pvalue'].to_numpy(dtype=float)
    if values.size < 2 or not np.std(values) > 0:
        raise ValidationError(f"Statistic {statistic} has too few distinct finite values for a density")

    if np.isscalar(grid):
        spread = values.max() - values.min()
        x = np.linspace(values.min() - 0.1 * spread, values.max() + 0.1 * spread, int(grid))
    else:
        x = np.asarray(grid, dtype=float)
    density = pd.DataFrame({'x': x, 'density': gaussian_kde(values)(x)})

    counts, edges = np.histogram(pvalues, bins=bins, range=(0.0, 1.0))
    histogram = pd.DataFrame({
        'bin_left': edges[:-1],
        'bin_right': edges[1:],
        'count': counts,
        'density': counts / (pvalues.size * np.diff(edges)),
    })

    n = values.size
    qq = pd.DataFrame({
        'theoretical_q': ndtri((np.arange(1, n + 1) - 0.5) / n),
        'empirical_q': np.sort(values),
    })

    eps = np.finfo(float).eps
    p_table = pd.DataFrame({
        'pvalue': pvalues,
        'normal_score': ndtri(np.clip(pvalues, eps, 1.0 - eps)),
    })
    return {'density': density, 'histogram': histogram, 'qq': qq, 'pvalues': p_table}


def write_density_summary(archive: pd.DataFrame, statistic: str, out_dir: Union[str, Path],
                          prefix: str = '') -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind, frame in density_summary(archive, statistic).items():
        path = out_dir / f"{prefix}{statistic}_{kind}.csv"
        frame.to_csv(path, index=False, lineterminator='\n')
        written.append(path)
    logger.info(f"Wrote {len(written)} summary files for {statistic} to {out_dir}")
    return written
