"""Stratified dataset container and CSV I/O."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.utils.errors import DatasetFormatError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StratifiedDataset:
    """Observations of q independent strata stored flat.

    ``y`` holds every observation in stratum order, ``stratum`` the 0-based
    stratum position of each observation and ``x`` the optional scalar
    covariate per observation. ``origin`` maps stratum positions back to the
    0-based stratum index of the dataset the strata were first loaded into,
    so dropped strata can be reported after subsetting.
    """
    y: np.ndarray
    stratum: np.ndarray
    x: Optional[np.ndarray] = None
    origin: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        stratum = np.array(self.stratum).reshape(-1)
        if y.size != stratum.size:
            raise ValidationError("y and stratum index must have equal length")
        if y.size == 0:
            raise ValidationError("Dataset has no observations")
        if not np.all(np.isfinite(y)):
            raise ValidationError("Observations must be finite")
        if not np.issubdtype(stratum.dtype, np.integer):
            if not np.all(stratum == np.round(stratum)):
                raise ValidationError("Stratum index must be integer")
            stratum = stratum.astype(np.int64)
        if stratum[0] != 0 or np.any(np.diff(stratum) < 0) or np.any(np.diff(stratum) > 1):
            raise ValidationError("Stratum index must run contiguously from 0 in sorted order")
        sizes = np.bincount(stratum)
        if np.any(sizes < 2):
            bad = int(np.flatnonzero(sizes < 2)[0])
            raise ValidationError(f"Stratum {bad} has fewer than 2 observations")

        x = self.x
        if x is not None:
            x = np.array(x, dtype=float).reshape(-1)
            if x.size != y.size:
                raise ValidationError("Covariates must match observations in length")
            if not np.all(np.isfinite(x)):
                raise ValidationError("Covariates must be finite")

        origin = self.origin
        origin = np.arange(sizes.size) if origin is None else np.array(origin, dtype=np.int64)
        if origin.size != sizes.size:
            raise ValidationError("Origin map must have one entry per stratum")

        for name, value in (('y', y), ('stratum', stratum), ('x', x), ('origin', origin)):
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, '_sizes', sizes)

    # Construction

    @classmethod
    def from_strata(cls, strata: Sequence[Sequence[float]],
                    covariates: Optional[Sequence[Sequence[float]]] = None) -> 'StratifiedDataset':
        """Build from a list of per-stratum observation vectors."""
        if len(strata) < 1:
            raise ValidationError("At least one stratum is required")
        arrays = [np.asarray(s, dtype=float).reshape(-1) for s in strata]
        stratum = np.concatenate([np.full(a.size, i, dtype=np.int64) for i, a in enumerate(arrays)])
        x = None
        if covariates is not None:
            if len(covariates) != len(arrays):
                raise ValidationError("One covariate vector per stratum is required")
            xs = [np.asarray(c, dtype=float).reshape(-1) for c in covariates]
            if any(c.size != a.size for c, a in zip(xs, arrays)):
                raise ValidationError("Covariate vectors must match stratum sizes")
            x = np.concatenate(xs)
        return cls(y=np.concatenate(arrays), stratum=stratum, x=x)

    @classmethod
    def balanced(cls, y: np.ndarray, x: Optional[np.ndarray] = None) -> 'StratifiedDataset':
        """Build from a q x m matrix (and optional q x m or length-m covariates)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q, m = y.shape
        stratum = np.repeat(np.arange(q), m)
        flat_x = None
        if x is not None:
            flat_x = np.broadcast_to(np.asarray(x, dtype=float), (q, m)).reshape(-1)
        return cls(y=y.reshape(-1), stratum=stratum, x=flat_x)

    # Shape

    @property
    def q(self) -> int:
        return int(self._sizes.size)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def is_balanced(self) -> bool:
        return bool(np.all(self._sizes == self._sizes[0]))

    @property
    def m(self) -> int:
        """Common stratum size; raises for ragged data."""
        if not self.is_balanced:
            raise ValidationError("Operation requires balanced strata")
        return int(self._sizes[0])

    @property
    def xs(self) -> np.ndarray:
        """Covariates, zeros when absent."""
        return self.x if self.x is not None else np.zeros_like(self.y)

    @property
    def strata(self) -> List[np.ndarray]:
        return np.split(self.y, np.cumsum(self._sizes)[:-1])

    @property
    def covariates(self) -> Optional[List[np.ndarray]]:
        if self.x is None:
            return None
        return np.split(self.x, np.cumsum(self._sizes)[:-1])

    # Per-stratum reductions

    def stratum_sum(self, values) -> np.ndarray:
        """Sum per-observation values within each stratum (fixed order)."""
        values = np.broadcast_to(np.asarray(values, dtype=float), self.y.shape)
        return np.bincount(self.stratum, weights=values, minlength=self.q)

    def stratum_means(self, values=None) -> np.ndarray:
        return self.stratum_sum(self.y if values is None else values) / self._sizes

    def expand(self, per_stratum) -> np.ndarray:
        """Repeat per-stratum values for every observation."""
        per_stratum = np.asarray(per_stratum, dtype=float).reshape(-1)
        if per_stratum.size != self.q:
            raise ValidationError(f"Expected {self.q} per-stratum values, got {per_stratum.size}")
        return per_stratum[self.stratum]

    # Derived datasets

    def with_y(self, y) -> 'StratifiedDataset':
        """Same layout and covariates, new observations."""
        return StratifiedDataset(y=np.asarray(y, dtype=float).reshape(self.y.shape),
                                 stratum=self.stratum, x=self.x, origin=self.origin)

    def drop(self, positions: Sequence[int]) -> 'StratifiedDataset':
        """Remove strata by position."""
        positions = np.unique(np.asarray(list(positions), dtype=np.int64))
        if positions.size == 0:
            return self
        keep = np.ones(self.q, dtype=bool)
        keep[positions] = False
        if not keep.any():
            raise ValidationError("Cannot drop every stratum")
        obs = keep[self.stratum]
        renumber = np.cumsum(keep) - 1
        return StratifiedDataset(y=self.y[obs], stratum=renumber[self.stratum[obs]],
                                 x=None if self.x is None else self.x[obs],
                                 origin=self.origin[keep])


def read_csv(path: Union[str, Path]) -> StratifiedDataset:
    """Load a ``stratum,y[,x]`` CSV file with strata indexed 1..q."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise DatasetFormatError(f"Dataset file {path} not found")
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(f"Dataset file {path} is empty")
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"{path}: {str(e).strip()}")

    frame.columns = [c.strip() for c in frame.columns]
    columns = set(frame.columns)
    if not {'stratum', 'y'} <= columns or not columns <= {'stratum', 'y', 'x'}:
        raise DatasetFormatError(f"{path}: expected columns stratum,y[,x], found {','.join(frame.columns)}")
    if frame.empty:
        raise DatasetFormatError(f"Dataset file {path} has no rows")

    numeric = {}
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors='coerce')
        bad = values.isna() | ~np.isfinite(values.astype(float))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetFormatError(
                f"{path}: line {row + 2}: column '{column}' has non-numeric value {frame[column].iloc[row]!r}"
            )
        numeric[column] = values.to_numpy(dtype=float)

    ids = numeric['stratum']
    if np.any(ids != np.round(ids)) or np.any(ids < 1):
        row = int(np.flatnonzero((ids != np.round(ids)) | (ids < 1))[0])
        raise DatasetFormatError(f"{path}: line {row + 2}: stratum must be a positive integer")
    ids = ids.astype(np.int64)
    labels = np.unique(ids)
    if not np.array_equal(labels, np.arange(1, labels.size + 1)):
        raise DatasetFormatError(f"{path}: strata must be indexed 1..q without gaps")

    order = np.argsort(ids, kind='mergesort')
    x = numeric['x'][order] if 'x' in numeric else None
    try:
        data = StratifiedDataset(y=numeric['y'][order], stratum=ids[order] - 1, x=x)
    except ValidationError as e:
        raise DatasetFormatError(f"{path}: {e.message}")
    logger.info(f"Loaded {data.n} observations in {data.q} strata from {path}")
    return data


def write_csv(data: StratifiedDataset, path: Union[str, Path]) -> None:
    """Write a dataset in the ``stratum,y[,x]`` layout."""
    frame = pd.DataFrame({'stratum': data.stratum + 1, 'y': data.y})
    if data.x is not None:
        frame['x'] = data.x
    frame.to_csv(path, index=False)
