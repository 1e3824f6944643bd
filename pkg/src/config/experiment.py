"""Experiment specification for the simulation laboratory."""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from src.config.config import Config
from src.utils.errors import ValidationError

BASES = ('r', 's', 't')
VARIANT_SUFFIXES = {'u': 'unconstrained', 'c': 'constrained'}
ADJUST_SUFFIXES = {'l': 'location', 'ls': 'location_scale'}

# Statistics of the comparison table
DEFAULT_STATISTICS = ('r', 'rstar', 'r_u', 'r_c', 'r_c_l', 'r_c_ls')


def parse_statistic(name: str) -> Tuple[str, Optional[str], Optional[str]]:
    """Split a statistic name into (base, bootstrap variant, adjustment mode).

    ``r`` -> ('r', None, None); ``s_c`` -> ('s', 'constrained', None);
    ``t_u_ls`` -> ('t', 'unconstrained', 'location_scale');
    ``rstar`` -> ('rstar', None, None).
    """
    if name == 'rstar':
        return 'rstar', None, None
    parts = name.split('_')
    if parts[0] not in BASES or len(parts) > 3:
        raise ValidationError(f"Unknown statistic '{name}'")
    variant = adjust = None
    if len(parts) >= 2:
        if parts[1] not in VARIANT_SUFFIXES:
            raise ValidationError(f"Unknown bootstrap variant in statistic '{name}'")
        variant = VARIANT_SUFFIXES[parts[1]]
    if len(parts) == 3:
        if parts[2] not in ADJUST_SUFFIXES:
            raise ValidationError(f"Unknown adjustment in statistic '{name}'")
        adjust = ADJUST_SUFFIXES[parts[2]]
    return parts[0], variant, adjust


class ExperimentSpec(BaseModel):
    """One simulation study, or a q x m grid of them when lists are given."""
    model_config = ConfigDict(frozen=True, extra='forbid', protected_namespaces=())

    model: str
    model_options: Dict[str, Any] = Field(default_factory=dict)
    q: Union[int, List[int]]
    m: Union[int, List[int]]
    n_reps: int = Field(ge=1)
    k_bootstrap: int = Field(default=Config.BOOTSTRAP_K, ge=1)
    seed: int = Field(ge=0, lt=2 ** 64)
    statistics: List[str] = Field(default_factory=lambda: list(DEFAULT_STATISTICS))
    levels: List[float] = Field(default_factory=lambda: list(Config.DEFAULT_LEVELS))
    psi0: Optional[float] = None
    lambda0: Optional[List[float]] = None
    failure_budget: float = Field(default=Config.EXPERIMENT_FAIL_BUDGET, ge=0.0, le=1.0)
    bootstrap_fail_budget: float = Field(default=Config.BOOTSTRAP_FAIL_BUDGET, ge=0.0, le=1.0)
    mc_size: int = Field(default=Config.MC_SIZE, ge=0)
    workers: int = Field(default=Config.WORKERS, ge=1)

    @field_validator('model')
    @classmethod
    def _known_model(cls, value: str) -> str:
        from src.models.registry import MODEL_NAMES
        if value not in MODEL_NAMES:
            raise ValueError(f"unknown model '{value}'; choose from {', '.join(MODEL_NAMES)}")
        return value

    @field_validator('q', 'm')
    @classmethod
    def _positive_sizes(cls, value):
        values = value if isinstance(value, list) else [value]
        if not values or any(v < 1 for v in values):
            raise ValueError("sizes must be at least 1")
        return value

    @field_validator('statistics')
    @classmethod
    def _known_statistics(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one statistic is required")
        if len(set(value)) != len(value):
            raise ValueError("statistics must not repeat")
        for name in value:
            try:
                parse_statistic(name)
            except ValidationError as e:
                raise ValueError(e.message)
        return value

    @field_validator('levels')
    @classmethod
    def _increasing_levels(cls, value: List[float]) -> List[float]:
        if not value or any(not 0 < v < 100 for v in value):
            raise ValueError("levels must lie strictly between 0 and 100")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("levels must be strictly increasing")
        return value

    @model_validator(mode='after')
    def _lambda_matches_q(self):
        if self.lambda0 is not None:
            if isinstance(self.q, list):
                raise ValueError("lambda0 requires a single q")
            if len(self.lambda0) != self.q:
                raise ValueError(f"lambda0 has {len(self.lambda0)} values for q={self.q}")
        return self

    # Loading

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentSpec':
        try:
            return cls.model_validate(data)
        except PydanticValidationError as e:
            details = '; '.join(f"{'.'.join(str(p) for p in err['loc']) or 'spec'}: {err['msg']}"
                                for err in e.errors())
            raise ValidationError(f"Invalid experiment spec: {details}")

    @classmethod
    def from_json(cls, path: Union[str, Path],
                  overrides: Optional[Dict[str, Any]] = None) -> 'ExperimentSpec':
        """Load a JSON spec; ``overrides`` replace top-level keys before validation."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise ValidationError(f"Experiment spec {path} not found")
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: experiment spec must be a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    # Grid handling

    @property
    def is_grid(self) -> bool:
        return isinstance(self.q, list) or isinstance(self.m, list)

    def grid(self) -> List['ExperimentSpec']:
        """Single-cell specs for every (q, m) combination, q outermost."""
        qs = self.q if isinstance(self.q, list) else [self.q]
        ms = self.m if isinstance(self.m, list) else [self.m]
        return [self.model_copy(update={'q': q, 'm': m}) for q in qs for m in ms]

    # Derived settings

    def variants(self) -> List[str]:
        """Bootstrap variants the requested statistics need, in fixed order."""
        needed = {parse_statistic(name)[1] for name in self.statistics}
        return [v for v in ('unconstrained', 'constrained') if v in needed]

    def bases(self) -> List[str]:
        """Base pivots that need bootstrapping."""
        needed = {parse_statistic(name)[0] for name in self.statistics if parse_statistic(name)[1]}
        return [b for b in BASES if b in needed]

    @property
    def wants_rstar(self) -> bool:
        return 'rstar' in self.statistics

    def spec_hash(self) -> str:
        payload = json.dumps(self.model_dump(exclude={'workers'}), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]
