"""Run configuration: JSON files validated against pydantic models."""
import json
from typing import List, Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ...lib.common_utils import safe_get
from ...lib.errors import ValidationError
from ..models.model_spec import (JumpLaw, ModelKind, ModelSpec, ObservationSchedule, StoppingRule,
                                 validate_generator)
from ..models.simulation import DEFAULT_MAX_STEP
from ..verification.martingale import DEFAULT_Z_MAX, MIN_PATHS


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class JumpLawConfig(_Strict):
    kind: Literal['point', 'beta'] = 'point'
    alpha: float = 2.0
    beta: float = 1.0
    value: float = 1.0

    def build(self) -> JumpLaw:
        return JumpLaw(self.kind, self.alpha, self.beta, self.value)


class ModelConfig(_Strict):
    kind: ModelKind
    generator: List[List[float]]
    mu: List[float]
    sigma: List[float]
    barrier: float = 1.0
    x0: float = 1.0
    regime0: int = 0
    jump_laws: Optional[List[JumpLawConfig]] = None
    stopping_rule: Optional[StoppingRule] = None
    target_regimes: List[int] = Field(default_factory=lambda: [0])

    def build(self) -> ModelSpec:
        rule = self.stopping_rule
        if rule is None:
            rule = StoppingRule.CHAIN_HIT if self.kind == ModelKind.CHAIN_ONLY else StoppingRule.FIRST_PASSAGE
        laws = tuple(law.build() for law in self.jump_laws) if self.jump_laws is not None else None
        return ModelSpec(
            kind=self.kind,
            generator=validate_generator(self.generator),
            mu=tuple(self.mu),
            sigma=tuple(self.sigma),
            barrier=self.barrier,
            x0=self.x0,
            regime0=self.regime0,
            jump_laws=laws,
            stopping_rule=rule,
            target_regimes=tuple(self.target_regimes),
        )


class ScheduleConfig(_Strict):
    times: Optional[List[float]] = None
    step: Optional[float] = None
    horizon: Optional[float] = None
    observe_regime_jumps: bool = True

    @model_validator(mode='after')
    def _times_or_grid(self) -> 'ScheduleConfig':
        if self.times is None and (self.step is None or self.horizon is None):
            raise ValueError("give either 'times' or both 'step' and 'horizon'")
        if self.times is not None and (self.step is not None or self.horizon is not None):
            raise ValueError("'times' excludes 'step' and 'horizon'")
        return self

    def build(self) -> ObservationSchedule:
        if self.times is not None:
            return ObservationSchedule(tuple(self.times), self.observe_regime_jumps)
        return ObservationSchedule.uniform(self.step, self.horizon, self.observe_regime_jumps)


class IntensityConfig(_Strict):
    engine: Literal['named', 'eq5-generic', 'jy-transform'] = 'named'
    window_start: float = 0.0
    window_end: Optional[float] = None     # defaults to the next observation time
    x_s: Optional[float] = None            # defaults to the model's x0
    regime: Optional[int] = None           # defaults to the model's regime0
    survivor: float = Field(default=1.0, ge=0.0, le=1.0)
    n_knots: int = Field(default=65, ge=2)


class VerifyConfig(_Strict):
    n_paths: int = Field(default=100_000, ge=MIN_PATHS)
    times: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    z_max: float = Field(default=DEFAULT_Z_MAX, gt=0)
    seed: Optional[int] = None
    bias_factor: float = Field(default=1.0, gt=0)
    compensator_sigma: Optional[List[float]] = None
    orthogonality_s: Optional[float] = None
    max_step: float = Field(default=DEFAULT_MAX_STEP, gt=0)
    crossing_time: Literal['midpoint', 'bisect'] = 'bisect'
    bridge: bool = True


class OutputConfig(_Strict):
    out: str = 'results'
    format: Literal['csv', 'json', 'parquet'] = 'csv'


class RunConfig(_Strict):
    name: str = 'run'
    model: ModelConfig
    schedule: ScheduleConfig
    intensity: IntensityConfig = Field(default_factory=IntensityConfig)
    verification: VerifyConfig = Field(default_factory=VerifyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def _describe(error: pydantic.ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = '.'.join(str(part) for part in safe_get(item, 'loc', default=())) or '<root>'
        lines.append(f"{where}: {safe_get(item, 'msg', default='invalid value')}")
    return '; '.join(lines)


def parse_config(text: str, source: str = '<config>') -> RunConfig:
    """Parse and validate a JSON run config; errors name the line or field at fault."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{source}:{e.lineno}:{e.colno}: {e.msg}")
    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        raise ValidationError(f"{source}: {_describe(e)}")


def load_config(path: str) -> RunConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}")
    return parse_config(text, path)
