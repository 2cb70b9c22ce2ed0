"""Seeded, parallel simulation of paths and their compensators.

Path i always draws from np.random.default_rng([seed, i]); workers get
contiguous index chunks and results are reassembled in index order, so the
output does not depend on the number of workers.
"""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ...lib.common_utils import env_int, setup_logging
from ...lib.errors import SingularKernelError, ValidationError
from ..compensators.engine import F_FLOOR, window_cumulative
from ..compensators.kernels import kernel_for_window
from ..levy.levy_system import LevySystemSpec, chain_hit_compensator, default_region_compensator
from ..models.model_spec import ModelSpec, ObservationSchedule, StoppingRule
from ..models.simulation import DEFAULT_MAX_STEP, SimPath, build_windows, simulate_price_path
from .martingale import (DEFAULT_Z_MAX, MIN_PATHS, MartingaleReport, martingale_residual_test,
                         orthogonality_test)

logger = setup_logging(__name__)

THREADS_ENV = 'HAZARDLAB_THREADS'
DECILES = 10


@dataclass(frozen=True)
class VerificationSetup:
    model: ModelSpec
    schedule: ObservationSchedule
    times: Tuple[float, ...]
    compensator_model: Optional[ModelSpec] = None   # misspecified model for negative controls
    bias_factor: float = 1.0
    orthogonality_s: Optional[float] = None
    max_step: float = DEFAULT_MAX_STEP
    bridge: bool = True
    crossing_time: str = 'bisect'

    def __post_init__(self):
        if not self.times:
            raise ValidationError("at least one test time is required")
        if any(t < 0 or t > self.schedule.horizon for t in self.times):
            raise ValidationError(f"test times {self.times} must lie in [0, {self.schedule.horizon}]")
        if not self.bias_factor > 0:
            raise ValidationError(f"bias_factor must be > 0, got {self.bias_factor}")

    @property
    def s(self) -> float:
        return self.times[0] if self.orthogonality_s is None else self.orthogonality_s

    @property
    def evaluation_times(self) -> Tuple[float, ...]:
        return tuple(self.times) + (self.s,)


@dataclass
class PathRecord:
    index: int
    tau: float
    jump_hit: bool
    event_time: float
    compensator: List[float]     # A(t ^ tau) at VerificationSetup.times
    a_s: float
    regime_s: int
    price_s: float
    survived_s: bool
    n_windows: int
    n_observations: int
    n_price_jumps: int
    skipped_mass: float = 0.0


@dataclass
class VerificationOutcome:
    residual: MartingaleReport
    orthogonality: MartingaleReport
    records: List[PathRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.residual.all_passed and self.orthogonality.all_passed


def resolve_workers(requested: Optional[int] = None) -> int:
    cap = env_int(THREADS_ENV)
    workers = requested or cap or os.cpu_count() or 1
    return max(1, min(workers, cap) if cap else workers)


def _window_compensator(path: SimPath, setup: VerificationSetup, times: Sequence[float]) -> Tuple[List[float], float]:
    compensator_model = setup.compensator_model or setup.model
    windows = build_windows(path, setup.schedule)
    kernels = [kernel_for_window(w, compensator_model) for w in windows]
    cumulative: Dict[Tuple[int, float], float] = {}
    skipped = 0.0

    def window_value(k: int, elapsed: float) -> float:
        nonlocal skipped
        key = (k, elapsed)
        if key not in cumulative:
            try:
                cumulative[key] = window_cumulative(windows[k], kernels[k], elapsed)
            except SingularKernelError as e:
                logger.warning(f"Path {path.summary()}: {e}; clamped at the floor")
                cumulative[key] = -math.log(F_FLOOR)
                skipped += 1.0
        return cumulative[key]

    values = []
    for t in times:
        stop = min(t, path.tau)
        total = 0.0
        for k, window in enumerate(windows):
            if window.S >= stop:
                break
            # completed windows share one key across all evaluation times
            total += window_value(k, min(stop, window.T) - window.S)
        values.append(total)
    return values, skipped


def path_compensator_values(path: SimPath, setup: VerificationSetup,
                            times: Sequence[float]) -> Tuple[List[float], float]:
    """A(t ^ tau) at each time, for the stopping rule of the model."""
    rule = setup.model.stopping_rule
    if rule == StoppingRule.CHAIN_HIT:
        spec = LevySystemSpec.from_model(setup.compensator_model or setup.model)
        compensator = chain_hit_compensator(spec, path.segments, horizon=path.horizon)
        values, skipped = [compensator.value_at(t) for t in times], 0.0
    elif rule == StoppingRule.DEFAULT_REGION:
        compensator = default_region_compensator(path)
        values, skipped = [compensator.value_at(t) for t in times], 0.0
    else:
        values, skipped = _window_compensator(path, setup, times)
    return [setup.bias_factor * v for v in values], skipped


def _information_at(path: SimPath, s: float) -> Tuple[int, float, bool]:
    survived = path.tau > s
    seen = [o for o in path.observations if o.time <= s]
    if not seen:
        return path.model.regime0, path.model.x0, survived
    last = seen[-1]
    return last.regime, last.price, survived


def evaluate_path(setup: VerificationSetup, seed: int, index: int) -> PathRecord:
    rng = np.random.default_rng([seed, index])
    path = simulate_price_path(setup.model, setup.schedule, rng, setup.max_step,
                               setup.bridge, setup.crossing_time)
    values, skipped = path_compensator_values(path, setup, setup.evaluation_times)

    # the Levy-system compensators only compensate hits by a chain jump
    jump_rule = setup.model.stopping_rule != StoppingRule.FIRST_PASSAGE
    event_time = path.tau if (path.jump_hit or not jump_rule) else math.inf
    regime_s, price_s, survived_s = _information_at(path, setup.s)
    return PathRecord(
        index=index, tau=path.tau, jump_hit=path.jump_hit, event_time=event_time,
        compensator=values[:-1], a_s=values[-1], regime_s=regime_s, price_s=price_s,
        survived_s=survived_s, n_windows=len(build_windows(path, setup.schedule)),
        n_observations=len(path.observations), n_price_jumps=len(path.jumps),
        skipped_mass=skipped,
    )


def _evaluate_chunk(args: Tuple[VerificationSetup, int, Sequence[int]]) -> List[PathRecord]:
    setup, seed, indices = args
    return [evaluate_path(setup, seed, int(i)) for i in indices]


def run_paths(setup: VerificationSetup, seed: int, n_paths: int,
              workers: Optional[int] = None) -> List[PathRecord]:
    """Simulate and evaluate n_paths paths; records come back in index order."""
    workers = min(resolve_workers(workers), max(n_paths, 1))
    chunks = [c for c in np.array_split(np.arange(n_paths), workers) if len(c)]
    logger.info(f"Simulating {n_paths} paths on {workers} worker(s), seed={seed}")

    if workers == 1:
        records = [r for chunk in chunks for r in _evaluate_chunk((setup, seed, chunk))]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = executor.map(_evaluate_chunk, [(setup, seed, chunk) for chunk in chunks])
            records = [r for part in parts for r in part]
    logger.info(f"Finished {len(records)} paths")
    return records


def information_buckets(records: Sequence[PathRecord]) -> List[str]:
    """Time-s information state: survival, regime at the last observation and X decile."""
    frame = pd.DataFrame({
        'regime': [r.regime_s for r in records],
        'price': [r.price_s for r in records],
        'alive': [r.survived_s for r in records],
    })
    frame['decile'] = -1
    alive = frame['alive']
    if alive.any():
        frame.loc[alive, 'decile'] = pd.qcut(frame.loc[alive, 'price'].rank(method='first'),
                                             DECILES, labels=False, duplicates='drop')
    return [
        f"r{row.regime}|d{int(row.decile)}" if row.alive else 'defaulted'
        for row in frame.itertuples()
    ]


def verify(setup: VerificationSetup, seed: int, n_paths: int, z_max: float = DEFAULT_Z_MAX,
           workers: Optional[int] = None, min_paths: int = MIN_PATHS) -> VerificationOutcome:
    """Simulate, compensate and run the residual and orthogonality tests."""
    if n_paths < min_paths:
        raise ValidationError(f"n_paths must be >= {min_paths}, got {n_paths}")
    records = run_paths(setup, seed, n_paths, workers)
    events = [r.event_time for r in records]
    matrix = np.array([r.compensator for r in records], dtype=float)
    skipped = float(sum(r.skipped_mass for r in records))

    residual = martingale_residual_test(events, matrix, setup.times, z_max, min_paths, skipped)
    t_end = max(setup.times)
    t_index = list(setup.times).index(t_end)
    if setup.s < t_end:
        orthogonality = orthogonality_test(events, [r.a_s for r in records], matrix[:, t_index],
                                           setup.s, t_end, information_buckets(records), z_max, min_paths)
    else:
        orthogonality = MartingaleReport('orthogonality', [], [], [], [], [], n_paths, z_max, z_max,
                                         notices=['no s < t pair; skipped'])
    logger.info(f"Residual test passed: {residual.all_passed}; orthogonality passed: {orthogonality.all_passed}")
    return VerificationOutcome(residual, orthogonality, records)


def records_frame(records: Sequence[PathRecord]) -> pd.DataFrame:
    rows: List[Dict[str, object]] = []
    for r in records:
        rows.append({
            'index': r.index, 'tau': r.tau, 'jump_hit': r.jump_hit,
            'n_windows': r.n_windows, 'n_observations': r.n_observations,
            'n_price_jumps': r.n_price_jumps,
        })
    return pd.DataFrame(rows, columns=['index', 'tau', 'jump_hit', 'n_windows',
                                       'n_observations', 'n_price_jumps'])


def with_sigma(model: ModelSpec, sigma: Sequence[float]) -> ModelSpec:
    """Copy of model with another volatility vector (negative-control compensators)."""
    return replace(model, sigma=tuple(float(s) for s in sigma))
