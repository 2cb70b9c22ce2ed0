"""Exact-in-law simulation of the chain, the price path and its default time,
and the local jumping windows read off a simulated path."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ...lib.common_utils import setup_logging
from ...lib.errors import ContractViolation
from ..compensators.windows import DelayLaw, LocalJumpWindow
from .bridge import bridge_survival, first_passage_detect, jump_window_survival
from .model_spec import (GeneratorMatrix, ModelKind, ModelSpec, ObservationSchedule,
                         StoppingRule, check_observability)

logger = setup_logging(__name__)

DEFAULT_MAX_STEP = 1.0 / 64.0

SCHEDULED = 'scheduled'
REGIME_JUMP = 'regime_jump'


@dataclass(frozen=True)
class RegimeSegment:
    start: float
    end: float
    regime: int


@dataclass(frozen=True)
class Observation:
    time: float
    price: float
    regime: int
    kind: str


@dataclass
class SimPath:
    """One simulated trajectory, kept up to tau (or the horizon)."""

    model: ModelSpec
    horizon: float
    segments: List[RegimeSegment]
    grids: List[Tuple[np.ndarray, np.ndarray]]   # per segment: times, log prices
    jumps: List[Tuple[float, float]] = field(default_factory=list)
    tau: float = math.inf
    jump_hit: bool = False
    observations: List[Observation] = field(default_factory=list)

    def _segment_index(self, t: float) -> int:
        for i, seg in enumerate(self.segments):
            if seg.start <= t < seg.end:
                return i
        return len(self.segments) - 1

    def regime_at(self, t: float) -> int:
        return self.segments[self._segment_index(t)].regime

    def log_price_at(self, t: float) -> float:
        idx = min(self._segment_index(t), len(self.grids) - 1)
        times, logs = self.grids[idx]
        if t > times[-1] + 1e-12:
            raise ContractViolation(f"price at t={t} is past the simulated path (tau={self.tau})")
        return float(np.interp(t, times, logs))

    def price_at(self, t: float) -> float:
        return math.exp(self.log_price_at(t))

    @property
    def regime_jump_times(self) -> List[float]:
        return [seg.start for seg in self.segments[1:]]

    def summary(self) -> Dict[str, object]:
        return {
            'tau': self.tau,
            'jump_hit': self.jump_hit,
            'n_segments': len(self.segments),
            'n_price_jumps': len(self.jumps),
            'n_observations': len(self.observations),
            'final_regime': self.segments[-1].regime if self.segments else None,
        }


def simulate_chain(generator: GeneratorMatrix, start: int, horizon: float,
                   rng: np.random.Generator) -> List[RegimeSegment]:
    """Regime segments tiling [0, horizon]: Exponential(q_i) holding times,
    next state j with probability q_ij / q_i."""
    if horizon <= 0:
        return [RegimeSegment(0.0, 0.0, start)]

    segments: List[RegimeSegment] = []
    t, state = 0.0, start
    while True:
        rate = generator.exit_rate(state)
        hold = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        if t + hold >= horizon:
            segments.append(RegimeSegment(t, horizon, state))
            return segments
        segments.append(RegimeSegment(t, t + hold, state))
        state = int(rng.choice(generator.n_states, p=generator.jump_probabilities(state)))
        t += hold


def _segment_grid(start: float, end: float, obs_times: np.ndarray, max_step: float) -> np.ndarray:
    inner = obs_times[(obs_times > start) & (obs_times < end)]
    knots = np.concatenate([[start], inner, [end]])
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(math.ceil((b - a) / max_step - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    pieces.append(np.array([end]))
    return np.concatenate(pieces)


def _chain_hit(segments: Sequence[RegimeSegment], targets: Sequence[int]) -> Tuple[float, bool]:
    if segments[0].regime in targets:
        return 0.0, False
    for seg in segments[1:]:
        if seg.regime in targets:
            return seg.start, True
    return math.inf, False


def simulate_price_path(model: ModelSpec, schedule: ObservationSchedule, rng: np.random.Generator,
                        max_step: float = DEFAULT_MAX_STEP, bridge: bool = True,
                        crossing_time: str = 'midpoint') -> SimPath:
    """Simulate regimes, log prices on a grid refined to max_step, jumps and tau."""
    check_observability(model, schedule)
    horizon = schedule.horizon
    segments = simulate_chain(model.generator, model.regime0, horizon, rng)
    obs_times = np.asarray(schedule.times, dtype=float)
    level = math.log(model.x0)
    log_barrier = math.log(model.barrier)
    path = SimPath(model, horizon, segments, [])

    if model.kind == ModelKind.CHAIN_ONLY or horizon <= 0:
        path.grids = [(np.array([s.start, s.end]), np.full(2, level)) for s in segments]
        if horizon > 0:
            path.tau, path.jump_hit = _chain_hit(segments, model.target_regimes)
        _record_observations(path, schedule)
        return path

    region_rule = model.stopping_rule == StoppingRule.DEFAULT_REGION
    for idx, seg in enumerate(segments):
        if idx > 0:
            if model.kind == ModelKind.JUMP_DIFFUSION:
                factor = model.jump_law(seg.regime).sample(rng)
                level += math.log(factor)
                path.jumps.append((seg.start, factor))
            watched = not region_rule or seg.regime in model.target_regimes
            if watched and level <= log_barrier:
                path.tau, path.jump_hit = seg.start, True
                path.grids.append((np.array([seg.start]), np.array([level])))
                break

        times = _segment_grid(seg.start, seg.end, obs_times, max_step)
        dt = np.diff(times)
        mu, sigma = model.mu[seg.regime], model.sigma[seg.regime]
        steps = (mu - 0.5 * sigma * sigma) * dt + sigma * np.sqrt(dt) * rng.standard_normal(len(dt))
        logs = level + np.concatenate([[0.0], np.cumsum(steps)])

        if not region_rule or seg.regime in model.target_regimes:
            crossing = first_passage_detect(times, logs, log_barrier, sigma, rng, bridge, crossing_time)
            if crossing is not None:
                k = int(np.searchsorted(times, crossing, side='left'))
                path.tau = crossing
                path.grids.append((np.append(times[:k], crossing), np.append(logs[:k], log_barrier)))
                break
        path.grids.append((times, logs))
        level = float(logs[-1])

    if path.tau < math.inf:
        logger.debug(f"Default at {path.tau:.6f} (jump hit: {path.jump_hit})")
    _record_observations(path, schedule)
    return path


def _record_observations(path: SimPath, schedule: ObservationSchedule) -> None:
    records = [(t, SCHEDULED) for t in schedule.times if t < path.tau]
    if schedule.observe_regime_jumps:
        records += [(t, REGIME_JUMP) for t in path.regime_jump_times if t < path.tau]
    records.sort(key=lambda r: (r[0], r[1] != SCHEDULED))
    path.observations = [
        Observation(t, path.price_at(t), path.regime_at(t), kind) for t, kind in records
    ]


def _window_survival(path: SimPath, start: float, end: float, regime: int) -> float:
    model = path.model
    if model.stopping_rule != StoppingRule.FIRST_PASSAGE:
        return 1.0
    l_start, l_end = path.log_price_at(start), path.log_price_at(end)
    log_barrier = math.log(model.barrier)
    mu, sigma = model.mu[regime], model.sigma[regime]
    jumped = any(abs(t - end) < 1e-15 for t, _ in path.jumps)
    if jumped:
        return jump_window_survival(l_start, l_end, log_barrier, mu, sigma, end - start,
                                    model.jump_law(path.regime_at(end)))
    return bridge_survival(l_start, l_end, log_barrier, sigma, end - start)


def build_windows(path: SimPath, schedule: ObservationSchedule) -> List[LocalJumpWindow]:
    """Windows (S, T] tiling [0, tau ^ t_max], S = t_k v T_n and T = t_{k+1} ^ T_{n+1}."""
    stop = min(path.tau, path.horizon)
    if stop <= 0:
        return []

    breaks = set(schedule.times)
    if schedule.observe_regime_jumps:
        breaks.update(path.regime_jump_times)
    ordered = sorted(breaks)

    windows: List[LocalJumpWindow] = []
    survivor = 1.0
    for idx, S in enumerate(ordered):
        if S >= stop:
            break
        natural_T = ordered[idx + 1] if idx + 1 < len(ordered) else math.inf
        T = min(natural_T, stop)
        censored = natural_T > stop
        v2 = schedule.next_time_after(S) - S
        regime = path.regime_at(S)
        rate = path.model.generator.exit_rate(regime) if schedule.observe_regime_jumps else 0.0
        window = LocalJumpWindow(S, T, path.price_at(S), regime, v2, DelayLaw(rate, v2),
                                 survivor, censored)
        windows.append(window)
        if not censored:
            survivor *= _window_survival(path, S, T, regime)
    return windows
