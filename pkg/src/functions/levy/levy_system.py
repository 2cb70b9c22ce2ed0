"""Compensators of hitting times for processes driven by a finite-state chain.

For a chain the Levy system is the identity clock U_t = t with the generator
rows as jump kernel, K(i, {j}) = q_ij and K(i, {i}) = 0. The first jump into a
target set D is compensated by

    A_t = int_0^{t ^ tau} sum_j K(eps_s, {j}) (1_D(j) + 1_{D^c}(j) P_j(tau = 0)) ds
"""
import math
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np
from scipy import special

from ...lib.common_utils import setup_logging
from ...lib.errors import ContractViolation, ValidationError
from ..compensators.windows import CompensatorPath
from ..models.model_spec import GeneratorMatrix, ModelKind, ModelSpec, StoppingRule
from ..models.simulation import RegimeSegment, SimPath

logger = setup_logging(__name__)

OCCUPATION_NODES = 16


def _never_instant(state: int) -> float:
    # a finite chain holds every state for a positive time
    return 0.0


@dataclass(frozen=True)
class LevySystemSpec:
    """Clock U_t = t and kernel K given by the off-diagonal generator rates."""

    generator: GeneratorMatrix
    targets: FrozenSet[int]
    p0: Callable[[int], float] = _never_instant

    def __post_init__(self):
        n = self.generator.n_states
        if not self.targets:
            raise ValidationError("target set D must not be empty")
        if any(not 0 <= j < n for j in self.targets):
            raise ValidationError(f"target set {sorted(self.targets)} outside state space of size {n}")

    @classmethod
    def from_model(cls, model: ModelSpec) -> 'LevySystemSpec':
        return cls(model.generator, frozenset(model.target_regimes))

    def clock(self, t: float) -> float:
        return t

    def kernel(self, state: int) -> np.ndarray:
        """K(state, .) with K(state, {state}) = 0."""
        row = np.array(self.generator.q[state], dtype=float)
        row[state] = 0.0
        return row

    def hit_rate(self, state: int) -> float:
        """Rate of jumping from `state` straight into D (or onto a point that stops at once)."""
        if state in self.targets:
            return 0.0
        row = self.kernel(state)
        return float(sum(
            rate * (1.0 if j in self.targets else self.p0(j))
            for j, rate in enumerate(row) if rate > 0
        ))


def chain_hit_compensator(spec: LevySystemSpec, segments: Sequence[RegimeSegment],
                          targets: Optional[Iterable[int]] = None,
                          horizon: Optional[float] = None) -> CompensatorPath:
    """Compensator of the first jump of the chain into D along one regime path.

    A start inside D is not a jump hit: tau = 0 and the compensator stays 0.
    """
    if targets is not None:
        spec = LevySystemSpec(spec.generator, frozenset(targets), spec.p0)
    if not segments:
        raise ContractViolation("chain path has no regime segments")
    end = segments[-1].end if horizon is None else horizon

    if segments[0].regime in spec.targets:
        return CompensatorPath(np.array([0.0, end]), np.zeros(2), np.zeros(2), tau=0.0)

    knots: List[float] = []
    density: List[float] = []
    continuous: List[float] = []
    total, tau = 0.0, math.inf
    for seg in segments:
        if seg.regime in spec.targets:
            tau = seg.start
            break
        if seg.start >= end:
            break
        stop = min(seg.end, end)
        rate = spec.hit_rate(seg.regime)
        knots += [seg.start, stop]
        density += [rate, rate]
        continuous += [total, total + rate * (stop - seg.start)]
        total = continuous[-1]
    return CompensatorPath(np.array(knots), np.array(density), np.array(continuous), tau=tau)


def intensity_default_region(model: ModelSpec, x_t: float, regime_t: int,
                             barrier: Optional[float] = None) -> float:
    """sum_{j in D} q_{eps j} when eps is outside D and X_t <= barrier, else 0.

    The boundary term 1{X_t = x} P_{(x, j)}(tau = 0) is dropped: a continuous X
    spends Lebesgue-null time on the barrier.
    """
    if model.kind == ModelKind.CHAIN_ONLY:
        raise ValidationError("default-region intensity needs a model with a price process")
    level = model.barrier if barrier is None else barrier
    if regime_t in model.target_regimes or x_t > level:
        return 0.0
    return float(sum(model.generator.rate(regime_t, j) for j in model.target_regimes))


def _expected_time_below(l0: np.ndarray, l1: np.ndarray, dt: np.ndarray, log_barrier: float,
                         sigma: float) -> np.ndarray:
    """E[time spent at or below log_barrier | bridge endpoints], per step."""
    nodes, weights = np.polynomial.legendre.leggauss(OCCUPATION_NODES)
    s = 0.5 * (nodes + 1.0)                    # fractions of the step
    mean = l0[:, None] + (l1 - l0)[:, None] * s[None, :]
    sd = sigma * np.sqrt(dt[:, None] * s[None, :] * (1.0 - s[None, :]))
    below = special.ndtr((log_barrier - mean) / sd)
    return 0.5 * dt * (below @ weights)


def default_region_compensator(path: SimPath, barrier: Optional[float] = None) -> CompensatorPath:
    """Integral of intensity_default_region along a simulated path, frozen at tau.

    Between grid points the time spent below the barrier is replaced by its
    conditional expectation given the step endpoints; the hitting time itself
    only depends on prices at chain jump times, so the compensator property is
    unaffected.
    """
    model = path.model
    if model.stopping_rule != StoppingRule.DEFAULT_REGION:
        raise ValidationError(f"default-region compensator needs the default_region rule, "
                              f"got {model.stopping_rule.value}")
    level = model.barrier if barrier is None else barrier
    log_level = math.log(level)

    knots, density, continuous = [np.zeros(1)], [np.zeros(1)], [np.zeros(1)]
    total = 0.0
    for seg, (times, logs) in zip(path.segments, path.grids):
        if len(times) < 2:
            continue
        rate = 0.0 if seg.regime in model.target_regimes else float(
            sum(model.generator.rate(seg.regime, j) for j in model.target_regimes))
        occupation = (_expected_time_below(logs[:-1], logs[1:], np.diff(times), log_level,
                                           model.sigma[seg.regime])
                      if rate > 0 else np.zeros(len(times) - 1))
        increments = np.concatenate([[0.0], np.cumsum(rate * occupation)])
        knots.append(times)
        density.append(np.where(logs <= log_level, rate, 0.0))
        continuous.append(total + increments)
        total += float(increments[-1])
    return CompensatorPath(np.concatenate(knots), np.concatenate(density), np.concatenate(continuous),
                           tau=path.tau)
