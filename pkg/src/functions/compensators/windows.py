"""Data carried by the compensator engine: local jumping windows, the law of
their length, compensator realizations and sampled Azema supermartingales."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ...lib.errors import ContractViolation, ValidationError

Atom = Tuple[float, float]


@dataclass(frozen=True)
class DelayLaw:
    """Conditional law of T - S given the frozen data at S.

    T - S = min(V_1, V_2) with V_1 ~ Exponential(rate) the next observed chain
    jump and V_2 the residual to the next deterministic observation: a density
    rate * exp(-rate u) on (0, V_2) and an atom of mass exp(-rate V_2) at V_2.
    rate = 0 is the purely deterministic case (a single atom at V_2).
    """

    rate: float
    horizon: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValidationError(f"delay rate must be >= 0, got {self.rate}")
        if not self.horizon > 0:
            raise ValidationError(f"V_2 must be > 0, got {self.horizon}")

    def density(self, u: float) -> float:
        if u < 0 or u >= self.horizon:
            return 0.0
        return self.rate * math.exp(-self.rate * u)

    @property
    def atoms(self) -> List[Atom]:
        return [(self.horizon, math.exp(-self.rate * self.horizon))]

    def tail(self, u: float) -> float:
        """P(T - S >= u)."""
        if u <= 0:
            return 1.0
        if u > self.horizon:
            return 0.0
        return math.exp(-self.rate * u)

    def hazard(self, u: float) -> float:
        """Density part of P(T-S in du) / P(T-S >= u), right-continuous at 0."""
        if u < 0 or u >= self.horizon:
            return 0.0
        return self.rate


@dataclass(frozen=True)
class LocalJumpWindow:
    """One interval (S, T] on which the observed information is frozen at S."""

    S: float
    T: float
    x_s: float
    regime_s: int
    v2: float
    delay: DelayLaw
    survivor: float = 1.0
    censored: bool = False   # T cut at tau before the next information time

    def __post_init__(self):
        if not self.T > self.S:
            raise ValidationError(f"window needs S < T, got S={self.S}, T={self.T}")
        if not 0.0 <= self.survivor <= 1.0:
            raise ValidationError(f"survivor must be a probability, got {self.survivor}")

    @property
    def length(self) -> float:
        return self.T - self.S

    def elapsed(self, t: float, closed_right: bool = True) -> float:
        inside = self.S < t <= self.T if closed_right else self.S <= t < self.T
        if not inside:
            bounds = f"({self.S}, {self.T}]" if closed_right else f"[{self.S}, {self.T})"
            raise ContractViolation(f"t={t} outside window {bounds}")
        return t - self.S


@dataclass
class CompensatorPath:
    """A compensator realization: density sampled on knots plus atoms.

    `continuous` holds the integral of the density from knots[0] to each knot;
    atoms are kept apart so value_at stays exact at atom times.
    """

    knots: np.ndarray
    density: np.ndarray
    continuous: np.ndarray
    atoms: List[Atom] = field(default_factory=list)
    tau: float = math.inf
    skipped_mass: float = 0.0

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        self.continuous = np.asarray(self.continuous, dtype=float)
        if not (self.knots.shape == self.density.shape == self.continuous.shape):
            raise ValidationError("knots, density and continuous must have the same length")
        if np.any(np.diff(self.continuous) < -1e-12) or np.any(self.density < 0):
            raise ValidationError("compensator must be nondecreasing with a nonnegative density")

    def value_at(self, t: float) -> float:
        """A(t), frozen after tau; 0 before the first knot."""
        if len(self.knots) == 0:
            return 0.0
        t = min(t, self.tau)
        if t < self.knots[0]:
            return 0.0
        value = float(np.interp(t, self.knots, self.continuous))
        return value + sum(mass for time, mass in self.atoms if time <= t)

    def density_at(self, t: float) -> float:
        if t >= self.tau or len(self.knots) == 0:
            return 0.0
        return float(np.interp(t, self.knots, self.density))

    @property
    def total(self) -> float:
        return self.value_at(math.inf)

    @classmethod
    def concatenate(cls, pieces: Sequence['CompensatorPath'], tau: float = math.inf) -> 'CompensatorPath':
        """Join per-window pieces, in time order, into one path started at 0."""
        knots, density, continuous, atoms = [np.zeros(1)], [np.zeros(1)], [np.zeros(1)], []
        offset, skipped = 0.0, 0.0
        for piece in pieces:
            if len(piece.knots) == 0:
                continue
            knots.append(piece.knots)
            density.append(piece.density)
            continuous.append(piece.continuous - piece.continuous[0] + offset)
            offset += piece.continuous[-1] - piece.continuous[0]
            atoms.extend(piece.atoms)
            skipped += piece.skipped_mass
        return cls(np.concatenate(knots), np.concatenate(density), np.concatenate(continuous),
                   atoms, tau, skipped)


@dataclass
class SupermartingalePath:
    """Samples of Z, its left limits and the F-compensator increments dA."""

    times: np.ndarray
    z: np.ndarray
    z_minus: np.ndarray
    da_density: np.ndarray
    da_atoms: List[Atom] = field(default_factory=list)
    z_prime: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.z_minus = np.asarray(self.z_minus, dtype=float)
        self.da_density = np.asarray(self.da_density, dtype=float)
        if self.z_prime is not None:
            self.z_prime = np.asarray(self.z_prime, dtype=float)
        n = len(self.times)
        if any(len(a) != n for a in (self.z, self.z_minus, self.da_density)):
            raise ValidationError("supermartingale samples must share the time grid")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("supermartingale times must increase strictly")
        if np.any((self.z < -1e-12) | (self.z > 1 + 1e-12)):
            raise ValidationError("Z must take values in [0, 1]")
        if np.any(self.da_density < 0) or any(m < 0 for _, m in self.da_atoms):
            raise ValidationError("dA must be nonnegative")

    @classmethod
    def from_decreasing(cls, times: Sequence[float], z: Sequence[float],
                        z_prime: Sequence[float]) -> 'SupermartingalePath':
        """Continuous nonincreasing Z, whose compensator is A = Z_0 - Z."""
        z_prime = np.asarray(z_prime, dtype=float)
        return cls(times, z, z, np.maximum(-z_prime, 0.0), [], z_prime)
