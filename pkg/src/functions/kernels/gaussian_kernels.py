"""First-passage functionals of a drifted Brownian motion W_t + eta*t.

psi(eta, t, y)        P(inf_{s<=t} W_s^(eta) > y),                y < 0
psi_t(eta, t, y)      d psi / dt
phi(eta, t, y1, y2)   P(inf_{s<=t} W_s^(eta) > y1, W_t^(eta) <= y2), y1 < 0, y1 <= y2

psi is available both as the integral of the first-passage density
(psi_quadrature) and in closed form (psi_closed); the two must agree.
"""
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import integrate, special

from ...lib.errors import DomainError, NumericalError

QUAD_TOLERANCE = 1e-10
QUAD_LIMIT = 200

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DriftParams:
    """Drift of the unit-volatility Brownian motion W^(eta)."""

    eta: float

    @classmethod
    def from_gbm(cls, mu: float, sigma: float) -> 'DriftParams':
        if not sigma > 0:
            raise DomainError(f"sigma must be > 0, got {sigma}")
        return cls(mu / sigma - sigma / 2.0)


@dataclass(frozen=True)
class BarrierCoord:
    """Barrier position in W^(eta) units: y = log(barrier / state) / sigma."""

    y: float

    @classmethod
    def from_prices(cls, state: float, barrier: float, sigma: float) -> 'BarrierCoord':
        if state <= 0 or barrier <= 0:
            raise DomainError(f"prices must be positive, got state={state}, barrier={barrier}")
        if not sigma > 0:
            raise DomainError(f"sigma must be > 0, got {sigma}")
        return cls(math.log(barrier / state) / sigma)


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value}")


def _check_psi_args(eta: float, t: float, y: float) -> None:
    _require_finite(eta=eta, t=t, y=y)
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if y >= 0:
        raise DomainError(f"y must be < 0, got {y}")


def norm_cdf(x: float) -> float:
    """Standard normal distribution function."""
    if not math.isfinite(x):
        raise DomainError(f"norm_cdf needs a finite argument, got {x}")
    return float(special.ndtr(x))


def _ndtr_diff(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Phi(upper) - Phi(lower), evaluated in the tail where it is accurate."""
    return np.where(lower > 0, special.ndtr(-lower) - special.ndtr(-upper),
                    special.ndtr(upper) - special.ndtr(lower))


def first_passage_density(eta: float, s: float, y: float) -> float:
    """Density at s of the first time W^(eta) reaches y (< 0); 0 at s <= 0."""
    if s <= 0:
        return 0.0
    return abs(y) / (_SQRT_2PI * s ** 1.5) * math.exp(-(y - eta * s) ** 2 / (2.0 * s))


def _density_peak(eta: float, y: float) -> float:
    # mode of s^{-3/2} exp(-(y - eta s)^2 / 2s)
    if eta == 0:
        return y * y / 3.0
    return (-3.0 + math.sqrt(9.0 + 4.0 * eta * eta * y * y)) / (2.0 * eta * eta)


def _breakpoints(eta: float, t: float, y: float) -> Iterable[float]:
    # geometric grid from just below the peak up to t; the density spans many scales when |y| is small
    point = _density_peak(eta, y) / 16.0
    points = []
    while point < t:
        if point > 0:
            points.append(point)
        point *= 4.0
    return points


def psi_quadrature(eta: float, t: float, y: float) -> float:
    """psi by adaptive quadrature of the first-passage density over (0, t]."""
    _check_psi_args(eta, t, y)
    points = list(_breakpoints(eta, t, y))
    result = integrate.quad(
        lambda s: first_passage_density(eta, s, y), 0.0, t,
        points=points or None, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE,
        limit=QUAD_LIMIT, full_output=1,
    )
    value, abserr = result[0], result[1]
    # a fourth element (message) is only returned when quad reports a problem
    if len(result) > 3 and abserr > 10 * QUAD_TOLERANCE:
        raise NumericalError(
            f"psi quadrature did not converge for eta={eta}, t={t}, y={y}: {result[3]}",
            achieved_tolerance=abserr,
        )
    return min(1.0, max(0.0, 1.0 - value))


def psi_closed(eta: float, t: float, y: float) -> float:
    """psi in closed form: Phi((-y + eta t)/sqrt t) - e^{2 eta y} Phi((y + eta t)/sqrt t)."""
    _check_psi_args(eta, t, y)
    root_t = math.sqrt(t)
    head = special.ndtr((-y + eta * t) / root_t)
    # e^{2 eta y} Phi(.) in log space, the factor alone can overflow
    tail = math.exp(2.0 * eta * y + special.log_ndtr((y + eta * t) / root_t))
    return min(1.0, max(0.0, float(head - tail)))


def psi_t(eta: float, t: float, y: float) -> float:
    """Time derivative of psi; the negated first-passage density at t."""
    _check_psi_args(eta, t, y)
    return -first_passage_density(eta, t, y)


def phi_joint(eta: float, t: float, y1: float, y2: float) -> float:
    """P(inf_{s<=t} W_s^(eta) > y1, W_t^(eta) <= y2)."""
    if math.isnan(y2):
        raise DomainError("y2 must not be NaN")
    if y2 < y1:
        raise DomainError(f"need y1 <= y2, got y1={y1}, y2={y2}")
    return float(phi_joint_levels(eta, t, y1, np.array([y2]))[0])


def phi_joint_levels(eta: float, t: float, y1: float, y2: np.ndarray) -> np.ndarray:
    """phi_joint over an array of upper levels y2 (each >= y1) at fixed eta, t, y1."""
    _require_finite(eta=eta, t=t, y1=y1)
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if y1 >= 0:
        raise DomainError(f"y1 must be < 0, got {y1}")
    y2 = np.asarray(y2, dtype=float)

    root_t = math.sqrt(t)
    direct = _ndtr_diff((y2 - eta * t) / root_t, (y1 - eta * t) / root_t)
    reflected = _ndtr_diff((y2 - 2.0 * y1 - eta * t) / root_t, np.full_like(y2, (-y1 - eta * t) / root_t))
    # e^{2 eta y1} * reflected in log space
    with np.errstate(divide='ignore'):
        reflected = np.where(reflected > 0, np.exp(2.0 * eta * y1 + np.log(np.maximum(reflected, 0.0))), 0.0)
    return np.maximum(0.0, direct - reflected)


def gbm_survival(state: float, barrier: float, mu: float, sigma: float, t: float) -> float:
    """P(GBM started at state stays above barrier on [0, t])."""
    drift = DriftParams.from_gbm(mu, sigma)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if state <= barrier:
        return 0.0
    if t == 0:
        return 1.0
    coord = BarrierCoord.from_prices(state, barrier, sigma)
    return psi_closed(drift.eta, t, coord.y)


def gbm_survival_dt(state: float, barrier: float, mu: float, sigma: float, t: float) -> float:
    """Time derivative of gbm_survival."""
    drift = DriftParams.from_gbm(mu, sigma)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if state <= barrier or t == 0:
        return 0.0
    coord = BarrierCoord.from_prices(state, barrier, sigma)
    return psi_t(drift.eta, t, coord.y)
