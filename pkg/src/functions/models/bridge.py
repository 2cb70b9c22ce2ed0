"""Brownian-bridge barrier crossing for log-price paths.

All functions work on log prices: a step from l0 to l1 over dt with volatility
sigma crosses log_barrier with probability exp(-2 (l0-b)(l1-b) / (sigma^2 dt))
when both endpoints lie above the barrier, and with probability 1 otherwise.
The drift does not enter: conditioned on its endpoints the path is a bridge.
"""
import math
from typing import Optional

import numpy as np

from ...lib.errors import ContractViolation
from .model_spec import JumpLaw

BISECTION_DEPTH = 12
MAX_REJECTIONS = 2000

_MIDPOINT = 'midpoint'
_BISECT = 'bisect'


def crossing_probability(l0, l1, log_barrier: float, sigma: float, dt):
    """Probability that the bridge from l0 to l1 touches log_barrier; vectorized."""
    l0 = np.asarray(l0, dtype=float)
    l1 = np.asarray(l1, dtype=float)
    dt = np.asarray(dt, dtype=float)
    a = l0 - log_barrier
    b = l1 - log_barrier
    above = (a > 0) & (b > 0)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        exponent = np.where(above & (dt > 0), -2.0 * a * b / (sigma * sigma * dt), -np.inf)
    p = np.where(above, np.exp(np.minimum(exponent, 0.0)), 1.0)
    return p if p.ndim else float(p)


def _locate_by_bisection(t0: float, t1: float, l0: float, l1: float, log_barrier: float,
                         sigma: float, rng: np.random.Generator) -> float:
    """Sample the first crossing time in [t0, t1] given that a crossing occurs there."""
    for _ in range(BISECTION_DEPTH):
        half = 0.5 * (t1 - t0)
        mean = 0.5 * (l0 + l1)
        sd = sigma * math.sqrt(half / 2.0)
        for _ in range(MAX_REJECTIONS):
            m = mean + sd * rng.standard_normal()
            p_left = crossing_probability(l0, m, log_barrier, sigma, half)
            p_right = crossing_probability(m, l1, log_barrier, sigma, half)
            accept = 1.0 - (1.0 - p_left) * (1.0 - p_right)
            if rng.random() < accept:
                break
        else:
            return t0 + half
        if rng.random() * accept < p_left:
            t1, l1 = t0 + half, m
        else:
            t0, l0 = t0 + half, m
    return 0.5 * (t0 + t1)


def first_passage_detect(times: np.ndarray, log_prices: np.ndarray, log_barrier: float,
                         sigma: float, rng: np.random.Generator, bridge: bool = True,
                         crossing_time: str = _MIDPOINT) -> Optional[float]:
    """First barrier crossing of a simulated segment, or None.

    Args:
        times: Step endpoints t_0 < ... < t_n of one constant-volatility segment
        log_prices: Log prices at those times; log_prices[0] must lie above the barrier
        log_barrier: Log of the barrier level
        sigma: Volatility on the segment
        rng: Generator; one uniform per step is always drawn
        bridge: Apply the within-step Brownian-bridge correction
        crossing_time: 'midpoint' places the crossing at the step midpoint,
            'bisect' samples it from the bridge conditioned on crossing
    Returns:
        The crossing time, or None when the segment stays above the barrier
    """
    times = np.asarray(times, dtype=float)
    log_prices = np.asarray(log_prices, dtype=float)
    if log_prices[0] <= log_barrier:
        raise ContractViolation(
            f"segment starts at log price {log_prices[0]} on or below the barrier {log_barrier}"
        )
    if len(times) < 2:
        return None

    uniforms = rng.random(len(times) - 1)
    l0, l1 = log_prices[:-1], log_prices[1:]
    if bridge:
        p = crossing_probability(l0, l1, log_barrier, sigma, np.diff(times))
        crossed = uniforms < p
    else:
        crossed = l1 <= log_barrier
    if not np.any(crossed):
        return None

    k = int(np.argmax(crossed))
    if crossing_time == _BISECT and bridge:
        return _locate_by_bisection(times[k], times[k + 1], l0[k], l1[k], log_barrier, sigma, rng)
    return 0.5 * (times[k] + times[k + 1])


def bridge_survival(l0: float, l1: float, log_barrier: float, sigma: float, dt: float) -> float:
    """P(no crossing on a step | both endpoints)."""
    return 1.0 - crossing_probability(l0, l1, log_barrier, sigma, dt)


def jump_window_survival(l_start: float, l_after_jump: float, log_barrier: float, mu: float,
                         sigma: float, dt: float, law: JumpLaw) -> float:
    """P(no default on a window that ended with a price jump | start, post-jump value).

    The jump factor xi is not observed; the bridge survival of the pre-jump path
    is averaged over the posterior of xi given the post-jump log price.
    """
    if l_after_jump <= log_barrier:
        return 0.0
    z, w = law.nodes
    pre_jump = l_after_jump - np.log(z)
    drift = (mu - 0.5 * sigma * sigma) * dt
    scale = sigma * math.sqrt(dt)
    log_lik = -0.5 * ((pre_jump - l_start - drift) / scale) ** 2
    posterior = w * np.exp(log_lik - log_lik.max())
    total = posterior.sum()
    if total <= 0:
        return bridge_survival(l_start, l_after_jump, log_barrier, sigma, dt)
    survive = 1.0 - crossing_probability(np.full_like(pre_jump, l_start), pre_jump, log_barrier,
                                         sigma, np.full_like(pre_jump, dt))
    return float(np.dot(posterior, survive) / total)

