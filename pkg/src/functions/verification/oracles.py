"""Independent oracles: a finite-difference intensity estimator and a Monte
Carlo survival estimator."""
import math
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from ...lib.common_utils import setup_logging
from ...lib.errors import DomainError, SingularKernelError, ValidationError
from ..compensators.engine import F_FLOOR
from ..compensators.kernels import SurvivalKernel
from ..compensators.windows import DelayLaw
from ..models.bridge import crossing_probability
from ..models.model_spec import ModelKind, ModelSpec, ObservationSchedule
from ..models.simulation import DEFAULT_MAX_STEP, simulate_price_path

logger = setup_logging(__name__)

DEFAULT_STEP = 1e-5
MIN_MC_PATHS = 1000


def _one_sided_estimate(kernel: SurvivalKernel, x: float, z: float, u: float, h: float,
                        delay: Optional[DelayLaw]) -> float:
    """(1/h) P(default in (u, u + h] | survived to u, no new information yet)."""
    f_u = kernel.f(x, z, u)
    if f_u <= F_FLOOR:
        raise SingularKernelError(f"f={f_u:.3e} below floor at u={u}", (u, u + h))
    if delay is None or not kernel.has_gap:
        return (1.0 - kernel.f(x, z, u + h) / f_u) / h

    # survive with the window still open, or survive a window end in (u, u + h]
    alive = delay.tail(u)
    stay_open = kernel.f(x, z, u + h) * delay.tail(u + h)
    survive_end, _ = integrate.quad(
        lambda v: (kernel.f(x, z, v) - kernel.h(x, z, v)) * delay.density(v),
        u, u + h, epsabs=1e-14, epsrel=1e-10,
    )
    return (1.0 - (stay_open + survive_end) / (f_u * alive)) / h


def laplacian_intensity(kernel: SurvivalKernel, x: float, z: float, u: float,
                        h: float = DEFAULT_STEP, delay: Optional[DelayLaw] = None) -> float:
    """Intensity as lim (1/h) P(t < tau <= t + h | G_t), Richardson-extrapolated over h and h/2.

    Without a delay law this is (1/h)(1 - f(u + h) / f(u)). With one, a window
    end inside (u, u + h] is accounted for through the gap h of the kernel.
    """
    if not u > 0:
        raise DomainError(f"u must be > 0, got {u}")
    if not h > 0:
        raise DomainError(f"h must be > 0, got {h}")
    coarse = _one_sided_estimate(kernel, x, z, u, h, delay)
    fine = _one_sided_estimate(kernel, x, z, u, h / 2.0, delay)
    return 2.0 * fine - coarse


def _plain_gbm_survival(model: ModelSpec, t: float, n_paths: int, rng: np.random.Generator,
                        max_step: float) -> np.ndarray:
    n_steps = max(1, int(math.ceil(t / max_step - 1e-9)))
    dt = t / n_steps
    mu, sigma = model.mu[0], model.sigma[0]
    log_barrier = math.log(model.barrier)
    level = np.full(n_paths, math.log(model.x0))
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(n_steps):
        step = (mu - 0.5 * sigma * sigma) * dt + sigma * math.sqrt(dt) * rng.standard_normal(n_paths)
        nxt = level + step
        p = crossing_probability(level, nxt, log_barrier, sigma, np.full(n_paths, dt))
        alive &= rng.random(n_paths) >= p
        level = nxt
    return alive


def mc_survival(model: ModelSpec, start: float, t: float, n_paths: int,
                rng: np.random.Generator, max_step: float = DEFAULT_MAX_STEP) -> Tuple[float, float]:
    """Bridge-corrected Monte Carlo estimate of P_start(tau > t) and its binomial SE."""
    if n_paths < MIN_MC_PATHS:
        raise ValidationError(f"mc_survival needs at least {MIN_MC_PATHS} paths, got {n_paths}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if start <= model.barrier:
        return 0.0, 0.0
    if t == 0:
        return 1.0, 0.0

    model = replace(model, x0=start)
    if model.kind == ModelKind.PLAIN_GBM:
        alive = _plain_gbm_survival(model, t, n_paths, rng, max_step)
    else:
        schedule = ObservationSchedule((0.0, t))
        alive = np.array([
            simulate_price_path(model, schedule, rng, max_step).tau > t for _ in range(n_paths)
        ])
    p = float(alive.mean())
    se = math.sqrt(p * (1.0 - p) / n_paths)
    logger.info(f"MC survival from {start} over t={t}: {p:.6f} +/- {se:.6f} ({n_paths} paths)")
    return p, se
