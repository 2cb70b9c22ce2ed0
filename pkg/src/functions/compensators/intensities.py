"""Closed-form default intensities of the named models.

Each formula is written out directly from the Gaussian kernels so it can serve
as an independent check on general_compensator_eq5.
"""
import math
from typing import Optional, Tuple

import numpy as np

from ...lib.errors import ContractViolation, SingularKernelError, ValidationError
from ..kernels.gaussian_kernels import (BarrierCoord, DriftParams, phi_joint_levels, psi_closed, psi_t)
from ..models.model_spec import ModelKind, ModelSpec, StoppingRule
from .engine import F_FLOOR, Z_FLOOR
from .windows import LocalJumpWindow, SupermartingalePath

DETERMINISTIC_OBS = 'deterministic_obs'
REGIME_SWITCHING = 'regime_switching'
JUMP_DIFFUSION = 'jump_diffusion'

FORMULAS = {
    DETERMINISTIC_OBS: '-f_u(X_tk, t - t_k) / f(X_tk, t - t_k)',
    REGIME_SWITCHING: '-psi_t(eta_i, t - S, y) / psi(eta_i, t - S, y)',
    JUMP_DIFFUSION: '-psi_t / psi + sum_{j != i} q_ij E_Fj[phi(eta, t - S, y, y - log(xi) / sigma)] / psi',
}


def _diffusion_ratio(x: float, barrier: float, mu: float, sigma: float, u: float) -> float:
    eta = DriftParams.from_gbm(mu, sigma).eta
    y = BarrierCoord.from_prices(x, barrier, sigma).y
    survival = psi_closed(eta, u, y)
    if survival <= F_FLOOR:
        raise SingularKernelError(f"survival {survival:.3e} below floor at u={u}, y={y}", (u, u))
    return max(0.0, -psi_t(eta, u, y) / survival)


def intensity_deterministic_obs(x_tk: float, model: ModelSpec, t: float, t_k: float = 0.0,
                                regime: Optional[int] = None) -> float:
    """Intensity at t in (t_k, t_{k+1}] when prices are only seen at t_k."""
    if x_tk <= model.barrier:
        raise ContractViolation(f"surviving state X_tk={x_tk} lies on or below the barrier {model.barrier}")
    u = t - t_k
    if u <= 0:
        raise ContractViolation(f"t={t} must lie after the observation time {t_k}")
    regime = model.regime0 if regime is None else regime
    return _diffusion_ratio(x_tk, model.barrier, model.mu[regime], model.sigma[regime], u)


def intensity_regime_switching(window: LocalJumpWindow, model: ModelSpec, t: float) -> float:
    u = window.elapsed(t)
    if window.x_s <= model.barrier:
        raise ContractViolation(f"window starts at X_S={window.x_s} on or below the barrier")
    i = window.regime_s
    return _diffusion_ratio(window.x_s, model.barrier, model.mu[i], model.sigma[i], u)


def intensity_jump_diffusion(window: LocalJumpWindow, model: ModelSpec, t: float) -> float:
    """Diffusion hazard plus the hazard of a regime jump whose price jump lands
    below the barrier. The jump part only lives strictly before the next
    deterministic observation."""
    diffusion = intensity_regime_switching(window, model, t)
    u = window.elapsed(t)
    if u >= window.v2:
        return diffusion

    i = window.regime_s
    mu, sigma = model.mu[i], model.sigma[i]
    eta = DriftParams.from_gbm(mu, sigma).eta
    y = math.log(model.barrier / window.x_s) / sigma
    survival = psi_closed(eta, u, y)

    jump = 0.0
    for j in range(model.n_regimes):
        rate = model.generator.rate(i, j)
        if rate == 0:
            continue
        expected = model.jump_law(j).expectation(
            lambda xi: phi_joint_levels(eta, u, y, np.log(model.barrier / (xi * window.x_s)) / sigma)
        )
        jump += rate * expected
    return diffusion + jump / survival


def intensity_grad_log(zpath: SupermartingalePath, t: float) -> float:
    """-Z'_t / Z_t for a continuous nonincreasing Z."""
    if zpath.z_prime is None:
        raise ContractViolation("grad-log intensity needs derivative samples of Z")
    if np.any(np.diff(zpath.z) > 1e-12) or np.any(zpath.z_prime > 1e-12):
        raise ContractViolation("Z increases; the grad-log intensity needs a nonincreasing Z")
    if not zpath.times[0] <= t <= zpath.times[-1]:
        raise ContractViolation(f"t={t} outside the sampled range [{zpath.times[0]}, {zpath.times[-1]}]")
    z = float(np.interp(t, zpath.times, zpath.z))
    if z <= Z_FLOOR:
        raise SingularKernelError(f"Z={z:.3e} below floor at t={t}", (t, t))
    return -float(np.interp(t, zpath.times, zpath.z_prime)) / z


def named_intensity(window: LocalJumpWindow, model: ModelSpec, t: float) -> Tuple[float, str]:
    """Closed-form intensity for the model's kind, with the formula's name."""
    if model.stopping_rule != StoppingRule.FIRST_PASSAGE:
        raise ValidationError(f"no window intensity for the {model.stopping_rule.value} stopping rule")
    if model.kind == ModelKind.PLAIN_GBM:
        return intensity_deterministic_obs(window.x_s, model, t, window.S, window.regime_s), DETERMINISTIC_OBS
    if model.kind == ModelKind.REGIME_SWITCHING:
        return intensity_regime_switching(window, model, t), REGIME_SWITCHING
    return intensity_jump_diffusion(window, model, t), JUMP_DIFFUSION
