"""Survival kernels f(x, z, u), their u-derivative and the gap h(x, z, u).

f(x, z, u) = P_x(tau > u | g(V_1, z) > u): survival over u units of window time
given that no new information arrived. h(x, z, u) = f(x, z, u-) - P_x(tau > u |
g(V_1, z) = u): the extra default probability carried by the information time
itself (a price jump that lands below the barrier, say).
"""
import math
from abc import ABC, abstractmethod

import numpy as np

from ...lib.errors import ValidationError
from ..kernels.gaussian_kernels import (BarrierCoord, DriftParams, gbm_survival, gbm_survival_dt,
                                        phi_joint_levels)
from ..models.model_spec import GeneratorMatrix, JumpLaw, ModelKind, ModelSpec, StoppingRule
from .windows import LocalJumpWindow


class SurvivalKernel(ABC):
    """f, f_u and h of one frozen information state."""

    @abstractmethod
    def f(self, x: float, z: float, u: float) -> float:
        ...

    @abstractmethod
    def f_u(self, x: float, z: float, u: float) -> float:
        ...

    def h(self, x: float, z: float, u: float) -> float:
        return 0.0

    @property
    def has_gap(self) -> bool:
        """Whether h can be nonzero."""
        return False


class ExponentialKernel(SurvivalKernel):
    """f = exp(-rate u), a constant-hazard reference kernel."""

    def __init__(self, rate: float):
        if rate < 0:
            raise ValidationError(f"exponential kernel rate must be >= 0, got {rate}")
        self.rate = rate

    def f(self, x, z, u):
        return math.exp(-self.rate * max(u, 0.0))

    def f_u(self, x, z, u):
        return -self.rate * self.f(x, z, u)


class GbmSurvivalKernel(SurvivalKernel):
    """Barrier survival of a GBM with frozen (mu, sigma); h = 0."""

    def __init__(self, barrier: float, mu: float, sigma: float):
        DriftParams.from_gbm(mu, sigma)
        self.barrier = barrier
        self.mu = mu
        self.sigma = sigma

    def f(self, x, z, u):
        return gbm_survival(x, self.barrier, self.mu, self.sigma, max(u, 0.0))

    def f_u(self, x, z, u):
        return gbm_survival_dt(x, self.barrier, self.mu, self.sigma, max(u, 0.0))


class JumpDiffusionKernel(GbmSurvivalKernel):
    """GBM survival between regime jumps, plus the default risk of the price jump
    that comes with a regime jump.

    A jump to regime j multiplies the price by xi ~ F_j; for u < z

        h(x, z, u) = sum_j (q_ij / q_i) E_{F_j}[ phi(eta, u, y, y - log(xi) / sigma) ]

    and h vanishes at the deterministic observation time u = z.
    """

    def __init__(self, barrier: float, mu: float, sigma: float, generator: GeneratorMatrix,
                 regime: int, jump_laws):
        super().__init__(barrier, mu, sigma)
        self.generator = generator
        self.regime = regime
        self.jump_laws = tuple(jump_laws)
        self.eta = DriftParams.from_gbm(mu, sigma).eta

    @property
    def has_gap(self) -> bool:
        return self.generator.exit_rate(self.regime) > 0

    def jump_default_probability(self, x: float, u: float, law: JumpLaw) -> float:
        """P(no crossing on (0, u), then xi X_u <= barrier) for xi ~ law."""
        if x <= self.barrier:
            return 0.0
        y = BarrierCoord.from_prices(x, self.barrier, self.sigma).y

        def below_after_jump(xi: np.ndarray) -> np.ndarray:
            return phi_joint_levels(self.eta, u, y, y - np.log(xi) / self.sigma)

        return law.expectation(below_after_jump)

    def h(self, x, z, u):
        if u < 0 or u >= z or not self.has_gap:
            return 0.0
        weights = self.generator.jump_probabilities(self.regime)
        if u == 0:
            # right limit: the jump alone takes the price to the barrier
            threshold = self.barrier / x
            return float(sum(w * self.jump_laws[j].cdf(threshold) for j, w in enumerate(weights) if w > 0))
        return float(sum(
            w * self.jump_default_probability(x, u, self.jump_laws[j])
            for j, w in enumerate(weights) if w > 0
        ))


def kernel_for_regime(model: ModelSpec, regime: int) -> SurvivalKernel:
    """Survival kernel of the information state frozen in `regime`."""
    if model.stopping_rule != StoppingRule.FIRST_PASSAGE:
        raise ValidationError(
            f"{model.stopping_rule.value} stopping times are compensated by the chain kernel, "
            f"not by a window survival kernel"
        )
    mu, sigma = model.mu[regime], model.sigma[regime]
    if model.kind == ModelKind.JUMP_DIFFUSION:
        return JumpDiffusionKernel(model.barrier, mu, sigma, model.generator, regime, model.jump_laws)
    return GbmSurvivalKernel(model.barrier, mu, sigma)


def kernel_for_window(window: LocalJumpWindow, model: ModelSpec) -> SurvivalKernel:
    return kernel_for_regime(model, window.regime_s)
