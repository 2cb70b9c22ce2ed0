"""Compensators on local jumping windows.

On a window (S, T] the Azema supermartingale is Z_t = f(X_S, V_2, t - S) P(tau > S | F_S)
and the G-compensator of 1{tau <= t} has

    density  -f_u / f + (h / f) * kappa(u) / P(T - S >= u)
    atoms    (h / f)(u_i) * p_i / P(T - S >= u_i)

with u = t - S, kappa and p_i the density and atoms of the law of T - S.
jeulin_yor_transform reaches the same measure as dA / Z_- from any sampled
(Z, A) pair.
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from ...lib.common_utils import setup_logging
from ...lib.errors import NumericalError, SingularKernelError
from .kernels import SurvivalKernel
from .windows import Atom, CompensatorPath, LocalJumpWindow, SupermartingalePath

logger = setup_logging(__name__)

F_FLOOR = 1e-12
Z_FLOOR = 1e-12
SKIPPED_MASS_WARNING = 1e-9
DEFAULT_KNOTS = 65
QUAD_TOLERANCE = 1e-10


def azema_z(window: LocalJumpWindow, kernel: SurvivalKernel, t: float) -> float:
    """Z_t for S <= t < T."""
    u = window.elapsed(t, closed_right=False)
    if window.survivor == 0:
        return 0.0
    value = kernel.f(window.x_s, window.v2, u) * window.survivor
    return min(1.0, max(0.0, value))


def _gap_density(window: LocalJumpWindow, kernel: SurvivalKernel, u: float, f: float) -> float:
    hazard = window.delay.hazard(u)
    if hazard == 0 or not kernel.has_gap:
        return 0.0
    return kernel.h(window.x_s, window.v2, u) / f * hazard


def eq5_density(window: LocalJumpWindow, kernel: SurvivalKernel, u: float) -> float:
    """Density of the window compensator at elapsed time u in (0, T - S]."""
    f = kernel.f(window.x_s, window.v2, u)
    if f <= F_FLOOR:
        raise SingularKernelError(
            f"f={f:.3e} below floor at u={u} in window ({window.S}, {window.T}]",
            (window.S + u, window.T),
        )
    drift = -kernel.f_u(window.x_s, window.v2, u) / f
    return max(0.0, drift) + _gap_density(window, kernel, u, f)


def eq5_atoms(window: LocalJumpWindow, kernel: SurvivalKernel) -> List[Atom]:
    """Atoms of the window compensator; only at u_i <= T - S."""
    atoms = []
    for u_i, p_i in window.delay.atoms:
        if u_i > window.length + 1e-15 or window.censored:
            continue
        f = kernel.f(window.x_s, window.v2, u_i)
        tail = window.delay.tail(u_i)
        if f <= F_FLOOR or tail <= 0:
            continue
        mass = kernel.h(window.x_s, window.v2, u_i) / f * p_i / tail
        if mass > 0:
            atoms.append((window.S + u_i, min(mass, 1.0)))
    return atoms


def _singular_run(mask: np.ndarray, times: np.ndarray) -> Optional[Tuple[float, float]]:
    """First run of two or more consecutive flagged knots, as a time interval."""
    run_start = None
    for k, flagged in enumerate(mask):
        if flagged and run_start is None:
            run_start = k
        elif not flagged and run_start is not None:
            if k - run_start >= 2:
                return float(times[run_start]), float(times[k - 1])
            run_start = None
    if run_start is not None and len(mask) - run_start >= 2:
        return float(times[run_start]), float(times[-1])
    return None


def general_compensator_eq5(window: LocalJumpWindow, kernel: SurvivalKernel,
                            n_knots: int = DEFAULT_KNOTS) -> CompensatorPath:
    """Compensator of 1{tau <= t} restricted to (S, T], sampled on n_knots knots.

    The drift part integrates exactly to -log f; the gap part is integrated by
    the trapezoid rule on the knots.
    """
    u = np.linspace(0.0, window.length, max(n_knots, 2))
    f = np.array([kernel.f(window.x_s, window.v2, v) for v in u])
    singular = f <= F_FLOOR
    run = _singular_run(singular, window.S + u)
    if run is not None:
        raise SingularKernelError(
            f"survival kernel below {F_FLOOR} on [{run[0]}, {run[1]}]", run
        )

    density = np.zeros_like(u)
    gap = np.zeros_like(u)
    for k, v in enumerate(u):
        if singular[k]:
            continue
        f_u = kernel.f_u(window.x_s, window.v2, v)
        gap[k] = _gap_density(window, kernel, v, f[k])
        density[k] = max(0.0, -f_u / f[k]) + gap[k]

    safe_f = np.where(singular, F_FLOOR, f)
    drift_cumulative = np.maximum(-np.log(safe_f), 0.0)
    gap_cumulative = integrate.cumulative_trapezoid(gap, u, initial=0.0)
    continuous = np.maximum.accumulate(drift_cumulative + gap_cumulative)
    return CompensatorPath(window.S + u, density, continuous, eq5_atoms(window, kernel))


def window_cumulative(window: LocalJumpWindow, kernel: SurvivalKernel, u: float) -> float:
    """Mass of the window compensator on (S, S + u], atoms included."""
    if u <= 0:
        return 0.0
    u = min(u, window.length)
    f = kernel.f(window.x_s, window.v2, u)
    if f <= F_FLOOR:
        raise SingularKernelError(f"f={f:.3e} below floor at u={u}", (window.S + u, window.T))
    value = -math.log(f)

    if kernel.has_gap and window.delay.rate > 0:
        def gap(v: float) -> float:
            fv = kernel.f(window.x_s, window.v2, v)
            return 0.0 if fv <= F_FLOOR else _gap_density(window, kernel, v, fv)

        result = integrate.quad(gap, 0.0, u, epsabs=QUAD_TOLERANCE, epsrel=1e-8,
                                limit=100, full_output=1)
        if len(result) > 3 and result[1] > 1e-7:
            raise NumericalError(f"gap quadrature on window ({window.S}, {window.T}]: {result[3]}",
                                 achieved_tolerance=result[1])
        value += result[0]

    value += sum(mass for time, mass in eq5_atoms(window, kernel) if time <= window.S + u)
    return max(value, 0.0)


def path_compensator(windows: Sequence[LocalJumpWindow], kernels: Sequence[SurvivalKernel],
                     tau: float = math.inf, n_knots: int = DEFAULT_KNOTS) -> CompensatorPath:
    """Join the window compensators of one path, frozen at tau."""
    pieces = [general_compensator_eq5(w, k, n_knots) for w, k in zip(windows, kernels)]
    return CompensatorPath.concatenate(pieces, tau)


def azema_path(window: LocalJumpWindow, kernel: SurvivalKernel,
               n_knots: int = DEFAULT_KNOTS) -> SupermartingalePath:
    """Z, Z_- and the F-compensator dA on [S, T] for one window.

    dA = survivor * (-f_u du + h kappa / P(T - S >= u) du), plus
    survivor * h p_i / P(T - S >= u_i) at the atoms.
    """
    u = np.linspace(0.0, window.length, max(n_knots, 2))
    c = window.survivor
    f = np.array([kernel.f(window.x_s, window.v2, v) for v in u])
    z = np.clip(c * f, 0.0, 1.0)

    da = np.zeros_like(u)
    for k, v in enumerate(u):
        drift = -kernel.f_u(window.x_s, window.v2, v)
        hazard = window.delay.hazard(v)
        gap = kernel.h(window.x_s, window.v2, v) * hazard if hazard and kernel.has_gap else 0.0
        da[k] = c * max(0.0, drift + gap)

    atoms = []
    for u_i, p_i in window.delay.atoms:
        if window.censored or u_i > window.length + 1e-15:
            continue
        tail = window.delay.tail(u_i)
        mass = c * kernel.h(window.x_s, window.v2, u_i) * p_i / tail if tail > 0 else 0.0
        if mass > 0:
            atoms.append((window.S + u_i, mass))
    return SupermartingalePath(window.S + u, z, z.copy(), da, atoms)


def jeulin_yor_transform(zpath: SupermartingalePath, tau: float = math.inf) -> CompensatorPath:
    """G-compensator int_0^{t ^ tau} dA_s / Z_{s-} of a sampled supermartingale.

    Increments where Z_- <= Z_FLOOR are skipped; their dA mass is reported in
    skipped_mass and logged when it is not negligible.
    """
    times, z_minus, da = zpath.times, zpath.z_minus, zpath.da_density
    if tau < times[-1]:
        keep = times < tau
        tau_z = float(np.interp(tau, times, z_minus))
        tau_da = float(np.interp(tau, times, da))
        times = np.append(times[keep], tau)
        z_minus = np.append(z_minus[keep], tau_z)
        da = np.append(da[keep], tau_da)

    live = z_minus > Z_FLOOR
    density = np.where(live, da / np.where(live, z_minus, 1.0), 0.0)
    skipped_density = np.where(live, 0.0, da)
    skipped = float(integrate.trapezoid(skipped_density, times)) if len(times) > 1 else 0.0

    atoms = []
    for time, mass in zpath.da_atoms:
        if time > tau:
            continue
        z_before = float(np.interp(time, zpath.times, zpath.z_minus))
        if z_before > Z_FLOOR:
            atoms.append((time, mass / z_before))
        else:
            skipped += mass

    if skipped > SKIPPED_MASS_WARNING:
        logger.warning(f"dA mass {skipped:.3e} charged {{Z_- <= {Z_FLOOR}}}; input path looks malformed")
    continuous = integrate.cumulative_trapezoid(density, times, initial=0.0)
    return CompensatorPath(times, density, continuous, atoms, tau, skipped)
