"""Reduced first-order quasi-Einstein system and its adaptive integration.

The phase state is (y, L = y', xi) with weighted traces tr(X) = sum_i d_i X_i.
The integrator carries two extra quadrature states, the running integrals of
xi and of u' = tr(L) - xi, so that boundary constraints and the potential u
are available at integrator accuracy.
"""
import logging
from dataclasses import replace
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import DOP853, RK45, OdeSolution
from scipy.optimize import brentq

from exceptions import (DomainOverflowError, MissingReconstructionError,
                        ParameterDomainError)
from homspace import big_R, ricci_map
from models import (HomSpaceSpec, IntegratorOptions, PhaseState, SystemParams,
                    Termination, Trajectory)

logger = logging.getLogger(__name__)

_STEPPERS = {"DOP853": DOP853, "RK45": RK45}


def vector_field(space: HomSpaceSpec, params: SystemParams,
                 state: PhaseState) -> Tuple[np.ndarray, np.ndarray, float]:
    """Right-hand side (y', L', xi') of the reduced system"""
    y = np.asarray(state.y, dtype=float)
    L = np.asarray(state.L, dtype=float)
    xi = float(state.xi)
    tr_L = float(L @ space.d)
    tr_L2 = float((L * L) @ space.d)

    dxi = -tr_L2 - params.m * (tr_L - xi) ** 2 - params.h2 * params.lam
    dL = -xi * L - params.h2 * params.lam
    if params.h2 != 0.0:
        dL = dL + params.h2 * ricci_map(space, y)
    return L.copy(), dL, dxi


def blowup_magnitude(space: HomSpaceSpec, y, L, xi):
    """M = sqrt(xi^2 + tr(L^2) + R(y)); accepts single states or sample arrays"""
    L = np.asarray(L, dtype=float)
    return np.sqrt(np.asarray(xi, dtype=float) ** 2 + (L * L) @ space.d + big_R(space, y))


def _augmented_rhs(space: HomSpaceSpec, params: SystemParams) -> Callable[[float, np.ndarray], np.ndarray]:
    n = space.n

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        try:
            dy, dL, dxi = vector_field(space, params, PhaseState(t, z[:n], z[n:2 * n], z[2 * n]))
        except DomainOverflowError:
            # infinite slope forces the stepper to reject and shrink
            return np.full_like(z, np.inf)
        du = float(z[n:2 * n] @ space.d) - z[2 * n]
        return np.concatenate([dy, dL, [dxi, z[2 * n], du]])

    return rhs


def _magnitude_of(space: HomSpaceSpec, z: np.ndarray) -> float:
    n = space.n
    if not np.all(np.isfinite(z)):
        return np.inf
    try:
        return float(blowup_magnitude(space, z[:n], z[n:2 * n], z[2 * n]))
    except DomainOverflowError:
        return np.inf


def _locate_crossing(space: HomSpaceSpec, interpolant, t_old: float, t_new: float,
                     threshold: float) -> float:
    """Time at which M crosses the threshold inside the last step"""
    def excess(t: float) -> float:
        return min(_magnitude_of(space, interpolant(t)), 1e300) - threshold

    if not excess(t_old) < 0:
        return t_old
    try:
        return float(brentq(excess, t_old, t_new, xtol=1e-15 * max(1.0, abs(t_new)), maxiter=200))
    except ValueError:
        return t_new


def integrate(space: HomSpaceSpec, params: SystemParams, initial: PhaseState, t_end: float,
              opts: Optional[IntegratorOptions] = None, u0: Optional[float] = None) -> Trajectory:
    """Integrate from ``initial`` towards ``t_end`` in either direction

    Stops early on blow-up (M above the threshold after an accepted step), on
    step underflow (step below min_step times the interval length, or a failed
    stepper) or when max_steps accepted steps have been taken. When ``u0`` is
    given the potential is reconstructed along the way.
    """
    opts = opts or IntegratorOptions()
    if initial.n != space.n:
        raise ParameterDomainError(f"initial state has dimension {initial.n}, space has {space.n}")
    if not initial.is_finite():
        raise ParameterDomainError("initial state must be finite")
    if not np.isfinite(t_end) or t_end == initial.t:
        raise ParameterDomainError(f"t_end must be finite and differ from the initial time, got {t_end}")

    n = space.n
    z0 = np.concatenate([np.asarray(initial.y, dtype=float), np.asarray(initial.L, dtype=float),
                         [float(initial.xi), 0.0, 0.0]])
    initial_magnitude = _magnitude_of(space, z0)
    if not np.isfinite(initial_magnitude):
        raise DomainOverflowError(int(np.argmax(np.abs(initial.y))), float(np.max(np.abs(initial.y))))

    span = abs(t_end - initial.t)
    min_step = opts.min_step * span
    stepper = _STEPPERS[opts.method](_augmented_rhs(space, params), float(initial.t), z0, float(t_end),
                                     rtol=opts.rel_tol, atol=opts.abs_tol, first_step=opts.first_step)

    times = [float(initial.t)]
    states = [z0]
    interpolants = []
    rejected = 0
    blowup_time = None
    termination = Termination.REACHED_END if initial_magnitude <= opts.blowup_threshold \
        else Termination.BLOW_UP_DETECTED

    while termination is Termination.REACHED_END and stepper.status == "running":
        if len(interpolants) >= opts.max_steps:
            termination = Termination.STEP_LIMIT
            break

        evaluations_before = stepper.nfev
        stepper.step()
        if stepper.status == "failed":
            termination = Termination.STEP_UNDERFLOW
            break

        attempts = (stepper.nfev - evaluations_before) // stepper.n_stages
        rejected += max(0, attempts - 1)
        interpolant = stepper.dense_output()
        interpolants.append(interpolant)
        times.append(float(stepper.t))
        states.append(stepper.y.copy())

        magnitude = _magnitude_of(space, stepper.y)
        if magnitude > opts.blowup_threshold:
            termination = Termination.BLOW_UP_DETECTED
            blowup_time = _locate_crossing(space, interpolant, stepper.t_old, stepper.t,
                                           opts.blowup_threshold)
        elif stepper.status == "running" and abs(stepper.t - stepper.t_old) < min_step:
            termination = Termination.STEP_UNDERFLOW

    z = np.array(states)
    trajectory = Trajectory(
        space=space, params=params, t=np.array(times),
        y=z[:, :n], L=z[:, n:2 * n], xi=z[:, 2 * n],
        int_xi=z[:, 2 * n + 1], int_du=z[:, 2 * n + 2],
        accepted_steps=len(interpolants), rejected_steps=rejected, termination=termination,
        dense=OdeSolution(times, interpolants) if interpolants else None,
        blowup_time=blowup_time,
    )
    logger.debug("[dynamics] %s at t=%.12g after %d accepted / %d rejected steps",
                 termination.value, trajectory.t_final, trajectory.accepted_steps, rejected)

    if u0 is not None:
        trajectory = trajectory.with_u(reconstruct_u(trajectory, u0))
    return trajectory


def reconstruct_u(traj: Trajectory, u0: float) -> np.ndarray:
    """Potential u at every sample from the carried quadrature of tr(L) - xi"""
    if len(traj) == 0:
        raise ParameterDomainError("cannot reconstruct u on an empty trajectory")
    return float(u0) + (traj.int_du - traj.int_du[0])


_STENCIL_OFFSETS = np.arange(-2.0, 3.0)
_FIRST_DERIVATIVE = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_STENCIL_FRACTION = 1e-2


def _dense_derivatives(traj: Trajectory, u: np.ndarray, d: np.ndarray):
    """L', the drift of u against the carried quadrature, and u'' at every sample

    Each sample is differentiated on a step it bounds with a five-point stencil
    of width a small fraction of the step. The drift is the per-step slope of
    the supplied u minus that of the quadrature of tr(L) - xi, so it vanishes
    when u belongs to the trajectory.
    """
    n = traj.n
    interpolants = traj.dense.interpolants
    count = len(traj)
    dL = np.empty((count, n))
    drift = np.empty(count)
    ddu = np.empty(count)

    for index, t in enumerate(traj.t):
        j = min(index, len(interpolants) - 1)
        step = traj.t[j + 1] - traj.t[j]
        delta = _STENCIL_FRACTION * abs(step)
        window = interpolants[j](t + delta * _STENCIL_OFFSETS)

        dL[index] = window[n:2 * n] @ _FIRST_DERIVATIVE / delta
        drift[index] = ((u[j + 1] - u[j]) - (traj.int_du[j + 1] - traj.int_du[j])) / step
        integrand = d @ window[n:2 * n] - window[2 * n]
        ddu[index] = integrand @ _FIRST_DERIVATIVE / delta
    return dL, drift, ddu


def qe_residual(space: HomSpaceSpec, params: SystemParams, traj: Trajectory) -> Tuple[float, np.ndarray]:
    """Largest residuals of the unreduced second-order system along the samples

    y, L and xi are read from the samples, L' and u'' from differentiating the
    dense output. u' is tr(L) - xi plus the drift of the reconstructed
    potential ``traj.u``, so the check fails when u or xi do not belong to the
    trajectory.
    """
    if traj.u is None:
        raise MissingReconstructionError("qe_residual needs u; call reconstruct_u or integrate with u0")
    if traj.dense is None or len(traj) < 2:
        raise ParameterDomainError("qe_residual needs the dense output of an integrated trajectory")
    dL, drift, ddu = _dense_derivatives(traj, np.asarray(traj.u, dtype=float), space.d)

    L = traj.L
    tr_L = L @ space.d
    du = tr_L - traj.xi + drift
    h2_lam = params.h2 * params.lam

    first = -(dL + L * L) @ space.d + ddu - params.m * du ** 2 - h2_lam
    ricci = np.zeros_like(L) if params.h2 == 0.0 else params.h2 * ricci_map(space, traj.y)
    second = ricci - L * tr_L[:, None] + du[:, None] * L - dL - h2_lam
    return float(np.max(np.abs(first))), np.max(np.abs(second), axis=0)


def mu_invariant(params: SystemParams, traj: Trajectory, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Warped-product Einstein constant mu at every sample; constant along exact solutions"""
    if params.m <= 0:
        raise ParameterDomainError("mu is defined only for m > 0")
    if params.h2 <= 0:
        raise ParameterDomainError("mu is defined only for h2 > 0")
    u = traj.u if u is None else np.asarray(u, dtype=float)
    if u is None:
        raise MissingReconstructionError("mu_invariant needs u; call reconstruct_u first")

    space = traj.space
    m = params.m
    L = traj.L
    tr_L = L @ space.d
    du = tr_L - traj.xi
    dL = np.array([vector_field(space, params, state)[1] for state in traj.samples])
    ddu = params.h2 * params.lam + m * du ** 2 + (dL + L * L) @ space.d

    v = np.exp(-m * u)
    dv = -m * du * v
    ddv = (m * m * du ** 2 - m * ddu) * v
    return (v * ddv + v * dv * tr_L + (1.0 / m - 1.0) * dv ** 2) / params.h2 + params.lam * v ** 2


def time_reversed(traj: Trajectory) -> Trajectory:
    """Samples of t -> (-L, -xi) reflected about the midpoint of the trajectory's range"""
    mirror = traj.t_start + traj.t_final
    return replace(
        traj,
        t=(mirror - traj.t)[::-1],
        y=traj.y[::-1].copy(),
        L=-traj.L[::-1],
        xi=-traj.xi[::-1],
        int_xi=traj.int_xi[::-1] - traj.int_xi[-1],
        int_du=traj.int_du[::-1] - traj.int_du[-1],
        dense=None,
        u=None if traj.u is None else traj.u[::-1].copy(),
        blowup_time=None,
    )
