from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from dynamics import (blowup_magnitude, integrate, mu_invariant, qe_residual,
                      reconstruct_u, time_reversed, vector_field)
from exceptions import MissingReconstructionError, ParameterDomainError
from models import IntegratorOptions, PhaseState, SystemParams, Termination
from preset_service import PresetService

TAN1 = float(np.tan(1.0))
RICCATI = SystemParams(m=0.0, lam=4.0, h2=1.0)
SPHERE_FLOW = SystemParams(m=1.0, lam=1.0, h2=1.0)


@pytest.fixture
def presets():
    return PresetService()


def riccati_start() -> PhaseState:
    return PhaseState(t=0.0, y=np.zeros(1), L=np.array([2 * TAN1]), xi=2 * TAN1)


@settings(max_examples=50, derandomize=True, deadline=None)
@given(st.floats(min_value=-10.0, max_value=10.0, allow_nan=False))
def test_circle_vector_field_reduces_to_riccati(a):
    circle = PresetService().circle()
    dy, dL, dxi = vector_field(circle, RICCATI, PhaseState(0.0, np.zeros(1), np.array([a]), a))
    assert dy == pytest.approx([a])
    assert dxi == pytest.approx(-a * a - 4.0)
    assert dL == pytest.approx([-a * a - 4.0])


def test_riccati_oracle(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0)
    assert traj.termination is Termination.REACHED_END
    assert traj.L[-1, 0] == pytest.approx(-2 * TAN1, abs=1e-6)
    assert traj.xi[-1] == pytest.approx(-2 * TAN1, abs=1e-6)
    assert traj.integral_xi == pytest.approx(0.0, abs=1e-8)


def test_riccati_oracle_with_rk45(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, IntegratorOptions(method="RK45"))
    assert traj.L[-1, 0] == pytest.approx(-2 * TAN1, abs=1e-5)


def test_tighter_tolerance_reduces_error(presets):
    errors = []
    for tol in (1e-6, 1e-12):
        opts = IntegratorOptions(rel_tol=tol, abs_tol=tol)
        traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, opts)
        errors.append(abs(traj.L[-1, 0] + 2 * TAN1))
    assert errors[1] < errors[0]


def test_error_follows_tolerance_over_halvings(presets):
    # RK45 with per-step control: global error ~ tol^(4/5)
    tolerances = 1e-5 * 0.5 ** np.arange(13)
    errors = []
    for tol in tolerances:
        opts = IntegratorOptions(rel_tol=tol, abs_tol=tol, method="RK45")
        traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, opts)
        errors.append(abs(traj.L[-1, 0] + 2 * TAN1))
    slope = np.polyfit(np.log(tolerances), np.log(errors), 1)[0]
    assert 0.5 <= slope <= 1.2
    assert errors[0] / errors[-1] >= 2.0 ** (12 * 0.5)


def test_backward_integration(presets):
    start = PhaseState(t=1.0, y=np.zeros(1), L=np.array([-2 * TAN1]), xi=-2 * TAN1)
    traj = integrate(presets.circle(), RICCATI, start, 0.0)
    assert traj.t_final == 0.0
    assert traj.L[-1, 0] == pytest.approx(2 * TAN1, abs=1e-6)


def test_dense_output_matches_closed_form(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0)
    for t in (0.1, 0.37, 0.5, 0.9):
        assert traj.state_at(t).L[0] == pytest.approx(2 * np.tan(1 - 2 * t), abs=1e-6)


def test_riccati_solves_unreduced_system(presets):
    circle = presets.circle()
    traj = integrate(circle, RICCATI, riccati_start(), 1.0, u0=0.0)
    first, second = qe_residual(circle, RICCATI, traj)
    assert first <= 1e-7
    assert np.all(second <= 1e-7)
    assert np.allclose(traj.u, 0.0, atol=1e-9)


def test_qe_residual_needs_u(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0)
    with pytest.raises(MissingReconstructionError):
        qe_residual(presets.circle(), RICCATI, traj)


def test_qe_residual_on_sphere2_with_potential(presets):
    sphere = presets.sphere2()
    traj = integrate(sphere, SPHERE_FLOW, PhaseState(0.0, np.zeros(1), np.array([0.3]), -0.2), 1.0, u0=0.0)
    first, second = qe_residual(sphere, SPHERE_FLOW, traj)
    assert first <= 1e-7
    assert second[0] <= 1e-7


def test_qe_residual_rejects_a_foreign_potential(presets):
    sphere = presets.sphere2()
    traj = integrate(sphere, SPHERE_FLOW, PhaseState(0.0, np.zeros(1), np.array([0.3]), -0.2), 1.0, u0=0.0)
    foreign = traj.with_u(traj.u + 5 * traj.t ** 2 + 3 * np.sin(7 * traj.t))
    first, second = qe_residual(sphere, SPHERE_FLOW, foreign)
    assert max(first, second[0]) > 1e-2


def test_qe_residual_sees_a_shifted_xi(presets):
    sphere = presets.sphere2()
    traj = integrate(sphere, SPHERE_FLOW, PhaseState(0.0, np.zeros(1), np.array([0.3]), -0.2), 1.0, u0=0.0)
    _, second = qe_residual(sphere, SPHERE_FLOW, replace(traj, xi=traj.xi + 1.0))
    assert second[0] >= np.min(np.abs(traj.L[:, 0]))


def test_qe_residual_needs_dense_output(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, u0=0.0)
    with pytest.raises(ParameterDomainError):
        qe_residual(presets.circle(), RICCATI, replace(traj, dense=None))


def test_blowup_detected_at_riccati_pole(presets):
    params = SystemParams(m=0.0, lam=-1.0, h2=1.0)
    start = PhaseState(t=0.0, y=np.zeros(1), L=np.array([-1.5]), xi=-1.5)
    traj = integrate(presets.circle(), params, start, 2.0)
    assert traj.termination is Termination.BLOW_UP_DETECTED
    pole = 0.5 * np.log(5.0)
    assert traj.blowup_time == pytest.approx(pole, abs=1e-6)
    assert traj.t_final < pole


def test_step_limit(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, IntegratorOptions(max_steps=3))
    assert traj.termination is Termination.STEP_LIMIT
    assert traj.accepted_steps == 3
    assert len(traj) == 4


def test_invalid_requests(presets):
    with pytest.raises(ParameterDomainError):
        integrate(presets.circle(), RICCATI, riccati_start(), 0.0)
    with pytest.raises(ParameterDomainError):
        integrate(presets.sphere2(), RICCATI,
                  PhaseState(0.0, np.zeros(2), np.zeros(2), 0.0), 1.0)
    with pytest.raises(ParameterDomainError):
        IntegratorOptions(method="Euler")


def test_cone_solution_on_torus(presets):
    torus = presets.torus(2)
    params = SystemParams(m=0.0, lam=0.0, h2=1.0)
    start = PhaseState(t=1.0, y=np.zeros(1), L=np.array([1 / np.sqrt(2)]), xi=1.0)
    traj = integrate(torus, params, start, 0.01, u0=0.0)
    assert traj.L[-1, 0] == pytest.approx(1 / (np.sqrt(2) * 0.01), rel=1e-7)
    assert traj.y[-1, 0] == pytest.approx(np.log(0.01) / np.sqrt(2), rel=1e-7)
    M = blowup_magnitude(torus, traj.y, traj.L, traj.xi)
    assert np.allclose(M * traj.t, np.sqrt(2), rtol=1e-7)
    # u' = tr(L) - xi = (sqrt(2) - 1) / t
    assert np.allclose(traj.u, (np.sqrt(2) - 1) * np.log(traj.t), atol=1e-7)


def test_reconstruct_u_shifts_with_start_value(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0)
    assert np.allclose(reconstruct_u(traj, 2.5), 2.5)


def test_mu_is_constant_on_sphere2(presets):
    params = SystemParams(m=1.0, lam=1.0, h2=1.0)
    start = PhaseState(t=0.0, y=np.zeros(1), L=np.zeros(1), xi=0.0)
    traj = integrate(presets.sphere2(), params, start, 1.0, u0=0.0)
    mu = mu_invariant(params, traj)
    assert np.max(np.abs(mu - mu[0])) <= 1e-6


def test_mu_vanishes_on_flat_constant_solution(presets):
    params = SystemParams(m=1.0, lam=0.0, h2=1.0)
    start = PhaseState(t=0.0, y=np.zeros(1), L=np.zeros(1), xi=0.0)
    traj = integrate(presets.torus(2), params, start, 1.0, u0=0.0)
    assert np.allclose(mu_invariant(params, traj), 0.0)


def test_mu_needs_positive_m(presets):
    traj = integrate(presets.circle(), RICCATI, riccati_start(), 1.0, u0=0.0)
    with pytest.raises(ParameterDomainError):
        mu_invariant(RICCATI, traj)


@settings(max_examples=100, derandomize=True, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.3), st.floats(min_value=-0.2, max_value=0.2))
def test_time_reversal_at_h2_zero(L0, xi_offset):
    sphere = PresetService().sphere2()
    params = SystemParams(m=0.5, lam=0.0, h2=0.0)
    forward = integrate(sphere, params, PhaseState(0.0, np.zeros(1), np.array([L0]), L0 + xi_offset), 1.0)
    end = forward.final
    backward = integrate(sphere, params, PhaseState(0.0, end.y, -end.L, -end.xi), 1.0)
    mirrored = time_reversed(forward)
    for index in range(len(mirrored)):
        state = backward.state_at(mirrored.t[index])
        assert state.L == pytest.approx(mirrored.L[index], abs=1e-8)
        assert state.xi == pytest.approx(mirrored.xi[index], abs=1e-8)
        assert state.y == pytest.approx(mirrored.y[index], abs=1e-8)
