import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from bvp_service import BvpService
from exceptions import ContinuationStalledError, ParameterDomainError, ShotDivergedError
from models import (BvpOptions, DirichletData, IntegratorOptions, ShootingUnknowns,
                    SystemParams)
from preset_service import PresetService

TAN1 = float(np.tan(1.0))
RICCATI = SystemParams(m=0.0, lam=4.0, h2=1.0)
CLOSED = DirichletData(a=[0.0], b=[0.0])


@pytest.fixture
def presets():
    return PresetService()


@pytest.fixture
def solver():
    return BvpService()


def test_residual_vanishes_on_closed_riccati_solution(presets, solver):
    unknowns = ShootingUnknowns(L0=[2 * TAN1], xi0=2 * TAN1)
    residual = solver.shooting_residual(presets.circle(), RICCATI, CLOSED, 1.0, unknowns)
    assert residual.shape == (2,)
    assert np.max(np.abs(residual)) <= 1e-8


def test_zero_shot_solves_the_start_of_the_homotopy(presets, solver):
    dirichlet = DirichletData(a=[0.3], b=[1.0])
    params = SystemParams(m=0.0, lam=0.0, h2=1.0)
    residual = solver.shooting_residual(presets.torus(2), params, dirichlet, 0.0, ShootingUnknowns.zeros(1))
    assert residual == pytest.approx([0.0, 0.0], abs=1e-14)


def test_residual_carries_integral_constraint(presets, solver):
    dirichlet = DirichletData(a=[0.3], b=[1.0], u0=0.0, u1=0.5)
    params = SystemParams(m=0.0, lam=0.0, h2=1.0)
    residual = solver.shooting_residual(presets.torus(2), params, dirichlet, 1.0, ShootingUnknowns.zeros(1))
    # y(1) - b = -0.7 and 0 - c with c = 2 * 0.7 - 0.5
    assert residual == pytest.approx([-0.7, -0.9], abs=1e-12)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_p_outside_unit_interval(presets, solver, p):
    with pytest.raises(ParameterDomainError):
        solver.shooting_residual(presets.circle(), RICCATI, CLOSED, p, ShootingUnknowns.zeros(1))


def test_dimension_mismatch(presets, solver):
    two = DirichletData(a=[0.0, 0.0], b=[0.0, 0.0])
    with pytest.raises(ParameterDomainError):
        solver.shooting_residual(presets.sphere2(), RICCATI, two, 1.0, ShootingUnknowns.zeros(1))
    with pytest.raises(ParameterDomainError):
        solver.solve_dirichlet(presets.sphere2(), RICCATI, two)
    with pytest.raises(ParameterDomainError):
        solver.shooting_residual(presets.sphere2(), RICCATI, CLOSED, 1.0, ShootingUnknowns.zeros(2))


def test_diverging_shot_reports_blowup_time(presets, solver):
    with pytest.raises(ShotDivergedError) as excinfo:
        solver.shooting_residual(presets.circle(), RICCATI, CLOSED, 1.0, ShootingUnknowns(L0=[-5.0], xi0=-5.0))
    assert 0.0 < excinfo.value.t_blowup < 1.0
    assert excinfo.value.exit_code == 3


def test_trivial_data_at_zero_h2_needs_no_newton_step(presets, solver):
    params = SystemParams(m=1.0, lam=0.0, h2=0.0)
    solution = solver.solve_dirichlet(presets.sphere2(), params, CLOSED)
    assert solution.newton_iterations == 0
    assert solution.boundary_error == 0.0
    assert solution.integral_error == 0.0
    assert np.all(solution.unknowns.as_vector() == 0.0)


def test_sphere2_at_small_h2(presets, solver):
    params = SystemParams(m=1.0, lam=0.0, h2=0.01)
    dirichlet = DirichletData(a=[0.0], b=[0.1], u0=0.0, u1=0.0)
    solution = solver.solve_dirichlet(presets.sphere2(), params, dirichlet)
    assert solution.is_solved(1e-8)
    assert solution.h2_reached == pytest.approx(0.01)
    assert solution.potential_error <= 1e-7
    stages = [state.stage for state in solution.history]
    assert stages[0] == "p" and stages[-1] == "h2"
    assert all(state.converged for state in solution.history)
    assert solution.trajectory.u is not None


def test_limit_system_solution(solver):
    dirichlet = DirichletData(a=[0.0], b=[-0.2])
    solution = solver.solve_limit_system([1], 0.0, dirichlet)
    # L = xi = 1 / (t + C) with log(1 + 1/C) = -0.2
    assert solution.unknowns.L0[0] == pytest.approx(np.expm1(-0.2), abs=1e-7)
    assert solution.unknowns.xi0 == pytest.approx(np.expm1(-0.2), abs=1e-7)
    assert solution.trajectory.y[-1, 0] == pytest.approx(-0.2, abs=1e-8)
    assert solution.printed_D == pytest.approx([0.2])
    assert solution.to_summary()["D_printed"] == pytest.approx([0.2])


def test_solve_from_guess_polishes_nearby_unknowns(presets, solver):
    guess = ShootingUnknowns(L0=[2 * TAN1 + 1e-3], xi0=2 * TAN1 - 1e-3)
    solution = solver.solve_from_guess(presets.circle(), RICCATI, CLOSED, guess)
    assert solution.is_solved(1e-8)
    assert solution.history[0].stage == "guess"
    assert solution.unknowns.L0[0] == pytest.approx(2 * TAN1, abs=1e-4)


@pytest.mark.slow
def test_continuation_stalls_past_the_circle_threshold(presets):
    # circle with lambda h2 crossing pi^2 at h2 = 0.987
    options = BvpOptions(integrator=IntegratorOptions(rel_tol=1e-9, abs_tol=1e-9),
                         min_step=1e-2, newton_max_iter=20, bvp_tol=1e-6)
    params = SystemParams(m=0.0, lam=10.0, h2=1.0)
    with pytest.raises(ContinuationStalledError) as excinfo:
        BvpService(options).solve_dirichlet(presets.circle(), params, CLOSED)
    assert excinfo.value.stage == "h2"
    assert 0.5 < excinfo.value.h2_reached < 0.99
    assert excinfo.value.exit_code == 2


@pytest.mark.slow
@settings(max_examples=10, derandomize=True, deadline=None)
@given(st.floats(min_value=-0.2, max_value=0.2), st.floats(min_value=-0.2, max_value=0.2))
def test_sphere2_small_data_at_small_h2(a, b):
    params = SystemParams(m=1.0, lam=0.0, h2=0.01)
    dirichlet = DirichletData(a=[a], b=[b], u0=0.0, u1=0.0)
    solution = BvpService().solve_dirichlet(PresetService().sphere2(), params, dirichlet)
    assert solution.boundary_error <= 1e-8
    assert abs(solution.trajectory.integral_xi - dirichlet.c(np.ones(1))) <= 1e-8
    assert solution.potential_error <= 1e-7


def test_solution_survives_tighter_shots(presets):
    loose = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-10)
    tight = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-11)
    params = SystemParams(m=1.0, lam=0.0, h2=0.01)
    dirichlet = DirichletData(a=[0.0], b=[0.1], u0=0.0, u1=0.0)
    solution = BvpService(BvpOptions(integrator=loose)).solve_dirichlet(presets.sphere2(), params, dirichlet)
    residual = BvpService(BvpOptions(integrator=tight)).shooting_residual(
        presets.sphere2(), params, dirichlet, 1.0, solution.unknowns)
    assert abs(np.max(np.abs(residual[:-1])) - solution.boundary_error) < 10 * loose.rel_tol
