from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from checks import (CheckChain, FiniteStateCheck, GrowthBoundCheck, SignPreservationCheck,
                    XiMonotonicityCheck)
from dynamics import integrate
from models import HomSpaceSpec, PhaseState, SystemParams
from preset_service import PresetService

TAN1 = float(np.tan(1.0))


@pytest.fixture
def riccati():
    start = PhaseState(t=0.0, y=np.zeros(1), L=np.array([2 * TAN1]), xi=2 * TAN1)
    return integrate(PresetService().circle(), SystemParams(m=0.0, lam=4.0, h2=1.0), start, 1.0)


@pytest.fixture
def limit_run():
    start = PhaseState(t=0.0, y=np.zeros(1), L=np.array([0.2]), xi=0.1)
    return integrate(PresetService().sphere2(), SystemParams(m=0.5, lam=0.0, h2=0.0), start, 1.0)


@pytest.fixture
def cone():
    start = PhaseState(t=1.0, y=np.zeros(1), L=np.array([1 / np.sqrt(2)]), xi=1.0)
    return integrate(PresetService().torus(2), SystemParams(m=0.0, lam=0.0, h2=1.0), start, 0.01)


def test_default_chain_passes_on_riccati(riccati):
    chain = CheckChain()
    assert chain.get_summary_stats() == {}
    stats = chain.apply(riccati)
    assert chain.passed()
    assert stats["L_i sign preserved at h2 = 0"]["applicable"] == 0
    assert chain.get_summary_stats() == {"total_checks": 3, "applicable_checks": 2, "total_violations": 0}


def test_xi_monotonicity_flags_reversed_xi(riccati):
    check = XiMonotonicityCheck()
    assert check.violations(riccati) == 0
    assert check.violations(replace(riccati, xi=riccati.xi[::-1].copy())) > 0


def test_xi_monotonicity_skips_negative_source(riccati):
    flipped = replace(riccati, params=SystemParams(m=0.0, lam=-4.0, h2=1.0))
    assert not XiMonotonicityCheck().applies_to(flipped)


def test_sign_preservation_counts_flips(limit_run):
    check = SignPreservationCheck()
    assert check.applies_to(limit_run)
    assert check.violations(limit_run) == 0
    L = limit_run.L.copy()
    L[1] = -L[1]
    assert check.violations(replace(limit_run, L=L)) == 2


def test_finite_state_counts_bad_samples(riccati):
    xi = riccati.xi.copy()
    xi[2] = np.nan
    assert FiniteStateCheck().violations(riccati) == 0
    assert FiniteStateCheck().violations(replace(riccati, xi=xi)) == 1


def test_growth_bound_check(cone):
    assert GrowthBoundCheck().violations(cone) == 0
    assert GrowthBoundCheck(0.5).violations(cone) == len(cone)
    assert GrowthBoundCheck(0.5).get_description() == "|M'| <= 0.5 M^2"


def test_chain_without_defaults_reports_violations(riccati):
    chain = CheckChain([FiniteStateCheck()], add_default_checks=False)
    assert chain.get_active_checks() == ["finite state"]
    xi = riccati.xi.copy()
    xi[0] = np.inf
    chain.apply(replace(riccati, xi=xi))
    assert not chain.passed()
    assert chain.get_check_stats()["finite state"] == {"applicable": 1, "violations": 1,
                                                       "samples": len(riccati)}


@settings(max_examples=100, derandomize=True, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 1.0))
def test_xi_never_increases_with_nonnegative_source(y0, L0, xi0, m, lam, h2):
    traj = integrate(PresetService().sphere2(), SystemParams(m=m, lam=lam, h2=h2),
                     PhaseState(0.0, np.array([y0]), np.array([L0]), xi0), 1.0)
    check = XiMonotonicityCheck()
    assert check.applies_to(traj)
    assert check.violations(traj) == 0


@settings(max_examples=100, derandomize=True, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=2), st.floats(-0.5, 0.5), st.floats(0.0, 2.0))
def test_signs_of_L_survive_the_limit_system(L0, xi0, m):
    space = HomSpaceSpec(n=2, d=[2, 3], beta=[0.0, 0.0], label="two summands")
    traj = integrate(space, SystemParams(m=m, lam=0.0, h2=0.0),
                     PhaseState(0.0, np.zeros(2), np.array(L0), xi0), 1.0)
    check = SignPreservationCheck()
    assert check.applies_to(traj)
    assert check.violations(traj) == 0
    assert np.all(np.sign(traj.L[-1]) == np.sign(L0))
