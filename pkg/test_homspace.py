import logging

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from exceptions import DegenerateSpaceError, DomainOverflowError, SpaceValidationError
from homspace import (big_R, big_R_gradient, curvature_ratios, estimate_ricci_bounds,
                      gamma_asymmetry, ricci_jacobian, ricci_map)
from models import HomSpaceSpec
from preset_service import PresetService

REPS = 100

coordinates = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


def three_summand_space() -> HomSpaceSpec:
    """Symmetric gamma on three summands, in the style of a full flag manifold"""
    gamma = np.zeros((3, 3, 3))
    for i, k, l in [(0, 1, 2), (0, 2, 1), (1, 2, 0)]:
        gamma[i, k, l] = gamma[k, i, l] = 1.0
    return HomSpaceSpec(n=3, d=[2, 2, 2], beta=[1.0, 0.5, 2.0], gamma=gamma, label="three summands")


def central_difference(fn, y, h=1e-6):
    columns = []
    for j in range(len(y)):
        step = np.zeros(len(y))
        step[j] = h
        columns.append((np.asarray(fn(y + step)) - np.asarray(fn(y - step))) / (2 * h))
    return np.stack(columns, axis=-1)


def test_sphere2_ricci_at_origin():
    sphere = PresetService().sphere2()
    assert ricci_map(sphere, [0.0]) == pytest.approx([0.5])
    assert big_R(sphere, [0.0]) == pytest.approx(1.0)


def test_big_R_is_scalar_for_a_single_point():
    assert isinstance(big_R(three_summand_space(), np.zeros(3)), float)


@settings(max_examples=REPS, derandomize=True, deadline=None)
@given(st.lists(coordinates, min_size=3, max_size=3))
def test_ricci_jacobian_matches_finite_differences(y):
    space = three_summand_space()
    y = np.array(y)
    numeric = central_difference(lambda point: ricci_map(space, point), y)
    scale = max(1.0, np.max(np.abs(numeric)))
    assert np.max(np.abs(ricci_jacobian(space, y) - numeric)) <= 1e-6 * scale


@settings(max_examples=REPS, derandomize=True, deadline=None)
@given(st.lists(coordinates, min_size=3, max_size=3))
def test_big_R_gradient_matches_finite_differences(y):
    space = three_summand_space()
    y = np.array(y)
    numeric = central_difference(lambda point: big_R(space, point), y)
    scale = max(1.0, np.max(np.abs(numeric)))
    assert np.max(np.abs(big_R_gradient(space, y) - numeric)) <= 1e-6 * scale


@settings(max_examples=REPS, derandomize=True, deadline=None)
@given(st.lists(coordinates, min_size=3, max_size=3), coordinates)
def test_common_shift_scales_ricci_and_majorant(y, s):
    space = three_summand_space()
    y = np.array(y)
    scale = np.exp(-2.0 * s)
    slack = 1e-12 * scale * big_R(space, y)
    assert np.max(np.abs(ricci_map(space, y + s) - scale * ricci_map(space, y))) <= slack
    assert big_R(space, y + s) == pytest.approx(scale * big_R(space, y), rel=1e-12)


@settings(max_examples=REPS, derandomize=True, deadline=None)
@given(st.lists(coordinates, min_size=3, max_size=3))
def test_majorant_bounds_every_component(y):
    space = three_summand_space()
    y = np.array(y)
    assert np.all(np.abs(ricci_map(space, y)) <= big_R(space, y) * (1 + 1e-12))


def test_two_summand_bound_matches_grid_scan():
    space = HomSpaceSpec(n=2, d=[2, 3], beta=[1.0, 1.0], gamma=np.full((2, 2, 2), 0.5), label="all gamma")
    radius = 3.0
    estimates = estimate_ricci_bounds(space, samples=20000, box_radius=radius, seed=2)
    assert np.isfinite(estimates.c1)

    axis = np.linspace(-radius, radius, 1000)
    grid_max = 0.0
    for row in axis:
        points = np.column_stack([np.full(len(axis), row), axis])
        r_ratio, _ = curvature_ratios(space, points)
        grid_max = max(grid_max, float(r_ratio.max()))
    assert estimates.c1 == pytest.approx(grid_max, rel=1e-3)


def test_batch_matches_pointwise():
    space = three_summand_space()
    batch = np.random.default_rng(3).uniform(-1.0, 1.0, size=(7, 3))
    assert np.allclose(ricci_map(space, batch), [ricci_map(space, row) for row in batch])
    assert np.allclose(big_R(space, batch), [big_R(space, row) for row in batch])
    assert np.allclose(ricci_jacobian(space, batch), [ricci_jacobian(space, row) for row in batch])


def test_overflow_bound_reports_index():
    space = three_summand_space()
    with pytest.raises(DomainOverflowError) as excinfo:
        ricci_map(space, [0.0, 301.0, 0.0])
    assert excinfo.value.index == 1
    assert excinfo.value.exit_code == 3


def test_gamma_exponent_overflow_raises():
    gamma = np.zeros((2, 2, 2))
    gamma[0, 1, 1] = gamma[1, 0, 1] = 1.0
    space = HomSpaceSpec(n=2, d=[2, 2], beta=[0.0, 0.0], gamma=gamma)
    with pytest.raises(DomainOverflowError):
        big_R(space, [200.0, -200.0])


def test_gamma_asymmetry_warns(caplog):
    gamma = np.zeros((2, 2, 2))
    gamma[0, 1, 1] = 1.0
    space = HomSpaceSpec(n=2, d=[1, 1], beta=[1.0, 1.0], gamma=gamma, label="lopsided")
    with caplog.at_level(logging.WARNING):
        assert gamma_asymmetry(space) == pytest.approx(1.0)
    assert "[homspace]" in caplog.text
    assert gamma_asymmetry(three_summand_space()) == 0.0


def test_sphere2_bounds_are_exact():
    estimates = estimate_ricci_bounds(PresetService().sphere2(), samples=500, seed=11)
    assert estimates.c1 == pytest.approx(0.5)
    assert estimates.c3 == pytest.approx(0.5)
    assert estimates.c2 == pytest.approx(1.0)


def test_bounds_are_deterministic_for_a_seed():
    space = three_summand_space()
    first = estimate_ricci_bounds(space, samples=300, seed=5)
    second = estimate_ricci_bounds(space, samples=300, seed=5)
    assert first == second
    assert first.c3 <= first.c1


def test_bounds_reject_degenerate_space():
    with pytest.raises(DegenerateSpaceError):
        estimate_ricci_bounds(PresetService().torus(3))


def test_curvature_ratios_shapes():
    r_ratio, dr_ratio = curvature_ratios(three_summand_space(), np.zeros((4, 3)))
    assert r_ratio.shape == (4,)
    assert dr_ratio.shape == (4,)


def test_spec_validation():
    with pytest.raises(SpaceValidationError):
        HomSpaceSpec(n=2, d=[1], beta=[0.0, 0.0])
    with pytest.raises(SpaceValidationError):
        HomSpaceSpec(n=1, d=[2], beta=[-1.0])
    with pytest.raises(SpaceValidationError):
        HomSpaceSpec(n=1, d=[0], beta=[1.0])


def test_spec_arrays_are_read_only():
    space = three_summand_space()
    with pytest.raises(ValueError):
        space.beta[0] = 3.0


def test_from_config_rejects_duplicate_gamma():
    block = {"n": 2, "d": [1, 1], "beta": [1.0, 1.0], "gamma": [[0, 1, 1, 1.0], [0, 1, 1, 2.0]]}
    with pytest.raises(SpaceValidationError) as excinfo:
        HomSpaceSpec.from_config(block)
    assert excinfo.value.key == "space.gamma[1]"


def test_config_round_trip_preserves_constants():
    space = three_summand_space()
    assert HomSpaceSpec.from_config(space.to_config()).same_as(space)
