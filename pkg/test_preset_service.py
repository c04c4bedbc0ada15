import numpy as np
import pytest

from exceptions import ConfigError
from preset_service import PresetService


@pytest.fixture
def presets():
    return PresetService()


def test_sphere2_constants(presets):
    entry = presets.describe(presets.get("sphere2"), "sphere2")
    assert entry["n"] == 1
    assert entry["d"] == [2]
    assert entry["beta"] == [1.0]
    assert entry["gamma"] == 0
    assert entry["summands_at_least_two_dimensional"] is True
    assert entry["degenerate"] is False


def test_circle_is_flagged_low_dimensional(presets):
    entry = presets.describe(presets.circle(), "circle")
    assert entry["d"] == [1]
    assert entry["summands_at_least_two_dimensional"] is False


def test_parameterised_torus_is_degenerate(presets):
    torus = presets.get("torus(3)")
    assert list(torus.d) == [3]
    assert torus.is_degenerate
    assert torus.label == "flat torus T^3"


def test_sphere2_accepts_normalisation(presets):
    assert presets.sphere2(2.0).beta[0] == 2.0
    assert presets.get("sphere2").beta[0] == 1.0


def test_presets_are_cached(presets):
    assert presets.get("torus(2)") is presets.torus(2)


@pytest.mark.parametrize("name", ["sphere3", "torus(2.5)", "torus(0)", "circle(2)", "torus(x)", "(("])
def test_bad_preset_names(presets, name):
    with pytest.raises(ConfigError):
        presets.get(name)


def test_list_presets(presets):
    catalog = presets.list_presets(["torus(3)"])
    assert [entry["name"] for entry in catalog] == ["circle", "sphere2", "torus", "torus(3)"]
    assert np.all([isinstance(entry["monotypic_asserted"], bool) for entry in catalog])
