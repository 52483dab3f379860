import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import h
from scipy.integrate import trapezoid
from scipy.spatial.transform import Rotation

from raman_upconv.propagation import MU_B
from raman_upconv.spin_levels import (
    DegenerateOptimumError,
    FieldConfig,
    GTensor,
    absorption_spectrum,
    bundled_g_tensors,
    level_diagram,
    line_positions,
    load_g_tensors,
    optimal_angle,
    overlap_23,
    splitting_slope,
    transition_amplitudes,
    zeeman_split,
)


@pytest.fixture(scope="module")
def site1():
    t = load_g_tensors(bundled_g_tensors())
    return t[(1, "ground")], t[(1, "excited")]


def random_tensor(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    return GTensor(R @ np.diag(rng.uniform(0.1, 15, 3)) @ R.T)


# g-tensor and field types

def test_gtensor_validation():
    with pytest.raises(ValueError):
        GTensor(np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValueError):
        GTensor(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        GTensor(np.eye(2))


def test_field_angle_wraps():
    assert FieldConfig(0.1, 370.0).angle == pytest.approx(10.0)
    assert FieldConfig(0.1, -90.0).angle == pytest.approx(270.0)
    with pytest.raises(ValueError):
        FieldConfig(-0.1, 0.0)


# Zeeman splitting

def test_zero_field_degenerate():
    assert zeeman_split(GTensor.isotropic(2.0), FieldConfig(0.0, 10.0)).splitting == 0.0


def test_isotropic_free_electron_splitting():
    f = zeeman_split(GTensor.isotropic(2.0), FieldConfig(0.175, 0.0)).splitting
    assert f == pytest.approx(4.90e9, abs=0.01e9)
    assert f == pytest.approx(2.0 * MU_B * 0.175 / h, rel=1e-12)


def test_splitting_linear_in_field_random_angles():
    g = random_tensor(0)
    rng = np.random.default_rng(1)
    for a in rng.uniform(0, 360, 10):
        s1 = zeeman_split(g, FieldConfig(0.1, a)).splitting
        s3 = zeeman_split(g, FieldConfig(0.3, a)).splitting
        assert s3 == pytest.approx(3 * s1, rel=1e-10)
        assert splitting_slope(g, a) * 0.3 == pytest.approx(s3, rel=1e-10)


def test_bundled_splittings_at_operating_field(site1):
    d = level_diagram(*site1, FieldConfig(0.178, 32.5))
    assert d.fg == pytest.approx(4.942e9, rel=1e-3)
    assert d.fe == pytest.approx(1.749e9, rel=1e-3)


# amplitudes

def test_proportional_tensors_no_spin_flip():
    g = random_tensor(2)
    ge = GTensor(0.4 * g.matrix)
    t = transition_amplitudes(level_diagram(g, ge, FieldConfig(0.2, 40.0)))
    assert abs(t.amplitude[0, 1]) < 1e-12 and abs(t.amplitude[1, 0]) < 1e-12


def test_amplitudes_orthonormal_random():
    for seed in range(100):
        rng = np.random.default_rng(seed + 100)
        d = level_diagram(random_tensor(seed), random_tensor(seed + 1000),
                          FieldConfig(rng.uniform(0.01, 1), rng.uniform(0, 360)))
        A = transition_amplitudes(d).amplitude
        np.testing.assert_allclose(A @ A.conj().T, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(np.sum(np.abs(A) ** 2, axis=1), 1.0, atol=1e-10)


def test_amplitudes_reject_non_orthonormal():
    d = level_diagram(GTensor.isotropic(2), GTensor.isotropic(1), FieldConfig(0.1))
    bad = type(d)(d.fg, d.fe, 2 * d.ground, d.excited, d.field)
    with pytest.raises(ValueError):
        transition_amplitudes(bad)


def test_line_detunings_from_table(site1):
    d = level_diagram(*site1, FieldConfig(0.178, 32.5))
    t = transition_amplitudes(d)
    pos = line_positions(d.fg, d.fe)
    dets = sorted(t.detuning.ravel())
    assert dets == pytest.approx(sorted(pos["strong"] + pos["weak"]), rel=1e-12)


def test_weak_strong_ratio_consistent_with_spectrum(site1):
    d = level_diagram(*site1, FieldConfig(0.178, 29.23))
    t = transition_amplitudes(d)
    # narrow lines so peak heights equal the line heights
    x = np.array([line_positions(d.fg, d.fe)["strong"][1], line_positions(d.fg, d.fe)["weak"][1]])
    a = absorption_spectrum(t, 1e7, 1.0, x)
    weak = t.strength[t.detuning > 0].min()
    strong = t.strength[t.detuning > 0].max()
    assert a[1] / a[0] == pytest.approx(weak / strong, rel=1e-9)


# optimum angle

def test_optimal_angle_bundled(site1):
    rep = optimal_angle(*site1)
    assert rep.angle == pytest.approx(29.0, abs=1.0)
    assert rep.overlap == pytest.approx(0.4376, abs=1e-3)
    assert len(rep.local_maxima) >= 2


def test_optimal_angle_stable_under_refinement(site1):
    a = optimal_angle(*site1, step=0.5).angle
    b = optimal_angle(*site1, step=0.05).angle
    assert abs(a - b) <= 0.1


def test_optimal_angle_proportional_raises():
    g = random_tensor(5)
    with pytest.raises(DegenerateOptimumError):
        optimal_angle(g, GTensor(2.5 * g.matrix))


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 180))
def test_overlap_period_180(site1, a):
    assert overlap_23(*site1, a) == pytest.approx(overlap_23(*site1, a + 180.0), abs=1e-12)


# line positions

def test_line_positions_reference():
    p = line_positions(5.0e9, 1.8e9)
    assert p["strong"] == pytest.approx((-1.6e9, 1.6e9), abs=1.0)
    assert p["weak"] == pytest.approx((-3.4e9, 3.4e9), abs=1.0)


def test_line_positions_degenerate_cases():
    p = line_positions(4e9, 0.0)
    assert p["strong"] == p["weak"] == (-2e9, 2e9)
    assert line_positions(3e9, 3e9)["strong"] == (0.0, 0.0)
    with pytest.raises(ValueError):
        line_positions(-1.0, 0.0)


# absorption spectrum

def test_spectrum_fwhm():
    t = transition_amplitudes(level_diagram(GTensor.isotropic(2), GTensor.isotropic(1), FieldConfig(0.0)))
    x = np.linspace(-3e9, 3e9, 600001)
    a = absorption_spectrum(t, 1.06e9, 1.0, x)
    above = x[a >= 0.5 * a.max()]
    assert above[-1] - above[0] == pytest.approx(2.50e9, abs=0.01e9)


def test_spectrum_zero_field_single_line(site1):
    t = transition_amplitudes(level_diagram(*site1, FieldConfig(0.0)))
    x = np.linspace(-5e9, 5e9, 2001)
    a = absorption_spectrum(t, 1e9, 20.0, x)
    assert x[np.argmax(a)] == 0.0
    assert a.max() == pytest.approx(20.0, rel=1e-12)


def test_spectrum_area_conserved(site1):
    x = np.linspace(-15e9, 15e9, 60001)
    areas = []
    for B in (0.0, 0.178):
        t = transition_amplitudes(level_diagram(*site1, FieldConfig(B, 32.5)))
        areas.append(trapezoid(absorption_spectrum(t, 1e9, 20.0, x), x))
    assert areas[1] == pytest.approx(areas[0], rel=1e-6)
    assert areas[0] == pytest.approx(20.0 * math.sqrt(2 * math.pi) * 1e9, rel=1e-9)


# data file

def test_loader_round_trip(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n[site 2 ground]\n1 0 0\n0 2 0 # inline\n0 0 3\n")
    t = load_g_tensors(p)
    np.testing.assert_array_equal(t[(2, "ground")].matrix, np.diag([1.0, 2, 3]))


@pytest.mark.parametrize("text", ["1 2 3\n", "[site 1 ground]\n1 2\n0 1 0\n0 0 1\n",
                                  "[site 1 ground]\n1 0 0\n0 1 0\n", "# nothing\n"])
def test_loader_errors(tmp_path, text):
    p = tmp_path / "g.txt"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_g_tensors(p)
