import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gravem.algebra import PLUS, X_HAT, Y_HAT, Z_HAT
from gravem.equivalence import (
    assemble_gw,
    check_equivalence,
    decompose_helicity,
    equivalence_report,
    factor_sum,
    frames_along,
    helicity_frame,
    phase_series,
    propagate_direct,
    propagate_factored,
    relative_deviation,
    wave_on_ray,
)
from gravem.errors import GridMismatch, KappaOutOfRange, NonNullMomentum, NonSymmetricInput, NonTransverseInput
from gravem.spacetime import Minkowski, SchwarzschildIsotropic, WeakField
from gravem.transport import IntegratorControls, NullRay, integrate_null_geodesic, make_null_ray, \
    ray_from_impact_parameter

SQ2 = math.sqrt(2.0)


def spatial(v3):
    out = np.zeros(4, dtype=complex)
    out[1:] = v3
    return out


def embed(t3):
    out = np.zeros((4, 4), dtype=complex)
    out[1:, 1:] = t3
    return out


def same_up_to_phase(a, b, tol=1e-12):
    return abs(abs(np.vdot(a, b)) - np.linalg.norm(a) * np.linalg.norm(b)) < tol


@pytest.fixture(scope="module")
def flat_path():
    m = Minkowski()
    path = integrate_null_geodesic(m, NullRay([0, 0, 0, 0], [2.0, 0, 0, 2.0]), 5.0, IntegratorControls(step=0.05))
    return m, path


@pytest.fixture(scope="module")
def curved_path():
    m = SchwarzschildIsotropic(1.0)
    ray = ray_from_impact_parameter(m, 10.0, 50.0, inclination=0.7)
    path = integrate_null_geodesic(m, ray, 100.0, IntegratorControls(step=2e-2, sample_every=10))
    return m, path


# ------------------------------------------------------------------- frames


def test_frame_along_z():
    f = helicity_frame([1, 0, 0, 1], Minkowski(), np.zeros(4))
    assert np.allclose(f.e_plus, spatial((X_HAT + 1j * Y_HAT) / SQ2), atol=1e-15)
    assert np.allclose(f.e_minus, spatial((X_HAT - 1j * Y_HAT) / SQ2), atol=1e-15)


def test_frame_along_x():
    f = helicity_frame([1, 1, 0, 0], Minkowski(), np.zeros(4))
    assert same_up_to_phase(f.e_plus, spatial((Y_HAT + 1j * Z_HAT) / SQ2))
    assert same_up_to_phase(f.e_minus, spatial((Y_HAT - 1j * Z_HAT) / SQ2))


def test_frame_rotation_property():
    f = helicity_frame([1, 1, 0, 0], Minkowski(), np.zeros(4))
    assert np.allclose(f.rotate(0.4, f.e_plus), cmath.exp(-0.4j) * f.e_plus, atol=1e-12)
    assert np.allclose(f.rotate(0.4, f.e_minus), cmath.exp(0.4j) * f.e_minus, atol=1e-12)


def test_frame_rejects_non_null():
    with pytest.raises(NonNullMomentum):
        helicity_frame([1, 0, 0, 0.5], Minkowski(), np.zeros(4))
    with pytest.raises(NonNullMomentum):
        helicity_frame([-1, 0, 0, -1], Minkowski(), np.zeros(4))


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["flat", "isotropic", "weak"]),
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.05),
    st.floats(-3.2, 3.2, allow_nan=False),
)
def test_frame_invariants(which, direction, theta):
    m = {"flat": Minkowski(), "isotropic": SchwarzschildIsotropic(1.0), "weak": WeakField(0.5)}[which]
    x = np.array([0.0, 6.0, -2.0, 3.0])
    ray = make_null_ray(m, x, direction, 1.7)
    f = helicity_frame(ray.p, m, x)
    g = m(x)
    for e in (f.e_plus, f.e_minus):
        assert e[0] == 0
        assert abs((g @ ray.p) @ e) < 1e-12
        assert abs(e @ g @ e) < 1e-12
        assert f.vector_product(e, e).real == pytest.approx(1.0, rel=1e-12)
    assert abs(f.vector_product(f.e_plus, f.e_minus)) < 1e-12
    assert np.allclose(f.rotate(theta, f.e_plus), cmath.exp(-1j * theta) * f.e_plus, atol=1e-11)
    assert np.allclose(f.rotate(theta, f.e_minus), cmath.exp(1j * theta) * f.e_minus, atol=1e-11)


# --------------------------------------------------------------- decomposition


@pytest.fixture
def z_frame():
    return helicity_frame([1, 0, 0, 1], Minkowski(), np.zeros(4))


def test_decompose_pure_plus(z_frame):
    a = decompose_helicity(np.outer(z_frame.e_plus, z_frame.e_plus), z_frame)
    assert (a.c_plus, a.c_minus, a.c_zero) == pytest.approx((1, 0, 0), abs=1e-15)
    assert a.valid


def test_decompose_plus_polarization(z_frame):
    a = decompose_helicity(embed(PLUS), z_frame)
    assert a.c_plus == pytest.approx(1, abs=1e-15)
    assert a.c_minus == pytest.approx(1, abs=1e-15)
    assert abs(a.c_zero) < 1e-15 and a.residual < 1e-15


def test_decompose_trace_piece(z_frame):
    from gravem.transport import check_tt_gauge

    b = embed(np.outer(X_HAT, X_HAT) + np.outer(Y_HAT, Y_HAT))
    a = decompose_helicity(b, z_frame)
    assert abs(a.c_zero) > 0.5 and not a.valid
    assert not check_tt_gauge(b, z_frame.p, Minkowski(), np.zeros(4)).traceless_ok


def test_decompose_errors(z_frame):
    bad = np.zeros((4, 4))
    bad[1, 2] = 1
    with pytest.raises(NonSymmetricInput):
        decompose_helicity(bad, z_frame)
    with pytest.raises(NonTransverseInput):
        decompose_helicity(embed(np.outer(Z_HAT, Z_HAT)), z_frame)


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.floats(-10, 10, allow_nan=False))
def test_reconstruction_roundtrip(cp, cm, phi0):
    f = helicity_frame([1, 0.6, 0, 0.8], Minkowski(), np.zeros(4))
    wave = assemble_gw(cp, cm, f, phi0, 0.5, 0.5)
    a = decompose_helicity(wave.amplitude, f)
    assert abs(a.c_plus - cp) < 1e-12 * (1 + abs(cp))
    assert abs(a.c_minus - cm) < 1e-12 * (1 + abs(cm))
    assert abs(a.c_zero) < 1e-12 * (1 + abs(cp) + abs(cm))


# ------------------------------------------------------------------- assembly


def test_assemble_reproduces_split_plane_wave(z_frame):
    omega, z, t = 2.0, 0.7, 0.2
    phi = omega * (z - t)
    wave = assemble_gw(1.0, 0.0, z_frame, phi, 0.5, 0.5)
    e = (X_HAT + 1j * Y_HAT) / SQ2
    assert np.allclose(wave.tensor_at_start()[1:, 1:], np.outer(e, e) * cmath.exp(1j * phi), atol=1e-15)


def test_assemble_plus_polarization(z_frame):
    wave = assemble_gw(1.0, 1.0, z_frame, 0.4, 0.5, 0.5)
    assert np.allclose(wave.tensor_at_start(), embed(PLUS) * cmath.exp(0.4j), atol=1e-15)


def test_kappa_exchange_symmetry(z_frame):
    a = assemble_gw(0.3 + 0.1j, 0.7, z_frame, 1.3, 0.3, 0.3).tensor_at_start()
    b = assemble_gw(0.3 + 0.1j, 0.7, z_frame, 1.3, 0.7, 0.7).tensor_at_start()
    assert np.allclose(a, b, atol=1e-15)


@pytest.mark.parametrize("k", [0.0, 1.0, -0.1])
def test_assemble_kappa_range(z_frame, k):
    with pytest.raises(KappaOutOfRange):
        assemble_gw(1, 0, z_frame, 0.0, k, 0.5)


def test_factor_sum_total_phase_independent_of_kappa():
    e = spatial((X_HAT + 1j * Y_HAT) / SQ2)
    ref = factor_sum(1, 0, e, np.conj(e), 2.2, 0.5, 0.5)
    for k in np.linspace(0.05, 0.95, 19):
        assert np.allclose(factor_sum(1, 0, e, np.conj(e), 2.2, k, k), ref, atol=1e-15)


# --------------------------------------------------------------- propagation


def test_flat_direct_equals_factored(flat_path):
    m, path = flat_path
    wave = wave_on_ray(m, path, 0.8, 0.3j, 0.5, 0.3, 0.6)
    d = propagate_direct(wave, m)
    f = propagate_factored(wave, m)
    assert np.allclose(d.h, f.h, rtol=0, atol=1e-15)
    assert np.allclose(d.h, d.h[0], atol=1e-15)
    assert d.max_gauge_residual() < 1e-15


def test_curved_direct_vs_factored(curved_path):
    m, path = curved_path
    wave = wave_on_ray(m, path, 0.6 + 0.2j, 0.4, 1.0, 0.3, 0.5)
    d = propagate_direct(wave, m)
    f = propagate_factored(wave, m)
    assert np.max(relative_deviation(d.h, f.h)) < 1e-8
    assert d.max_gauge_residual() < 1e-8 and f.max_gauge_residual() < 1e-8


def test_non_mixing(curved_path):
    m, path = curved_path
    wave = wave_on_ray(m, path, 1.0, 0.0, 1.0)
    d = propagate_direct(wave, m)
    frame_end = helicity_frame(path.p[-1], m, path.x[-1])
    a = decompose_helicity(d.amplitude[-1], frame_end)
    assert abs(a.c_minus) / abs(a.c_plus) < 1e-9
    assert abs(abs(a.c_plus) - 1) < 1e-9


def test_kappa_independence_of_factored(curved_path):
    m, path = curved_path
    a = propagate_factored(wave_on_ray(m, path, 1.0, 0.5, 1.0, 0.3, 0.3), m)
    b = propagate_factored(wave_on_ray(m, path, 1.0, 0.5, 1.0, 0.5, 0.5), m)
    assert np.max(relative_deviation(a.h, b.h)) < 1e-12


def test_phase_doubling_curved(curved_path):
    m, path = curved_path
    em, gw = phase_series(m, path, phi0=1.0)
    assert np.max(np.abs(gw - 2 * em)) < 1e-9
    # the polarization genuinely rotates on this ray, so the check is not vacuous
    assert abs(em[-1] - em[0]) > 0.05


def test_phase_doubling_flat_exact(flat_path):
    m, path = flat_path
    em, gw = phase_series(m, path, phi0=1.0)
    assert np.all(gw == 2 * em)


def test_report_identical_inputs(flat_path):
    m, path = flat_path
    d = propagate_direct(wave_on_ray(m, path, 1.0, 0.0, 1.0), m)
    em, gw = phase_series(m, path, phi0=1.0)
    rep = equivalence_report(d, d, em, gw)
    assert rep.max_deviation == 0.0 and rep.passed
    assert np.all(rep.phase_ratio == 2.0)


def test_report_grid_mismatch(flat_path, curved_path):
    m, path = flat_path
    d = propagate_direct(wave_on_ray(m, path), m)
    m2, path2 = curved_path
    d2 = propagate_direct(wave_on_ray(m2, path2), m2)
    with pytest.raises(GridMismatch):
        equivalence_report(d, d2, np.zeros(len(path)), np.zeros(len(path)))
    with pytest.raises(GridMismatch):
        equivalence_report(d, d, np.zeros(3), np.zeros(3))


def test_check_equivalence_bundle(curved_path):
    m, path = curved_path
    run = check_equivalence(m, path, 0.6, 0.4j, 1.0, 0.3, 0.8)
    s = run.report.summary()
    assert s["passed"]
    assert s["mixing_plus_to_minus"] < 1e-9 and s["mixing_minus_to_plus"] < 1e-9
    assert s["kappa_dependence"] < 1e-12
    assert run.end_amplitudes.valid


def test_frames_along_count(curved_path):
    m, path = curved_path
    assert len(frames_along(m, path)) == len(path)
