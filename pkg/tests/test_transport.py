import math

import numpy as np
import pytest
from conftest import schwarzschild_deflection_oracle
from hypothesis import given, settings
from hypothesis import strategies as st

from gravem.algebra import PLUS, X_HAT, Y_HAT
from gravem.errors import EmptyPath, NonNullInitialMomentum, NonSymmetricInput, OutsideChartDomain
from gravem.spacetime import Minkowski, Schwarzschild, SchwarzschildIsotropic, WeakField
from gravem.transport import (
    IntegratorControls,
    NullRay,
    RayPath,
    check_tt_gauge,
    constraint_drift,
    deflection_angle,
    integrate_null_geodesic,
    make_null_ray,
    null_residual,
    parallel_transport_tensor,
    parallel_transport_vector,
    parallel_transport_vectors,
    photon_sphere_ray,
    project_tensor_tt,
    ray_from_impact_parameter,
    reverse_ray,
    solve_null_time_component,
    vector_transversality,
)


def embed(t3):
    out = np.zeros((4, 4), dtype=complex)
    out[1:, 1:] = t3
    return out


def frame_vectors(metric, ray):
    """A complex vector transverse to the ray: e = (a + i b)/sqrt2 with a, b
    orthonormal and orthogonal to p (Gram-Schmidt in the metric)."""
    g = metric(ray.x)
    p = ray.p
    u = np.array([1.0 / math.sqrt(g[0, 0]), 0, 0, 0])
    k = p / (p @ g @ u)  # unit energy for the static observer u
    basis = []
    for seed in (np.array([0, 0, 1.0, 0]), np.array([0, 0, 0, 1.0]), np.array([0, 1.0, 0, 0])):
        v = seed - (seed @ g @ u) * u
        # remove the component along the spatial direction of k
        n = k - u
        nn = -(n @ g @ n)
        v = v + (v @ g @ n) / nn * n
        for w in basis:
            v = v + (v @ g @ w) * w
        norm = math.sqrt(-(v @ g @ v))
        if norm > 1e-6:
            basis.append(v / norm)
        if len(basis) == 2:
            break
    a, b = basis
    return (a + 1j * b) / math.sqrt(2)


# -------------------------------------------------------------- null rays


def test_solve_null_time_component_flat():
    assert solve_null_time_component(np.diag([1.0, -1, -1, -1]), np.array([0, 3.0, 4.0])) == 5.0


def test_make_null_ray_is_null(metrics):
    m = metrics["isotropic"]
    ray = make_null_ray(m, [0, 5.0, 2.0, 1.0], [0.3, -1, 0.2], 2.0)
    assert null_residual(m, ray.x, ray.p) < 1e-15
    assert ray.p[0] > 0


def test_non_null_initial_momentum_rejected():
    with pytest.raises(NonNullInitialMomentum):
        integrate_null_geodesic(Minkowski(), NullRay([0, 0, 0, 0], [1, 0, 0, 0.9]), 1.0)
    with pytest.raises(NonNullInitialMomentum):
        integrate_null_geodesic(Minkowski(), NullRay([0, 0, 0, 0], [-1, 0, 0, 1.0]), 1.0)


def test_flat_straight_line():
    m = Minkowski()
    path = integrate_null_geodesic(m, NullRay([0, 0, 0, 0], [1, 0, 0, 1.0]), 10.0, IntegratorControls(step=0.1))
    assert np.allclose(path.x[:, 0], path.l, atol=1e-13)
    assert np.allclose(path.x[:, 3], path.l, atol=1e-13)
    assert np.all(path.x[:, 1:3] == 0)
    assert np.all(path.p == [1, 0, 0, 1])
    assert np.all(np.diff(path.l) > 0)
    d = constraint_drift(path)
    assert d.max_null == 0.0 and d.mean_null == 0.0


def test_impact_parameter_is_exact(metrics):
    for key in ("schwarzschild", "isotropic"):
        m = metrics[key]
        ray = ray_from_impact_parameter(m, 20.0, 200.0)
        g = m(ray.x)
        p_low = g @ ray.p
        if m.chart == "schwarzschild":
            ang = abs(p_low[3])
        else:
            ang = np.linalg.norm(np.cross(ray.x[1:], -p_low[1:]))
        assert ang / p_low[0] == pytest.approx(20.0, rel=1e-13)


# ------------------------------------------------------------- deflection


@pytest.mark.parametrize("b", [10.0, 30.0])
def test_deflection_matches_quadrature(b):
    m = Schwarzschild(1.0)
    ray = ray_from_impact_parameter(m, b, 80.0)
    path = integrate_null_geodesic(m, ray, 150.0, IntegratorControls(step=5e-3, sample_every=100))
    oracle = schwarzschild_deflection_oracle(b, 1.0, path.x[0, 1], path.x[-1, 1])
    assert deflection_angle(path) == pytest.approx(oracle, rel=1e-8)


def test_isotropic_and_schwarzschild_charts_agree():
    rho = 60.0
    r = rho * (1 + 0.25 / rho) ** 2
    a = Schwarzschild(1.0)
    b = SchwarzschildIsotropic(1.0)
    pa = integrate_null_geodesic(a, ray_from_impact_parameter(a, 12.0, r), 120.0, IntegratorControls(step=1e-2))
    pb = integrate_null_geodesic(b, ray_from_impact_parameter(b, 12.0, rho), 120.0, IntegratorControls(step=1e-2))
    oa = schwarzschild_deflection_oracle(12.0, 1.0, pa.x[0, 1], pa.x[-1, 1])
    areal = lambda q: q * (1 + 0.25 / q) ** 2  # noqa: E731
    ob = schwarzschild_deflection_oracle(12.0, 1.0, areal(np.linalg.norm(pb.x[0, 1:])),
                                         areal(np.linalg.norm(pb.x[-1, 1:])))
    assert deflection_angle(pa) == pytest.approx(oa, rel=1e-8)
    assert deflection_angle(pb) == pytest.approx(ob, rel=1e-8)


def test_weak_field_deflection_close_to_schwarzschild_for_large_b():
    b = 200.0
    w = WeakField(0.5)
    s = SchwarzschildIsotropic(1.0)
    ctl = IntegratorControls(step=0.5, sample_every=100)
    dw = deflection_angle(integrate_null_geodesic(w, ray_from_impact_parameter(w, b, 4000.0), 8000.0, ctl))
    ds = deflection_angle(integrate_null_geodesic(s, ray_from_impact_parameter(s, b, 4000.0), 8000.0, ctl))
    assert dw == pytest.approx(ds, rel=2e-2)
    assert dw == pytest.approx(2.0 / b, rel=2e-2)


def test_photon_sphere_orbit():
    m = Schwarzschild(1.0)
    ray = photon_sphere_ray(m)
    # one revolution: dphi/dl = p^phi
    l_rev = 2 * math.pi / ray.p[3]
    path = integrate_null_geodesic(m, ray, l_rev, IntegratorControls(step=l_rev / 4000))
    assert np.max(np.abs(path.x[:, 1] - 1.5)) < 1e-6
    assert path.x[-1, 3] == pytest.approx(2 * math.pi, rel=1e-9)


def test_photon_sphere_needs_schwarzschild_chart():
    with pytest.raises(OutsideChartDomain):
        photon_sphere_ray(SchwarzschildIsotropic(1.0))


def test_plunging_ray_leaves_chart():
    m = Schwarzschild(1.0)
    ray = ray_from_impact_parameter(m, 2.0, 30.0)
    with pytest.raises(OutsideChartDomain):
        integrate_null_geodesic(m, ray, 100.0, IntegratorControls(step=1e-2))


def test_rk4_step_halving_fourth_order():
    m = SchwarzschildIsotropic(1.0)
    ray = ray_from_impact_parameter(m, 10.0, 50.0)
    drifts = []
    for h in (0.5, 0.25, 0.125):
        drifts.append(integrate_null_geodesic(m, ray, 100.0, IntegratorControls(step=h)).null_residual.max())
    for coarse, fine in zip(drifts, drifts[1:]):
        assert 12 <= coarse / fine <= 20


def test_projection_keeps_null_exactly():
    m = SchwarzschildIsotropic(1.0)
    ray = ray_from_impact_parameter(m, 10.0, 50.0)
    path = integrate_null_geodesic(m, ray, 100.0, IntegratorControls(step=0.5, project_every=1))
    assert path.null_residual.max() < 1e-14


def test_adaptive_integrator_matches_rk4(b10_isotropic):
    m, path = b10_isotropic
    ad = integrate_null_geodesic(m, path.start, path.l[-1], IntegratorControls(method="dop853", rtol=1e-12, atol=1e-13))
    assert np.allclose(ad.x[-1], path.x[-1], rtol=0, atol=1e-7)


def test_reversibility(metrics):
    for key in ("schwarzschild", "isotropic", "weak"):
        m = metrics[key]
        ray = ray_from_impact_parameter(m, 10.0, 40.0)
        ctl = IntegratorControls(step=1e-2)
        fwd = integrate_null_geodesic(m, ray, 80.0, ctl)
        back = integrate_null_geodesic(m, reverse_ray(fwd.end), 160.0, ctl, allow_past_directed=True)
        assert np.max(np.abs(back.x[-1] - ray.x)) < 1e-7


# ----------------------------------------------------------------- transport


def test_flat_transport_is_identity():
    m = Minkowski()
    path = integrate_null_geodesic(m, NullRay([0, 0, 0, 0], [1, 0, 0, 1.0]), 5.0, IntegratorControls(step=0.1))
    v0 = np.array([0, 1, 1j, 0]) / math.sqrt(2)
    v = parallel_transport_vector(m, path, v0)
    assert np.all(v == v0)
    b0 = embed(PLUS)
    assert np.all(parallel_transport_tensor(m, path, b0) == b0)


def test_empty_path_and_asymmetric_input(b10_isotropic):
    m, path = b10_isotropic
    empty = RayPath(np.array([]), np.zeros((0, 4)), np.zeros((0, 4)), np.array([]), np.array([]),
                    IntegratorControls(), m)
    with pytest.raises(EmptyPath):
        parallel_transport_vector(m, empty, np.zeros(4))
    with pytest.raises(EmptyPath):
        constraint_drift(empty)
    bad = np.zeros((4, 4))
    bad[1, 2] = 1.0
    with pytest.raises(NonSymmetricInput):
        parallel_transport_tensor(m, path, bad)


def test_b10_vector_conservation(b10_isotropic):
    m, path = b10_isotropic
    e0 = frame_vectors(m, path.start)
    v = parallel_transport_vector(m, path, e0)
    g = [m(x) for x in path.x]
    norms = np.array([(np.conj(vi) @ gi @ vi).real for vi, gi in zip(v, g)])
    assert np.max(np.abs(norms - norms[0])) < 1e-9
    assert constraint_drift(path, v).max_transversality < 1e-9
    assert vector_transversality(g[0], path.p[0], v[0]) < 1e-14


def test_contractions_preserved(metrics, rng):
    for key in ("schwarzschild", "isotropic", "weak"):
        m = metrics[key]
        ray = ray_from_impact_parameter(m, 15.0, 40.0, inclination=0.3)
        path = integrate_null_geodesic(m, ray, 80.0, IntegratorControls(step=2e-2, sample_every=20))
        u0, w0 = rng.normal(size=4), rng.normal(size=4)
        u, w = parallel_transport_vectors(m, path, [u0, w0]).real
        dots = np.array([ui @ m(x) @ wi for ui, wi, x in zip(u, w, path.x)])
        assert np.max(np.abs(dots - dots[0])) < 1e-9 * max(1.0, abs(dots[0]))


def test_tensor_equals_product_of_vectors(metrics):
    for key in ("flat", "schwarzschild", "isotropic", "weak"):
        m = metrics[key]
        if key == "flat":
            ray = make_null_ray(m, [0, -20, 3, 0], [1, 0, 0], 1.0)
        else:
            ray = ray_from_impact_parameter(m, 10.0, 40.0, inclination=1.1)
        path = integrate_null_geodesic(m, ray, 80.0, IntegratorControls(step=2e-2, sample_every=25))
        e0 = frame_vectors(m, path.start)
        v = parallel_transport_vector(m, path, e0)
        b = parallel_transport_tensor(m, path, np.outer(e0, e0))
        prod = np.einsum("ni,nj->nij", v, v)
        rel = np.max(np.abs(b - prod)) / np.max(np.abs(prod))
        assert rel < 1e-8


def test_symmetry_and_trace_preserved(b10_isotropic):
    m, path = b10_isotropic
    e0 = frame_vectors(m, path.start)
    b0 = np.outer(e0, e0)
    raw = parallel_transport_tensor(m, path, b0, symmetrize=False)
    assert np.max(np.abs(raw - raw.transpose(0, 2, 1))) < 1e-12
    b = parallel_transport_tensor(m, path, b0)
    assert np.all(b == b.transpose(0, 2, 1))
    traces = [abs(np.sum(m(x) * bi)) for x, bi in zip(path.x, b)]
    assert max(traces) < 1e-9


# -------------------------------------------------------------------- gauge


def test_gauge_examples():
    m = Minkowski()
    p = np.array([1.0, 0, 0, 1.0])
    ev = np.zeros(4)
    assert check_tt_gauge(embed(PLUS), p, m, ev).passed
    b = embed(PLUS)
    b[0, 0] = 1.0
    rep = check_tt_gauge(b, p, m, ev)
    assert not rep.spatial_ok
    rep = check_tt_gauge(embed(np.outer(X_HAT, X_HAT) + np.outer(Y_HAT, Y_HAT)), p, m, ev)
    assert not rep.traceless_ok and rep.trace == pytest.approx(2.0)
    assert rep.spatial_ok and rep.transverse_ok


def test_tt_projection_restores_spatial_gauge(b10_isotropic):
    m, path = b10_isotropic
    e0 = frame_vectors(m, path.start)
    b = parallel_transport_tensor(m, path, np.outer(e0, e0), tt_gauge=True)
    for x, p, bi in zip(path.x, path.p, b):
        rep = check_tt_gauge(bi, p, m, x)
        assert rep.passed, rep


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_tt_projector_is_idempotent_and_keeps_transversality(direction):
    m = WeakField(0.5)
    x = np.array([0.0, 8.0, -3.0, 2.0])
    ray = make_null_ray(m, x, direction, 1.0)
    rng = np.random.default_rng(0)
    c = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    b = c + c.T
    once = project_tensor_tt(b, ray.p)
    assert np.allclose(project_tensor_tt(once, ray.p), once, atol=1e-12)
    assert np.max(np.abs(once[0])) < 1e-12
