"""Null geodesics and parallel transport of polarization vectors and tensors.

Vectors and tensors are stored with upper (contravariant) indices. Complex
objects are transported as separate real and imaginary parts; the connection
is real, so the two never couple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ode
from .errors import (
    EmptyPath,
    NonNullInitialMomentum,
    NonSymmetricInput,
    OutsideChartDomain,
)
from .spacetime import (
    CARTESIAN_CHARTS,
    cartesian_jacobian,
    chart_to_spatial_cartesian,
    spatial_cartesian_to_chart,
)

DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class IntegratorControls:
    """Run controls for ray integration.

    ``method`` is "rk4" (fixed step) or one of the embedded schemes "rk45",
    "dop853". ``project_every`` > 0 rescales p^0 onto the null cone every N
    steps (RK4 only); by default the null constraint is only monitored.
    """

    method: str = "rk4"
    step: float = 1e-2
    rtol: float = 1e-10
    atol: float = 1e-12
    sample_every: int = 1
    project_every: int = 0
    max_steps: int = 50_000_000
    max_step: float = math.inf
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.method not in ("rk4",) + tuple(ode.ADAPTIVE_METHODS):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass(frozen=True)
class NullRay:
    x: np.ndarray
    p: np.ndarray
    l: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).copy())
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).copy())


@dataclass
class RayPath:
    """Sampled null geodesic. ``null_residual`` is |g(p,p)| / (|g_00| (p^0)^2)."""

    l: np.ndarray
    x: np.ndarray
    p: np.ndarray
    null_residual: np.ndarray
    steps: np.ndarray
    controls: IntegratorControls
    metric: object = field(repr=False, default=None)

    def __len__(self):
        return len(self.l)

    def sample(self, i):
        return NullRay(self.x[i], self.p[i], float(self.l[i]))

    @property
    def start(self):
        return self.sample(0)

    @property
    def end(self):
        return self.sample(-1)


@dataclass
class GaugeReport:
    spatial: float
    trace: float
    transversality: float
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def spatial_ok(self):
        return self.spatial <= self.tolerance

    @property
    def traceless_ok(self):
        return self.trace <= self.tolerance

    @property
    def transverse_ok(self):
        return self.transversality <= self.tolerance

    @property
    def passed(self):
        return self.spatial_ok and self.traceless_ok and self.transverse_ok


@dataclass
class DriftSummary:
    max_null: float
    mean_null: float
    max_transversality: float = 0.0


# --------------------------------------------------------------- ray set-up


def null_residual(metric, x, p):
    g = metric(x)
    return abs(p @ g @ p) / (abs(g[0, 0]) * p[0] * p[0])


def solve_null_time_component(g, spatial):
    """Positive root p^0 of g_{mu nu} p^mu p^nu = 0 for given spatial components."""
    a = g[0, 0]
    b = 2.0 * (g[0, 1:] @ spatial)
    c = spatial @ g[1:, 1:] @ spatial
    disc = b * b - 4.0 * a * c
    if a <= 0 or disc < 0:
        raise NonNullInitialMomentum("no future-directed null completion at this event", "transport.make_null_ray")
    return (-b + math.sqrt(disc)) / (2.0 * a)


def make_null_ray(metric, x, direction, frequency, l=0.0):
    """Null ray from a spatial direction (chart components) and a frequency.

    The spatial part is normalised with the positive spatial metric -g_ij so
    that ``frequency`` is what a static observer measures for diagonal metrics;
    p^0 is the positive root of the null condition.
    """
    x = np.asarray(x, dtype=float)
    g = metric(x)
    d = np.asarray(direction, dtype=float)
    norm = math.sqrt(d @ (-g[1:, 1:]) @ d)
    if norm == 0.0:
        raise NonNullInitialMomentum("direction must be non-zero", "transport.make_null_ray")
    spatial = frequency * d / norm
    p0 = solve_null_time_component(g, spatial)
    return NullRay(x, np.concatenate([[p0], spatial]), l)


def _inclination_rotation(inclination):
    c, s = math.cos(inclination), math.sin(inclination)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ray_from_cartesian(metric, xyz, dir_xyz, frequency, t=0.0):
    coords = spatial_cartesian_to_chart(metric, xyz)
    jac = cartesian_jacobian(metric, coords)
    d = np.linalg.solve(jac, dir_xyz)
    return make_null_ray(metric, np.concatenate([[t], coords]), d, frequency)


def _energy_angular_momentum(metric, ray):
    g = metric(ray.x)
    p_low = g @ ray.p
    energy = p_low[0]
    xyz = chart_to_spatial_cartesian(metric, ray.x[1:])
    if metric.chart in CARTESIAN_CHARTS:
        ang = np.cross(xyz, -p_low[1:])
    else:
        # covariant angular components of p in the chart -> Cartesian L
        jac = cartesian_jacobian(metric, ray.x[1:])
        p_cart = np.linalg.solve(jac.T, -p_low[1:])
        ang = np.cross(xyz, p_cart)
    return energy, float(np.linalg.norm(ang))


def ray_from_impact_parameter(metric, b, distance, frequency=1.0, inclination=0.0, t=0.0):
    """Incoming ray with impact parameter ``b`` (L/E) launched from ``distance``.

    The ray starts near (-distance, b, 0) travelling along +x, rotated about
    the x axis by ``inclination``. The transverse offset is adjusted so that
    L/E equals ``b`` exactly for static spherically symmetric backgrounds.
    """
    rot = _inclination_rotation(inclination)
    direction = rot @ np.array([1.0, 0.0, 0.0])
    offset = b
    spherical = metric.spherical
    ray = None
    for _ in range(50):
        ray = _ray_from_cartesian(metric, rot @ np.array([-distance, offset, 0.0]), direction, frequency, t)
        if not spherical:
            break
        energy, ang = _energy_angular_momentum(metric, ray)
        impact = ang / energy
        if abs(impact - b) <= 1e-15 * b:
            break
        offset *= b / impact
    return ray


# --------------------------------------------------------------- integration


def _connection_matrix(metric, x, p):
    return metric.connection(x, p)


def _make_rhs(metric, n_vec, n_ten):
    nv = 4 * n_vec

    def rhs(l, y):
        x = y[:4]
        p = y[4:8]
        m = _connection_matrix(metric, x, p)
        out = np.empty_like(y)
        out[:4] = p
        out[4:8] = -(m @ p)
        if n_vec:
            v = y[8 : 8 + nv].reshape(n_vec, 4)
            out[8 : 8 + nv] = -(v @ m.T).ravel()
        if n_ten:
            b = y[8 + nv :].reshape(n_ten, 4, 4)
            out[8 + nv :] = -(m @ b + b @ m.T).ravel()
        return out

    return rhs


def _projector(metric, every):
    def post(i, l, y):
        if every and i % every == 0:
            g = metric(y[:4])
            y = y.copy()
            y[4] = solve_null_time_component(g, y[5:8])
        return y

    return post


def _run(metric, x0, p0, l0, l_end, controls, vectors=(), tensors=(), t_eval=None):
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    tens = [np.asarray(b, dtype=float) for b in tensors]
    y0 = np.concatenate([x0, p0] + [v.ravel() for v in vecs] + [b.ravel() for b in tens])
    rhs = _make_rhs(metric, len(vecs), len(tens))
    if controls.method == "rk4":
        sol = ode.integrate_rk4(
            rhs,
            l0,
            y0,
            l_end,
            controls.step,
            sample_every=controls.sample_every,
            post_step=_projector(metric, controls.project_every) if controls.project_every else None,
            max_steps=controls.max_steps,
        )
    else:
        sol = ode.integrate_adaptive(
            rhs,
            l0,
            y0,
            l_end,
            method=controls.method,
            rtol=controls.rtol,
            atol=controls.atol,
            t_eval=t_eval,
            sample_every=controls.sample_every,
            max_step=controls.max_step,
        )
    return sol


def integrate_null_geodesic(metric, initial, l_end, controls=None, allow_past_directed=False):
    """Integrate dx/dl = p, dp/dl = -Gamma p p from ``initial`` to ``l_end``."""
    controls = controls or IntegratorControls()
    if not l_end > initial.l:
        raise ValueError("l_end must exceed the initial affine parameter")
    if not allow_past_directed and initial.p[0] <= 0:
        raise NonNullInitialMomentum("p^0 must be positive (future directed)", "transport.integrate_null_geodesic")
    res0 = null_residual(metric, initial.x, initial.p)
    if res0 > 1e-10:
        raise NonNullInitialMomentum(
            f"initial momentum is not null (residual {res0:.3e} > 1e-10)", "transport.integrate_null_geodesic"
        )
    sol = _run(metric, initial.x, initial.p, initial.l, l_end, controls)
    x = sol.y[:, :4]
    p = sol.y[:, 4:8]
    drift = np.array([null_residual(metric, xi, pi) for xi, pi in zip(x, p)])
    return RayPath(sol.t, x, p, drift, sol.steps, controls, metric)


def _replay(metric, path, vectors=(), tensors=()):
    if path is None or len(path) == 0:
        raise EmptyPath("path has no samples", "transport.parallel_transport")
    t_eval = None if path.controls.method == "rk4" else path.l
    sol = _run(metric, path.x[0], path.p[0], path.l[0], path.l[-1], path.controls, vectors, tensors, t_eval)
    if len(sol.t) != len(path.l):
        raise EmptyPath("transport replay produced a different sampling", "transport.parallel_transport")
    return sol


def _split(z):
    z = np.asarray(z, dtype=complex)
    return z.real.copy(), z.imag.copy()


def parallel_transport_vector(metric, path, v0, tt_gauge=False):
    """Solve p^s D_s v = 0 along ``path``; returns complex (N, 4) samples.

    With ``tt_gauge`` the samples are returned after removing the component
    along p that makes v^0 vanish (a gauge shift; transversality, norms and
    self-products are unchanged).
    """
    re, im = _split(v0)
    sol = _replay(metric, path, vectors=(re, im))
    v = sol.y[:, 8:12] + 1j * sol.y[:, 12:16]
    if tt_gauge:
        v = np.array([project_vector_tt(vi, pi) for vi, pi in zip(v, path.p)])
    return v


def parallel_transport_vectors(metric, path, vectors, tt_gauge=False):
    """Transport several complex vectors in one pass; returns (k, N, 4)."""
    parts = []
    for v in vectors:
        parts.extend(_split(v))
    sol = _replay(metric, path, vectors=parts)
    out = []
    for k in range(len(vectors)):
        base = 8 + 8 * k
        v = sol.y[:, base : base + 4] + 1j * sol.y[:, base + 4 : base + 8]
        if tt_gauge:
            v = np.array([project_vector_tt(vi, pi) for vi, pi in zip(v, path.p)])
        out.append(v)
    return np.array(out)


def parallel_transport_tensor(metric, path, b0, tt_gauge=False, symmetrize=True):
    """Solve p^s D_s B = 0 with both slots transported; returns (N, 4, 4).

    ``symmetrize=False`` returns the raw integrated components, whose
    asymmetry measures round-off in the two slot updates.
    """
    b0 = np.asarray(b0, dtype=complex)
    if b0.shape != (4, 4):
        raise ValueError("tensor must be 4x4")
    scale = max(1.0, float(np.max(np.abs(b0))))
    if np.max(np.abs(b0 - b0.T)) > 1e-14 * scale:
        raise NonSymmetricInput("polarization tensor must be symmetric", "transport.parallel_transport_tensor")
    re, im = _split(0.5 * (b0 + b0.T))
    sol = _replay(metric, path, tensors=(re, im))
    b = sol.y[:, 8:24].reshape(-1, 4, 4) + 1j * sol.y[:, 24:40].reshape(-1, 4, 4)
    if symmetrize:
        # both slots obey the same linear law; restore exact symmetry lost to rounding
        b = 0.5 * (b + b.transpose(0, 2, 1))
    if tt_gauge:
        b = np.array([project_tensor_tt(bi, pi) for bi, pi in zip(b, path.p)])
    return b


def tt_projector(p):
    """P = I - p (x) e_t / p^0: shifts along p so the time component vanishes."""
    proj = np.eye(4)
    proj[:, 0] -= p / p[0]
    return proj


def project_vector_tt(v, p):
    return tt_projector(p) @ v


def project_tensor_tt(b, p):
    proj = tt_projector(p)
    out = proj @ b @ proj.T
    return 0.5 * (out + out.T)


def check_tt_gauge(b, p, metric, event, tolerance=DEFAULT_TOLERANCE):
    b = np.asarray(b, dtype=complex)
    g = metric(event)
    p_low = g @ np.asarray(p, dtype=float)
    spatial = float(np.max(np.abs(b[:, 0])))
    trace = float(abs(np.sum(g * b)))
    transverse = float(np.max(np.abs(p_low @ b)) / abs(p[0]))
    return GaugeReport(spatial, trace, transverse, tolerance)


def vector_transversality(g, p, v):
    """|g(p, v)| over the static-observer frequency and the norm of v: dimensionless
    and unchanged by constant rescaling of the metric."""
    norm = math.sqrt(abs((np.conj(v) @ g @ v).real))
    return float(abs((g @ p) @ v) / (math.sqrt(abs(g[0, 0])) * abs(p[0]) * max(norm, 1e-300)))


def constraint_drift(path, vectors=None):
    """Aggregate null drift and, if transported vectors are given, their transversality."""
    if path is None or len(path) == 0:
        raise EmptyPath("path has no samples", "transport.constraint_drift")
    trans = 0.0
    if vectors is not None and path.metric is not None:
        trans = max(vector_transversality(path.metric(x), p, v) for x, p, v in zip(path.x, path.p, vectors))
    return DriftSummary(float(np.max(path.null_residual)), float(np.mean(path.null_residual)), trans)


def spatial_direction_cartesian(metric, x, p):
    """Unit propagation direction in the Cartesian embedding, from local
    orthonormal components of the spatial momentum."""
    spatial = np.array(p[1:], dtype=float)
    if metric.chart == "schwarzschild":
        f = 1.0 - metric.r_s / x[1]
        spatial[0] /= math.sqrt(f)
    d = cartesian_jacobian(metric, x[1:]) @ spatial
    return d / np.linalg.norm(d)


def deflection_angle(path, metric=None):
    """Angle between the first and last propagation directions."""
    metric = metric or path.metric
    d0 = spatial_direction_cartesian(metric, path.x[0], path.p[0])
    d1 = spatial_direction_cartesian(metric, path.x[-1], path.p[-1])
    return math.atan2(np.linalg.norm(np.cross(d0, d1)), float(d0 @ d1))


def reverse_ray(ray):
    """Same event with momentum reversed, for integrating back along a path."""
    return replace(ray, p=-ray.p)


def photon_sphere_ray(metric, phi=0.0):
    """Circular photon orbit r = 1.5 r_s in the equatorial plane (Schwarzschild chart)."""
    if metric.chart != "schwarzschild":
        raise OutsideChartDomain("photon-sphere helper needs the Schwarzschild chart", "transport.photon_sphere_ray")
    r = 1.5 * metric.r_s
    x = np.array([0.0, r, 0.5 * math.pi, phi])
    return make_null_ray(metric, x, [0.0, 0.0, 1.0], 1.0)
