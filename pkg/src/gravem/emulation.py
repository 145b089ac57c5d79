"""Laboratory emulation: conformal rescaling, metric-to-medium compilation and
a kinematic model of the two-photon down-conversion source.

Scaling convention: a lab event is x_bar = s * x and the lab metric is
s**-2 * gamma(x_bar / s). Lab momenta are unchanged (p_bar = p) and affine
parameters stretch by s, so every angle, phase and ratio is scale-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ode
from .algebra import Z_HAT, check_kappa, equivalent_tensor_family, make_plane_wave
from .errors import (
    ErgoregionOrHorizon,
    NonPositiveParameter,
    NonPositiveScale,
    OutsideChartDomain,
)
from .spacetime import CARTESIAN_CHARTS, Metric, _coords
from .transport import IntegratorControls, integrate_null_geodesic

QUALITY_THRESHOLD = 0.2

# ------------------------------------------------------------------ scaling


@dataclass(frozen=True)
class ConformalScale:
    s: float

    def __post_init__(self):
        s = float(self.s)
        if not (s > 0 and math.isfinite(s)):
            raise NonPositiveScale(f"scale factor must be positive and finite, got {self.s!r}",
                                   "emulation.conformal_scale")
        object.__setattr__(self, "s", s)


def _scale_value(s):
    return s.s if isinstance(s, ConformalScale) else ConformalScale(s).s


class ScaledMetric(Metric):
    """s**-2 * base(x_bar / s), with the same chart as ``base``.

    The constant conformal factor is invisible to light, and lab lengths are
    coordinate lengths, so the curvature length reported here is
    s * L_base(x_bar / s) rather than the (unchanged) proper-length value.
    """

    def __init__(self, base, s):
        self.base = base
        self.s = _scale_value(s)
        self.name = base.name
        self.chart = base.chart

    @property
    def params(self):
        out = dict(self.base.params)
        out["scale"] = self.s
        return out

    def _unscaled(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart == "schwarzschild":
            # only t and r carry length; the angles are untouched
            return np.array([x[0] / self.s, x[1] / self.s, x[2], x[3]])
        return x / self.s

    def check_domain(self, x):
        super().check_domain(x)
        self.base.check_domain(self._unscaled(x))

    def _evaluate(self, x):
        g = self.base(self._unscaled(x))
        if self.chart == "schwarzschild":
            g = g.copy()
            g[:2, :2] /= self.s**2
            return g
        return g / self.s**2

    def _christoffel(self, x):
        gam = self.base.christoffel(self._unscaled(x))
        if self.chart == "schwarzschild":
            # x^mu = c_mu y^mu with c = (s, s, 1, 1): Gamma_bar = c_mu Gamma / (c_a c_b)
            c = np.array([self.s, self.s, 1.0, 1.0])
            return gam * c[:, None, None] / (c[None, :, None] * c[None, None, :])
        return gam / self.s

    def connection(self, x, p):
        if self.chart == "schwarzschild":
            return np.tensordot(self.christoffel(x), p, axes=([1], [0]))
        return self.base.connection(self._unscaled(x), p) / self.s

    def kretschmann(self, x):
        x = _coords(x, self)
        self.check_domain(x)
        return self.base.kretschmann(self._unscaled(x)) / self.s**4

    def curvature_length(self, x):
        return self.s * self.base.curvature_length(self._unscaled(x))

    def flat(self):
        return self.base.flat()

    @property
    def spherical(self):
        return self.base.spherical

    @property
    def r_s(self):
        """Lab-frame Schwarzschild radius s * r_s (the scaled horizon)."""
        return self.s * self.base.r_s


def conformal_scale_metric(metric, s):
    return ScaledMetric(metric, ConformalScale(_scale_value(s)))


def scale_event(x, s, chart="cartesian"):
    x = np.asarray(x, dtype=float).copy()
    s = _scale_value(s)
    if chart == "schwarzschild":
        x[:2] *= s
    else:
        x *= s
    return x


@dataclass(frozen=True)
class FieldSample:
    """Electromagnetic field strength F_{mu nu} at one event."""

    f: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.shape != (4, 4):
            raise ValueError("field strength must be 4x4")
        if not np.array_equal(f, -f.T):
            raise ValueError("field strength must be antisymmetric")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "event", np.array(self.event, dtype=float))


def conformal_scale_field(sample, s):
    """F_bar(x_bar) = s**-2 F(x_bar / s): the sample at x moves to s * x."""
    s = _scale_value(s)
    return FieldSample(sample.f / (s * s), sample.event * s)


# ------------------------------------------------------------------- media


@dataclass
class ConstitutiveTensors:
    eps: np.ndarray
    mu: np.ndarray
    w: np.ndarray

    @property
    def impedance_matched(self):
        return np.array_equal(self.eps, self.mu)

    @property
    def index(self):
        """Effective refractive index sqrt(eps mu) for an isotropic medium;
        the geometric mean over principal axes otherwise."""
        ev = np.linalg.eigvals(self.eps @ self.mu).real
        return float(np.prod(np.sqrt(ev)) ** (1.0 / 3.0))

    def row(self):
        e, m = self.eps, self.mu
        sym = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
        return [e[i, j] for i, j in sym] + [m[i, j] for i, j in sym] + list(self.w)


def plebanski_medium(metric, event):
    """eps^ij = mu^ij = -sqrt(-g) g^ij / g_00 and w_i = g_0i / g_00."""
    x = _coords(event, metric)
    g = metric(x)
    g00 = g[0, 0]
    if not g00 > 0:
        raise ErgoregionOrHorizon(f"g_00 = {g00:.6g} <= 0: no static medium exists here",
                                  "emulation.plebanski_medium")
    ginv = np.linalg.inv(g)
    root = math.sqrt(-np.linalg.det(g))
    eps = -root * ginv[1:, 1:] / g00
    eps = 0.5 * (eps + eps.T)
    w = g[0, 1:] / g00
    return ConstitutiveTensors(eps, eps.copy(), w)


class CompiledMedium:
    """Constitutive tensors of ``metric`` on the t = ``t`` slice, as a field over space."""

    def __init__(self, metric, t=0.0):
        if metric.chart not in CARTESIAN_CHARTS:
            raise OutsideChartDomain(
                f"media are traced in Cartesian-like charts only, not {metric.chart!r}", "emulation.medium_ray_check"
            )
        self.metric = metric
        self.t = float(t)

    def __call__(self, xyz):
        return plebanski_medium(self.metric, np.concatenate([[self.t], xyz]))

    def eps(self, xyz):
        return self(xyz).eps

    def gradients(self, xyz):
        """d eps / dx_k and d det(eps) / dx_k by fourth-order central differences."""
        _, d_eps, d_det = self.eps_and_gradients(xyz)
        return d_eps, d_det

    def eps_and_gradients(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        pts = np.repeat(np.concatenate([[self.t], xyz])[None, :], 13, axis=0)
        hs = np.array([1e-5 * max(1.0, abs(v)) for v in xyz])
        for k in range(3):
            for j, m in enumerate((-2, -1, 1, 2)):
                pts[1 + 4 * k + j, 1 + k] += m * hs[k]
        g = np.array([self.metric(x) for x in pts])
        g00 = g[:, 0, 0]
        if not np.all(g00 > 0):
            raise ErgoregionOrHorizon("g_00 <= 0 inside the medium stencil", "emulation.plebanski_medium")
        root = np.sqrt(-np.linalg.det(g))
        eps = -root[:, None, None] * np.linalg.inv(g)[:, 1:, 1:] / g00[:, None, None]
        eps = 0.5 * (eps + eps.transpose(0, 2, 1))
        det = np.linalg.det(eps)
        # stencil rows are offsets (-2, -1, 1, 2); pairwise differences first
        e = eps[1:].reshape(3, 4, 3, 3)
        d_eps = (8.0 * (e[:, 2] - e[:, 1]) - (e[:, 3] - e[:, 0])) / (12.0 * hs[:, None, None])
        d = det[1:].reshape(3, 4)
        d_det = (8.0 * (d[:, 2] - d[:, 1]) - (d[:, 3] - d[:, 0])) / (12.0 * hs)
        return eps[0], d_eps, d_det


def vacuum():
    return ConstitutiveTensors(np.eye(3), np.eye(3), np.zeros(3))


def _medium_rhs(medium, omega):
    # H = (k.eps.k - det(eps) omega^2) / 2
    def rhs(tau, y):
        xyz, k = y[:3], y[3:]
        eps, d_eps, d_det = medium.eps_and_gradients(xyz)
        out = np.empty(6)
        out[:3] = eps @ k
        out[3:] = -0.5 * (np.einsum("i,kij,j->k", k, d_eps, k) - omega * omega * d_det)
        return out

    return rhs


@dataclass
class MediumTrace:
    tau: np.ndarray
    x: np.ndarray
    k: np.ndarray
    steps: int


def trace_medium_ray(medium, xyz, k, omega, tau_end, step, stop=None):
    """Hamiltonian ray through a static impedance-matched medium."""
    y0 = np.concatenate([np.asarray(xyz, dtype=float), np.asarray(k, dtype=float)])
    sol = ode.integrate_rk4(_medium_rhs(medium, omega), 0.0, y0, tau_end, step, sample_every=1 << 30,
                            stop=stop)
    return MediumTrace(sol.t, sol.y[:, :3], sol.y[:, 3:], len(sol.steps))


@dataclass
class MediumCheckReport:
    geodesic_deflection: float
    medium_deflection: float
    angular_deviation: float
    relative_deviation: float
    tolerance: float = 0.01
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.relative_deviation < self.tolerance if self.geodesic_deflection > 0 else (
            self.angular_deviation < 1e-12)


def _angle(a, b):
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(a @ b))


def medium_ray_check(metric, medium, ray, l_end, controls=None, medium_step=None, tolerance=0.01):
    """Trace ``ray`` as a null geodesic and through ``medium``; compare exit directions.

    Both traces stop on the plane, normal to the launch direction, that the
    geodesic reaches at ``l_end``.
    """
    controls = controls or IntegratorControls(step=0.05, sample_every=1 << 30)
    if medium is None:
        medium = CompiledMedium(metric, ray.x[0])
    if np.any(medium(ray.x[1:]).w != 0.0):
        raise ValueError("medium ray tracing supports static media (w = 0) only")
    path = integrate_null_geodesic(metric, ray, l_end, controls)
    g0 = metric(ray.x)
    p_low = g0 @ ray.p
    omega = float(p_low[0])
    k0 = -p_low[1:]
    d0 = ray.p[1:] / np.linalg.norm(ray.p[1:])
    plane = float((path.x[-1, 1:] - ray.x[1:]) @ d0)
    d_geo = path.p[-1, 1:] / np.linalg.norm(path.p[-1, 1:])

    start = ray.x[1:].copy()
    v0 = medium.eps(start) @ k0
    speed = float(np.linalg.norm(v0))
    h = medium_step if medium_step is not None else controls.step * float(np.linalg.norm(ray.p[1:])) / speed
    tau_end = 4.0 * plane / speed + 10.0 * h

    def past_plane(tau, y):
        return float((y[:3] - start) @ d0) >= plane

    tr = trace_medium_ray(medium, start, k0, omega, tau_end, h, stop=past_plane)
    xyz, k = tr.x[-1], tr.k[-1]
    d_med = medium.eps(xyz) @ k
    d_med /= np.linalg.norm(d_med)
    geo = _angle(d0, d_geo)
    med = _angle(d0, d_med)
    dev = _angle(d_geo, d_med)
    rel = dev / geo if geo > 0 else (0.0 if dev == 0 else math.inf)
    return MediumCheckReport(geo, med, dev, rel, tolerance, {"medium_steps": tr.steps, "medium_step": h})


def medium_voxels(metric, axes, t=0.0):
    """Compile the medium on the product grid ``axes`` of spatial chart coordinates."""
    rows = []
    for xv in axes[0]:
        for yv in axes[1]:
            for zv in axes[2]:
                c = plebanski_medium(metric, np.array([t, xv, yv, zv], dtype=float))
                rows.append([float(xv), float(yv), float(zv)] + [float(v) for v in c.row()])
    return rows


VOXEL_COLUMNS = (
    "x y z eps_xx eps_xy eps_xz eps_yy eps_yz eps_zz "
    "mu_xx mu_xy mu_xz mu_yy mu_yz mu_zz w_x w_y w_z"
).split()


def write_voxels(path, metric, rows, s=1.0):
    params = " ".join(f"{k}={v!r}" for k, v in sorted(metric.params.items()))
    with open(path, "w") as fh:
        fh.write(f"# chart={metric.chart} s={float(s)!r} metric={metric.name} {params}".rstrip() + "\n")
        fh.write("# " + " ".join(VOXEL_COLUMNS) + "\n")
        for r in rows:
            fh.write(" ".join(f"{v:.17g}" for v in r) + "\n")


# -------------------------------------------------------------- SPDC source


@dataclass(frozen=True)
class SpdcSourceSpec:
    """Pump, crystal and helicity content of a down-conversion source.

    Frequencies are in inverse length (c = 1); crystal length, pump
    wavenumber and beam width only enter through a dimensionless ratio.
    """

    pump_frequency: float
    kappa: float = 0.5
    crystal_length: float = 0.02
    pump_wavenumber: float = 2.0 * math.pi / 405e-9
    beam_width: float = 5e-6
    plus_amplitude: complex = 1.0
    minus_amplitude: complex = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not self.pump_frequency > 0:
            raise NonPositiveParameter(f"pump frequency must be positive, got {self.pump_frequency!r}",
                                       "emulation.spdc_state")
        check_kappa(self.kappa, "emulation.spdc_state")

    @property
    def effective_kappa(self):
        return 0.5 if self.degenerate else self.kappa

    @property
    def frequencies(self):
        """(signal, idler). The larger share is a product and the smaller is
        the exact remainder, so signal + idler == pump in floating point."""
        wp = self.pump_frequency
        k = self.effective_kappa
        if k >= 0.5:
            ws = k * wp
            return ws, wp - ws
        wi = (1.0 - k) * wp
        return wp - wi, wi


@dataclass
class SpdcState:
    """Weighted superposition of helicity +2 and -2 photon pairs."""

    terms: list
    spec: SpdcSourceSpec
    direction: np.ndarray

    @property
    def gravitational_amplitudes(self):
        c = {2: 0j, -2: 0j}
        for amp, st in self.terms:
            c[st.first.helicity * 2] += amp
        return c[2], c[-2]

    @property
    def linear(self):
        cp, cm = self.gravitational_amplitudes
        return cp != 0 and abs(cp) == abs(cm)

    def states(self):
        return [st for _, st in self.terms]


def spdc_state(spec, direction=Z_HAT):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    ws, wi = spec.frequencies
    terms = []
    for amp, hel in ((spec.plus_amplitude, 1), (spec.minus_amplitude, -1)):
        if amp == 0:
            continue
        st = equivalent_tensor_family(spec.pump_frequency * d, 2 * hel, spec.effective_kappa)
        # rebuild with the exactly conserving frequency split
        st = type(st)(make_plane_wave(ws * d, hel), make_plane_wave(wi * d, hel))
        terms.append((complex(amp), st))
    return SpdcState(terms, spec, d)


@dataclass
class QualityReport:
    ratio: float
    scale: float
    threshold: float

    @property
    def verdict(self):
        return "good" if self.ratio < self.threshold else "bad"

    @property
    def good(self):
        return self.verdict == "good"


def momentum_correlation_quality(spec, threshold=QUALITY_THRESHOLD):
    """w0 / sqrt(S / k_p): how far the pump width is below the correlation scale."""
    for name in ("crystal_length", "pump_wavenumber", "beam_width"):
        v = getattr(spec, name)
        if not v > 0:
            raise NonPositiveParameter(f"{name} must be positive, got {v!r}", "emulation.momentum_correlation_quality")
    scale = math.sqrt(spec.crystal_length / spec.pump_wavenumber)
    return QualityReport(spec.beam_width / scale, scale, threshold)


def coincidence_amplitude(state, z, t):
    """Both factors sampled at the same (z, t) along the propagation axis;
    returns the half-symmetrized product, summed over superposed pairs."""
    if isinstance(state, SpdcState):
        terms = state.terms
        axis = state.direction
    else:
        terms = [(1.0, state)]
        axis = state.first.direction
    pos = z * np.asarray(axis, dtype=float)
    out = np.zeros((3, 3), dtype=complex)
    for amp, st in terms:
        a = st.first.field(pos, t)
        b = st.second.field(pos, t)
        out += amp * 0.5 * (np.outer(a, b) + np.outer(b, a))
    return out


__all__ = [
    "ConformalScale",
    "ScaledMetric",
    "conformal_scale_metric",
    "scale_event",
    "FieldSample",
    "conformal_scale_field",
    "ConstitutiveTensors",
    "plebanski_medium",
    "CompiledMedium",
    "vacuum",
    "trace_medium_ray",
    "medium_ray_check",
    "MediumCheckReport",
    "medium_voxels",
    "write_voxels",
    "SpdcSourceSpec",
    "SpdcState",
    "spdc_state",
    "momentum_correlation_quality",
    "QualityReport",
    "coincidence_amplitude",
]
