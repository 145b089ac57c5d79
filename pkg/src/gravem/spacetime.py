"""Background spacetimes: metric evaluation, Christoffel symbols, contractions
and the geometric-optics validity estimate.

Conventions: signature (+,-,-,-), c = 1, coordinates ordered (t, x1, x2, x3).
Metrics with a Cartesian-like spatial chart (``cartesian`` and ``isotropic``)
use (t, x, y, z); the Schwarzschild chart uses (t, r, theta, phi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GridFileError,
    NonPositiveWavelength,
    NumericalDerivativeFailure,
    OutsideChartDomain,
)

ETA = np.diag([1.0, -1.0, -1.0, -1.0])

# order of the 10 independent components in grid files
GRID_COMPONENTS = ((0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3))

CARTESIAN_CHARTS = ("cartesian", "isotropic")


@dataclass(frozen=True)
class SpacetimeEvent:
    coords: tuple
    chart: str = "cartesian"

    def __post_init__(self):
        c = tuple(float(v) for v in self.coords)
        if len(c) != 4:
            raise ValueError(f"an event needs 4 coordinates, got {len(c)}")
        if not all(math.isfinite(v) for v in c):
            raise ValueError(f"event coordinates must be finite, got {c}")
        object.__setattr__(self, "coords", c)

    @property
    def array(self):
        return np.array(self.coords)


def _coords(event, metric=None):
    if isinstance(event, SpacetimeEvent):
        if metric is not None and event.chart != metric.chart:
            raise OutsideChartDomain(
                f"event is in chart {event.chart!r} but metric {metric.name!r} uses chart {metric.chart!r}",
                "spacetime.evaluate_metric",
            )
        return event.array
    x = np.asarray(event, dtype=float)
    if x.shape != (4,):
        raise ValueError(f"expected 4 coordinates, got shape {x.shape}")
    return x


def _fd_step(x):
    return 1e-5 * max(1.0, abs(x))


class Metric:
    """Base class for prescribed backgrounds.

    Subclasses implement :meth:`_evaluate` and may override :meth:`_christoffel`
    with closed forms; the default falls back to fourth-order central
    differences of the metric.
    """

    name = "metric"
    chart = "cartesian"
    # static and spherically symmetric about the spatial origin
    spherical = False

    @property
    def params(self):
        return {}

    @property
    def cartesian(self):
        return self.chart in CARTESIAN_CHARTS

    def check_domain(self, x):
        if not (math.isfinite(x[0]) and math.isfinite(x[1]) and math.isfinite(x[2]) and math.isfinite(x[3])):
            raise OutsideChartDomain(f"non-finite coordinates {x}", "spacetime.evaluate_metric")

    def __call__(self, x):
        x = _coords(x, self)
        self.check_domain(x)
        return self._evaluate(x)

    def _evaluate(self, x):
        raise NotImplementedError

    def christoffel(self, x):
        x = _coords(x, self)
        self.check_domain(x)
        return self._christoffel(x)

    def _christoffel(self, x):
        return finite_difference_christoffel(self, x)

    def connection(self, x, p):
        """M^mu_beta = Gamma^mu_{alpha beta} p^alpha, the transport matrix along p."""
        return np.tensordot(self.christoffel(x), p, axes=([1], [0]))

    def kretschmann(self, x):
        """Kretschmann scalar R_abcd R^abcd (numerical by default)."""
        return numerical_kretschmann(self, x)

    def curvature_length(self, x):
        k = abs(self.kretschmann(x))
        if k == 0.0:
            return math.inf
        return k ** -0.25

    def flat(self):
        """True when the metric is globally flat (all curvature parameters zero)."""
        return False

    def __repr__(self):
        p = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({p})"


class Minkowski(Metric):
    name = "minkowski"
    chart = "cartesian"
    spherical = True

    def _evaluate(self, x):
        return ETA.copy()

    def _christoffel(self, x):
        return np.zeros((4, 4, 4))

    def connection(self, x, p):
        self.check_domain(x)
        return np.zeros((4, 4))

    def kretschmann(self, x):
        return 0.0

    def flat(self):
        return True


class StaticIsotropicMetric(Metric):
    """ds^2 = A(rho) dt^2 - B(rho) (dx^2 + dy^2 + dz^2), rho = |(x, y, z)|."""

    chart = "cartesian"
    spherical = True

    def profile(self, rho):
        """Return A, dA/drho, B, dB/drho."""
        raise NotImplementedError

    def _rho(self, x):
        return math.sqrt(x[1] * x[1] + x[2] * x[2] + x[3] * x[3])

    def _evaluate(self, x):
        a, _, b, _ = self.profile(self._rho(x))
        return np.diag([a, -b, -b, -b])

    def _christoffel(self, x):
        rho = self._rho(x)
        a, da, b, db = self.profile(rho)
        g = np.zeros((4, 4, 4))
        if rho == 0.0:
            return g
        u = x[1:] / rho
        grad_a = da * u
        grad_b = db * u
        g[0, 0, 1:] = 0.5 * grad_a / a
        g[0, 1:, 0] = g[0, 0, 1:]
        g[1:, 0, 0] = 0.5 * grad_a / b
        eye = np.eye(3)
        g[1:, 1:, 1:] = (
            eye[:, None, :] * grad_b[None, :, None]
            + eye[:, :, None] * grad_b[None, None, :]
            - eye[None, :, :] * grad_b[:, None, None]
        ) / (2.0 * b)
        return g

    def connection(self, x, p):
        t, x1, x2, x3 = x.tolist()
        p0, p1, p2, p3 = p.tolist()
        self.check_domain((t, x1, x2, x3))
        rho = math.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
        a, da, b, db = self.profile(rho)
        # unit radial vector times derivatives, scaled by 1/2A and 1/2B
        ka = da / (rho * 2.0 * a)
        kb = db / (rho * 2.0 * b)
        a1, a2, a3 = ka * x1, ka * x2, ka * x3
        c = a / b
        b1, b2, b3 = kb * x1, kb * x2, kb * x3
        bp = b1 * p1 + b2 * p2 + b3 * p3
        return np.array(
            [
                [a1 * p1 + a2 * p2 + a3 * p3, a1 * p0, a2 * p0, a3 * p0],
                [c * a1 * p0, bp, p1 * b2 - b1 * p2, p1 * b3 - b1 * p3],
                [c * a2 * p0, p2 * b1 - b2 * p1, bp, p2 * b3 - b2 * p3],
                [c * a3 * p0, p3 * b1 - b3 * p1, p3 * b2 - b3 * p2, bp],
            ]
        )


class SchwarzschildIsotropic(StaticIsotropicMetric):
    """Schwarzschild exterior in isotropic coordinates (t, x, y, z)."""

    name = "schwarzschild"
    chart = "isotropic"

    def __init__(self, r_s=1.0):
        if r_s < 0:
            raise ValueError("r_s must be non-negative")
        self.r_s = float(r_s)

    @property
    def params(self):
        return {"r_s": self.r_s}

    def check_domain(self, x):
        super().check_domain(x)
        rho = self._rho(x)
        if rho <= 0.25 * self.r_s or (rho == 0.0):
            raise OutsideChartDomain(
                f"isotropic radius {rho:.6g} is at or inside the horizon rho = r_s/4 = {0.25 * self.r_s:.6g}",
                "spacetime.evaluate_metric",
            )

    def profile(self, rho):
        q = self.r_s / (4.0 * rho)
        ratio = (1.0 - q) / (1.0 + q)
        a = ratio * ratio
        b = (1.0 + q) ** 4
        da = 4.0 * q * (1.0 - q) / (rho * (1.0 + q) ** 3)
        db = -4.0 * q * (1.0 + q) ** 3 / rho
        return a, da, b, db

    def areal_radius(self, rho):
        return rho * (1.0 + self.r_s / (4.0 * rho)) ** 2

    def kretschmann(self, x):
        x = _coords(x, self)
        self.check_domain(x)
        r = self.areal_radius(self._rho(x))
        return 12.0 * self.r_s**2 / r**6

    def flat(self):
        return self.r_s == 0.0


class WeakField(StaticIsotropicMetric):
    """Linearised lensing metric eta + 2*Phi*diag(1, 1, 1, 1), Phi = -M/rho (G = 1)."""

    name = "weak_field"
    chart = "cartesian"

    def __init__(self, mass=0.5):
        if mass < 0:
            raise ValueError("mass must be non-negative")
        self.mass = float(mass)

    @property
    def params(self):
        return {"mass": self.mass}

    def check_domain(self, x):
        super().check_domain(x)
        rho = self._rho(x)
        if rho <= 2.0 * self.mass or rho == 0.0:
            raise OutsideChartDomain(
                f"radius {rho:.6g} is inside rho = 2M where g_00 vanishes", "spacetime.evaluate_metric"
            )

    def profile(self, rho):
        m = self.mass
        return 1.0 - 2.0 * m / rho, 2.0 * m / rho**2, 1.0 + 2.0 * m / rho, -2.0 * m / rho**2

    def kretschmann(self, x):
        if self.mass == 0.0:
            return 0.0
        return numerical_kretschmann(self, x)

    def flat(self):
        return self.mass == 0.0


class Schwarzschild(Metric):
    """Schwarzschild exterior in Schwarzschild coordinates (t, r, theta, phi)."""

    name = "schwarzschild"
    chart = "schwarzschild"
    spherical = True

    def __init__(self, r_s=1.0):
        if r_s < 0:
            raise ValueError("r_s must be non-negative")
        self.r_s = float(r_s)

    @property
    def params(self):
        return {"r_s": self.r_s}

    def check_domain(self, x):
        super().check_domain(x)
        r, th = x[1], x[2]
        if r <= self.r_s or r <= 0.0:
            raise OutsideChartDomain(
                f"r = {r:.6g} is at or inside the horizon r_s = {self.r_s:.6g}", "spacetime.evaluate_metric"
            )
        if math.sin(th) == 0.0 or not 0.0 < th < math.pi:
            raise OutsideChartDomain(f"theta = {th!r} is on the polar axis", "spacetime.evaluate_metric")

    def _evaluate(self, x):
        r, th = x[1], x[2]
        f = 1.0 - self.r_s / r
        s = math.sin(th)
        return np.diag([f, -1.0 / f, -r * r, -r * r * s * s])

    def _christoffel(self, x):
        rs = self.r_s
        r, th = x[1], x[2]
        f = 1.0 - rs / r
        s, c = math.sin(th), math.cos(th)
        g = np.zeros((4, 4, 4))
        g[0, 0, 1] = g[0, 1, 0] = rs / (2.0 * r * r * f)
        g[1, 0, 0] = rs * f / (2.0 * r * r)
        g[1, 1, 1] = -rs / (2.0 * r * r * f)
        g[1, 2, 2] = -r * f
        g[1, 3, 3] = -r * f * s * s
        g[2, 1, 2] = g[2, 2, 1] = 1.0 / r
        g[2, 3, 3] = -s * c
        g[3, 1, 3] = g[3, 3, 1] = 1.0 / r
        g[3, 2, 3] = g[3, 3, 2] = c / s
        return g

    def connection(self, x, p):
        x = x.tolist()
        self.check_domain(x)
        rs = self.r_s
        r, th = x[1], x[2]
        p0, p1, p2, p3 = p.tolist()
        f = 1.0 - rs / r
        s, c = math.sin(th), math.cos(th)
        a = rs / (2.0 * r * r * f)
        cot = c / s
        return np.array(
            [
                [a * p1, a * p0, 0.0, 0.0],
                [rs * f / (2.0 * r * r) * p0, -a * p1, -r * f * p2, -r * f * s * s * p3],
                [0.0, p2 / r, p1 / r, -s * c * p3],
                [0.0, p3 / r, cot * p3, p1 / r + cot * p2],
            ]
        )

    def kretschmann(self, x):
        x = _coords(x, self)
        self.check_domain(x)
        return 12.0 * self.r_s**2 / x[1] ** 6

    def flat(self):
        return self.r_s == 0.0


class GridMetric(Metric):
    """Metric sampled on a rectilinear grid, read from a whitespace table.

    Each row holds 4 coordinates followed by the 10 independent components in
    the order 00 01 02 03 11 12 13 22 23 33. Coordinates that take a single
    value are treated as symmetry directions. Christoffels always come from
    finite differences of the interpolant.
    """

    name = "grid"

    def __init__(self, axes, values, chart="cartesian", source=None, method=None):
        from scipy.interpolate import RegularGridInterpolator

        self.chart = chart
        self.source = source
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.active = [i for i, a in enumerate(self.axes) if len(a) > 1]
        if not self.active:
            raise GridFileError("grid has a single node; nothing to interpolate", "spacetime.read_grid_metric")
        pts = [self.axes[i] for i in self.active]
        if method is None:
            method = "cubic" if all(len(a) >= 4 for a in pts) else "linear"
        self.method = method
        vals = self.values.reshape([len(a) for a in pts] + [10])
        self._interp = RegularGridInterpolator(pts, vals, method=method, bounds_error=False, fill_value=np.nan)

    @property
    def params(self):
        return {"source": self.source, "method": self.method}

    def _components_to_matrix(self, comps):
        g = np.empty(comps.shape[:-1] + (4, 4))
        for k, (i, j) in enumerate(GRID_COMPONENTS):
            g[..., i, j] = comps[..., k]
            g[..., j, i] = comps[..., k]
        return g

    def _sample(self, points):
        pts = np.atleast_2d(points)[:, self.active]
        comps = self._interp(pts)
        if np.any(np.isnan(comps)):
            raise OutsideChartDomain("event lies outside the sampled grid", "spacetime.evaluate_metric")
        return self._components_to_matrix(comps)

    def _evaluate(self, x):
        return self._sample(x)[0]

    def _christoffel(self, x):
        # one batched interpolator call for the whole stencil
        offsets = (2.0, 1.0, -1.0, -2.0)
        pts = []
        hs = []
        for c in range(4):
            h = _fd_step(x[c])
            hs.append(h)
            for o in offsets:
                y = x.copy()
                y[c] += o * h
                pts.append(y)
        gs = self._sample(np.array(pts)).reshape(4, 4, 4, 4)
        dg = np.empty((4, 4, 4))
        for c in range(4):
            if c not in self.active:
                dg[c] = 0.0
                continue
            f2, f1, m1, m2 = gs[c]
            dg[c] = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * hs[c])
        return _christoffel_from_derivatives(self._evaluate(x), dg)


def read_grid_metric(path, chart="cartesian", method=None):
    """Load a :class:`GridMetric` from a plain-text grid file."""
    try:
        data = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise GridFileError(f"{path}: {exc}", "spacetime.read_grid_metric") from exc
    if data.shape[1] != 14:
        raise GridFileError(
            f"{path}: expected 14 columns (4 coordinates + 10 components), got {data.shape[1]}",
            "spacetime.read_grid_metric",
        )
    axes = [np.unique(data[:, i]) for i in range(4)]
    n = int(np.prod([len(a) for a in axes]))
    if n != data.shape[0]:
        raise GridFileError(
            f"{path}: {data.shape[0]} rows do not form a full rectilinear grid ({n} nodes expected)",
            "spacetime.read_grid_metric",
        )
    order = np.lexsort([data[:, 3], data[:, 2], data[:, 1], data[:, 0]])
    values = data[order, 4:]
    return GridMetric(axes, values, chart=chart, source=str(path), method=method)


def write_grid_metric(metric, axes, path):
    """Sample ``metric`` on the tensor grid ``axes`` and write a grid file."""
    mesh = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    with open(path, "w") as fh:
        fh.write(f"# chart: {metric.chart}\n")
        for x in pts:
            g = metric(x)
            comps = [g[i, j] for i, j in GRID_COMPONENTS]
            fh.write(" ".join(f"{v:.17g}" for v in list(x) + comps) + "\n")


def _christoffel_from_derivatives(g, dg):
    # dg[c, a, b] = d_c g_ab
    ginv = np.linalg.inv(g)
    lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)  # [nu, a, b]
    gam = np.einsum("mn,nab->mab", ginv, lower)
    return 0.5 * (gam + gam.transpose(0, 2, 1))


def finite_difference_christoffel(metric, x):
    """Christoffels from fourth-order central differences of the metric."""
    x = np.asarray(x, dtype=float)
    dg = np.empty((4, 4, 4))
    for c in range(4):
        h = _fd_step(x[c])
        if x[c] + h == x[c]:
            raise NumericalDerivativeFailure(f"step {h:g} underflows at coordinate {x[c]:g}", "spacetime.christoffel")
        vals = []
        for o in (2.0, 1.0, -1.0, -2.0):
            y = x.copy()
            y[c] += o * h
            metric.check_domain(y)
            vals.append(metric._evaluate(y))
        f2, f1, m1, m2 = vals
        dg[c] = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h)
    return _christoffel_from_derivatives(metric._evaluate(x), dg)


def riemann(metric, x):
    """R^r_{s m n} from Christoffels and their finite-difference derivatives."""
    x = np.asarray(x, dtype=float)
    metric.check_domain(x)
    gam = metric._christoffel(x)
    dgam = np.empty((4, 4, 4, 4))
    for c in range(4):
        h = 1e-4 * max(1.0, abs(x[c]))
        vals = []
        for o in (2.0, 1.0, -1.0, -2.0):
            y = x.copy()
            y[c] += o * h
            metric.check_domain(y)
            vals.append(metric._christoffel(y))
        f2, f1, m1, m2 = vals
        dgam[c] = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h)
    # dgam[m, r, a, b] = d_m Gamma^r_ab
    r = (
        np.einsum("mrns->rsmn", dgam)
        - np.einsum("nrms->rsmn", dgam)
        + np.einsum("rml,lns->rsmn", gam, gam)
        - np.einsum("rnl,lms->rsmn", gam, gam)
    )
    return r


def numerical_kretschmann(metric, x):
    x = np.asarray(x, dtype=float)
    r = riemann(metric, x)
    g = metric._evaluate(x)
    gi = np.linalg.inv(g)
    low = np.einsum("ar,rsmn->asmn", g, r)
    up = np.einsum("rsmn,bs,cm,dn->rbcd", r, gi, gi, gi)
    return float(np.einsum("abcd,abcd->", low, up))


# ---------------------------------------------------------------- operations


def evaluate_metric(metric, event):
    return metric(event)


def christoffel(metric, event, method="auto"):
    """Gamma^mu_{alpha beta} at ``event``; ``method`` is "auto" or "fd"."""
    x = _coords(event, metric)
    if method == "fd":
        metric.check_domain(x)
        return finite_difference_christoffel(metric, x)
    return metric.christoffel(x)


def inner_product(u, v, metric, event, conjugate=False):
    """gamma_{mu nu} u^mu v^nu; with ``conjugate`` the first slot is conjugated."""
    g = metric(event)
    u = np.asarray(u)
    if conjugate:
        u = np.conj(u)
    return u @ g @ np.asarray(v)


def conjugate_inner_product(u, v, metric, event):
    return inner_product(u, v, metric, event, conjugate=True)


def curvature_length_scale(metric, event):
    """L_gamma = K**(-1/4) with K the Kretschmann scalar; inf for flat space."""
    x = _coords(event, metric)
    metric.check_domain(x)
    if metric.flat():
        return math.inf
    return metric.curvature_length(x)


@dataclass
class ValidityReport:
    wavelength: float
    curvature_length: float
    ratio: float
    threshold: float
    verdict: str = field(default="pass")

    @property
    def ok(self):
        return self.verdict == "pass"


def validity_ratio(wavelength, metric, event, threshold=0.01):
    if not wavelength > 0:
        raise NonPositiveWavelength(f"wavelength must be positive, got {wavelength!r}", "spacetime.validity_ratio")
    length = curvature_length_scale(metric, event)
    ratio = 0.0 if math.isinf(length) else wavelength / length
    if ratio < threshold:
        verdict = "pass"
    elif ratio < 10.0 * threshold:
        verdict = "warn"
    else:
        verdict = "fail"
    return ValidityReport(wavelength, length, ratio, threshold, verdict)


def spatial_cartesian_to_chart(metric, xyz):
    """Map a Cartesian spatial point to the metric's spatial chart coordinates."""
    xyz = np.asarray(xyz, dtype=float)
    if metric.chart in CARTESIAN_CHARTS:
        return xyz.copy()
    if metric.chart == "schwarzschild":
        r = float(np.linalg.norm(xyz))
        return np.array([r, math.acos(xyz[2] / r), math.atan2(xyz[1], xyz[0])])
    raise ValueError(f"no Cartesian embedding for chart {metric.chart!r}")


def chart_to_spatial_cartesian(metric, coords):
    c = np.asarray(coords, dtype=float)
    if metric.chart in CARTESIAN_CHARTS:
        return c.copy()
    if metric.chart == "schwarzschild":
        r, th, ph = c
        return np.array([r * math.sin(th) * math.cos(ph), r * math.sin(th) * math.sin(ph), r * math.cos(th)])
    raise ValueError(f"no Cartesian embedding for chart {metric.chart!r}")


def cartesian_jacobian(metric, coords):
    """d(x, y, z)/d(chart coords) at a spatial point (3x3)."""
    if metric.chart in CARTESIAN_CHARTS:
        return np.eye(3)
    if metric.chart == "schwarzschild":
        r, th, ph = coords
        st, ct, sp, cp = math.sin(th), math.cos(th), math.sin(ph), math.cos(ph)
        return np.array(
            [
                [st * cp, r * ct * cp, -r * st * sp],
                [st * sp, r * ct * sp, r * st * cp],
                [ct, -r * st, 0.0],
            ]
        )
    raise ValueError(f"no Cartesian embedding for chart {metric.chart!r}")


BUILTIN_METRICS = {
    ("minkowski", "cartesian"): lambda p: Minkowski(),
    ("schwarzschild", "schwarzschild"): lambda p: Schwarzschild(**p),
    ("schwarzschild", "isotropic"): lambda p: SchwarzschildIsotropic(**p),
    ("weak_field", "cartesian"): lambda p: WeakField(**p),
}


def make_metric(name, chart, params=None, grid_file=None):
    """Build a metric from its scenario description."""
    params = dict(params or {})
    if name == "grid":
        if grid_file is None:
            raise GridFileError("metric 'grid' needs a grid_file", "spacetime.make_metric")
        return read_grid_metric(grid_file, chart=chart, method=params.get("method"))
    try:
        factory = BUILTIN_METRICS[(name, chart)]
    except KeyError:
        known = ", ".join(f"{n}/{c}" for n, c in BUILTIN_METRICS)
        raise ValueError(f"unknown metric/chart {name}/{chart}; known: {known}, grid/<chart>") from None
    return factory(params)
