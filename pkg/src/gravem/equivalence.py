"""Direct tensor transport of a gravitational wave versus transport of its
electromagnetic factors, with helicity frames and phase bookkeeping.

Phase convention used in reports: the total phase of a wave sample is its
eikonal share plus the polarization phase measured against the local
helicity frame field. For an electromagnetic factor that is
``kappa * phi + psi``; for the gravitational wave ``phi + psi_gw``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import alignment_rotation, check_kappa, rotation_matrix
from .errors import GridMismatch, NonNullMomentum, NonSymmetricInput, NonTransverseInput
from .transport import (
    DEFAULT_TOLERANCE,
    check_tt_gauge,
    parallel_transport_tensor,
    parallel_transport_vectors,
)

C0_RTOL = 1e-9
DEVIATION_FLOOR = 1e-300


@dataclass
class HelicityFrame:
    """Circular basis e_plus, e_minus (complex 4-vectors, zero time part) at an event.

    ``chol`` is the lower Cholesky factor of the spatial metric -g_ij; local
    orthonormal components of a spatial vector v are chol.T @ v.
    """

    e_plus: np.ndarray
    e_minus: np.ndarray
    direction: np.ndarray
    p: np.ndarray
    event: np.ndarray
    metric_value: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)

    def rotation(self, theta):
        """Rotation by theta about the propagation direction, acting on 4-vectors."""
        n_loc = self.chol.T @ self.direction[1:]
        n_loc = n_loc / np.linalg.norm(n_loc)
        r_loc = rotation_matrix(n_loc, theta)
        big = np.eye(4)
        big[1:, 1:] = np.linalg.solve(self.chol.T, r_loc @ self.chol.T)
        return big

    def rotate(self, theta, obj):
        r = self.rotation(theta)
        obj = np.asarray(obj)
        return r @ obj if obj.ndim == 1 else r @ obj @ r.T

    def vector_product(self, u, v):
        """Positive-definite conjugating product on spatial vectors: -g(u*, v)."""
        return -(np.conj(u) @ self.metric_value @ v)

    def tensor_product(self, a, b):
        g = self.metric_value
        return np.sum(np.conj(a) * (g @ b @ g))


@dataclass
class HelicityAmplitudes:
    c_plus: complex
    c_minus: complex
    c_zero: complex
    residual: float = 0.0

    @property
    def valid(self):
        """True when the helicity-0 piece vanishes, i.e. the input was TT."""
        return abs(self.c_zero) < C0_RTOL * (abs(self.c_plus) + abs(self.c_minus) + 1.0)


@dataclass
class GravitationalWave:
    c_plus: complex
    c_minus: complex
    frame: HelicityFrame
    phi0: float
    kappa_plus: float
    kappa_minus: float
    ray: object

    @property
    def amplitude(self):
        f = self.frame
        return self.c_plus * np.outer(f.e_plus, f.e_plus) + self.c_minus * np.outer(f.e_minus, f.e_minus)

    def tensor_at_start(self):
        f = self.frame
        return factor_sum(self.c_plus, self.c_minus, f.e_plus, f.e_minus, self.phi0, self.kappa_plus, self.kappa_minus)


@dataclass
class PolarizationTensorField:
    l: np.ndarray
    x: np.ndarray
    p: np.ndarray
    h: np.ndarray
    phase: np.ndarray
    gauge: list = field(default_factory=list)

    @property
    def amplitude(self):
        return self.h * np.exp(-1j * self.phase)[:, None, None]

    def max_gauge_residual(self):
        if not self.gauge:
            return 0.0
        return max(max(r.spatial, r.trace, r.transversality) for r in self.gauge)


@dataclass
class EquivalenceReport:
    max_deviation: float
    mean_deviation: float
    deviation: np.ndarray
    l: np.ndarray
    em_phase: np.ndarray
    gw_phase: np.ndarray
    phase_ratio: np.ndarray
    max_phase_residual: float
    max_ratio_error: float
    tolerance: float
    phase_tolerance: float
    extra: dict = field(default_factory=dict)

    @property
    def deviation_ok(self):
        return self.max_deviation < self.tolerance

    @property
    def phase_ok(self):
        return self.max_phase_residual < self.phase_tolerance and not (self.max_ratio_error >= self.phase_tolerance)

    @property
    def passed(self):
        return self.deviation_ok and self.phase_ok

    def summary(self):
        out = {
            "max_relative_deviation": self.max_deviation,
            "mean_relative_deviation": self.mean_deviation,
            "deviation_tolerance": self.tolerance,
            "max_phase_residual": self.max_phase_residual,
            "max_phase_ratio_error": self.max_ratio_error,
            "phase_ratio_median": float(np.nanmedian(self.phase_ratio)) if np.any(np.isfinite(self.phase_ratio)) else math.nan,
            "phase_tolerance": self.phase_tolerance,
            "passed": self.passed,
        }
        out.update(self.extra)
        return out


# ------------------------------------------------------------------- frames


def helicity_frame(p, metric, event, null_tolerance=1e-8):
    """Circular polarization basis transverse to p at ``event``.

    Deterministic convention: in the local orthonormal spatial frame the basis
    is (x + i y)/sqrt(2) carried from z to the propagation direction by the
    rotation about z x n (see :func:`gravem.algebra.alignment_rotation`).
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(event, dtype=float)
    g = metric(x)
    if p[0] <= 0:
        raise NonNullMomentum("p^0 must be positive", "equivalence.helicity_frame")
    norm = abs(g[0, 0]) * p[0] * p[0]
    if abs(p @ g @ p) > null_tolerance * norm:
        raise NonNullMomentum(f"momentum is not null (g(p,p) = {p @ g @ p:.3e})", "equivalence.helicity_frame")
    h = -g[1:, 1:]
    chol = np.linalg.cholesky(h)
    k = (g @ p)[1:]
    n = np.linalg.solve(h, -k)
    n_loc = chol.T @ n
    n_loc /= np.linalg.norm(n_loc)
    r = alignment_rotation(n_loc)
    e1 = np.linalg.solve(chol.T, r[:, 0])
    e2 = np.linalg.solve(chol.T, r[:, 1])
    ep = np.zeros(4, dtype=complex)
    em = np.zeros(4, dtype=complex)
    ep[1:] = (e1 + 1j * e2) / math.sqrt(2.0)
    em[1:] = (e1 - 1j * e2) / math.sqrt(2.0)
    direction = np.zeros(4)
    direction[1:] = np.linalg.solve(chol.T, n_loc)
    return HelicityFrame(ep, em, direction, p.copy(), x.copy(), g, chol)


def decompose_helicity(b, frame, tolerance=DEFAULT_TOLERANCE):
    """Project a symmetric tensor onto e+e+, e-e- and the mixed helicity-0 term."""
    b = np.asarray(b, dtype=complex)
    if not np.allclose(b, b.T, rtol=0.0, atol=1e-14 * max(1.0, float(np.max(np.abs(b))))):
        raise NonSymmetricInput("tensor must be symmetric", "equivalence.decompose_helicity")
    g = frame.metric_value
    p_low = g @ frame.p
    scale = max(float(np.max(np.abs(b))), 1e-300)
    if np.max(np.abs(p_low @ b)) / abs(frame.p[0]) > tolerance * max(1.0, scale):
        raise NonTransverseInput("tensor is not transverse to p", "equivalence.decompose_helicity")
    ep, em = frame.e_plus, frame.e_minus
    tpp = np.outer(ep, ep)
    tmm = np.outer(em, em)
    mixed = np.outer(ep, em) + np.outer(em, ep)
    cp = frame.tensor_product(tpp, b)
    cm = frame.tensor_product(tmm, b)
    c0 = frame.tensor_product(mixed, b) / 2.0
    rec = cp * tpp + cm * tmm + c0 * mixed
    residual = float(np.linalg.norm(b - rec))
    return HelicityAmplitudes(complex(cp), complex(cm), complex(c0), residual)


# ------------------------------------------------------------------ assembly


def factor_sum(c_plus, c_minus, e_plus, e_minus, phi, kappa_plus, kappa_minus):
    """Four-term symmetrized sum of electromagnetic factor products, each with
    weight c/2, factors carrying phases kappa*phi and (1-kappa)*phi."""
    out = 0
    for c, e, k in ((c_plus, e_plus, kappa_plus), (c_minus, e_minus, kappa_minus)):
        f1 = e * np.exp(1j * k * phi)
        f2 = e * np.exp(1j * (1.0 - k) * phi)
        out = out + 0.5 * c * (np.outer(f2, f1) + np.outer(f1, f2))
    return out


def assemble_gw(c_plus, c_minus, frame, phi0, kappa_plus, kappa_minus, ray=None):
    check_kappa(kappa_plus, "equivalence.assemble_gw")
    check_kappa(kappa_minus, "equivalence.assemble_gw")
    return GravitationalWave(complex(c_plus), complex(c_minus), frame, float(phi0), float(kappa_plus),
                             float(kappa_minus), ray)


def wave_on_ray(metric, path, c_plus=1.0, c_minus=0.0, phi0=0.0, kappa_plus=0.5, kappa_minus=0.5):
    """Convenience: helicity frame at the start of ``path`` plus :func:`assemble_gw`."""
    frame = helicity_frame(path.p[0], metric, path.x[0])
    return assemble_gw(c_plus, c_minus, frame, phi0, kappa_plus, kappa_minus, path)


# --------------------------------------------------------------- propagation


def _gauge_reports(metric, path, amplitudes, tolerance):
    return [check_tt_gauge(b, p, metric, x, tolerance) for b, p, x in zip(amplitudes, path.p, path.x)]


def propagate_direct(wave, metric, tolerance=1e-8):
    """Parallel-transport the full polarization tensor along the carrier ray.

    The eikonal phase is constant along its own null ray, so phi stays phi0.
    Samples are returned in TT gauge (a shift along p removes the time
    components that transport generates in curved charts).
    """
    path = wave.ray
    b = parallel_transport_tensor(metric, path, wave.amplitude, tt_gauge=True)
    phase = np.full(len(path), wave.phi0)
    h = b * np.exp(1j * phase)[:, None, None]
    return PolarizationTensorField(path.l, path.x, path.p, h, phase, _gauge_reports(metric, path, b, tolerance))


def propagate_factored(wave, metric, tolerance=1e-8):
    """Transport e+ and e- as electromagnetic polarizations, then rebuild the
    tensor from the four weighted factor products."""
    path = wave.ray
    f = wave.frame
    vecs = parallel_transport_vectors(metric, path, [f.e_plus, f.e_minus], tt_gauge=True)
    phase = np.full(len(path), wave.phi0)
    h = np.array(
        [
            factor_sum(wave.c_plus, wave.c_minus, ep, em, ph, wave.kappa_plus, wave.kappa_minus)
            for ep, em, ph in zip(vecs[0], vecs[1], phase)
        ]
    )
    amps = h * np.exp(-1j * phase)[:, None, None]
    field_ = PolarizationTensorField(path.l, path.x, path.p, h, phase, _gauge_reports(metric, path, amps, tolerance))
    field_.vectors = vecs
    return field_


# ---------------------------------------------------------------------- phase


def frames_along(metric, path):
    return [helicity_frame(p, metric, x) for p, x in zip(path.p, path.x)]


def em_polarization_phase(frames, vectors):
    """Unwrapped arg <frame e+, transported e+> along the path."""
    raw = np.array([np.angle(f.vector_product(f.e_plus, v)) for f, v in zip(frames, vectors)])
    return np.unwrap(raw)


def gw_polarization_phase(frames, tensors):
    raw = np.array(
        [np.angle(f.tensor_product(np.outer(f.e_plus, f.e_plus), b)) for f, b in zip(frames, tensors)]
    )
    return np.unwrap(raw)


def phase_series(metric, path, phi0=1.0, kappa=0.5, frames=None, return_transport=False):
    """EM-factor and GW total phases for a pure helicity +2 wave on ``path``.

    The EM phase comes from vector transport of e+, the GW phase from direct
    tensor transport of e+ (x) e+, so the comparison crosses code paths.
    """
    frames = frames or frames_along(metric, path)
    f0 = frames[0]
    vec = parallel_transport_vectors(metric, path, [f0.e_plus], tt_gauge=True)[0]
    ten = parallel_transport_tensor(metric, path, np.outer(f0.e_plus, f0.e_plus), tt_gauge=True)
    psi_em = em_polarization_phase(frames, vec)
    psi_gw = gw_polarization_phase(frames, ten)
    phi = np.full(len(path), float(phi0))
    if return_transport:
        return kappa * phi + psi_em, phi + psi_gw, vec, ten
    return kappa * phi + psi_em, phi + psi_gw


def relative_deviation(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    num = np.linalg.norm((a - b).reshape(len(a), -1), axis=1)
    den = np.maximum(np.linalg.norm(a.reshape(len(a), -1), axis=1), DEVIATION_FLOOR)
    return num / den


def equivalence_report(wave_a, wave_b, em_phase, gw_phase, tolerance=1e-7, phase_tolerance=1e-9,
                       phase_floor=1e-6):
    if len(wave_a.l) != len(wave_b.l) or not np.array_equal(wave_a.l, wave_b.l):
        raise GridMismatch("the two fields are sampled on different grids", "equivalence.equivalence_report")
    em = np.asarray(em_phase, dtype=float)
    gw = np.asarray(gw_phase, dtype=float)
    if em.shape != gw.shape or len(em) != len(wave_a.l):
        raise GridMismatch("phase series do not match the field sampling", "equivalence.equivalence_report")
    dev = relative_deviation(wave_a.h, wave_b.h)
    ratio = np.full(len(em), np.nan)
    ok = np.abs(em) >= phase_floor
    ratio[ok] = gw[ok] / em[ok]
    residual = float(np.max(np.abs(gw - 2.0 * em))) if len(em) else 0.0
    ratio_err = float(np.max(np.abs(ratio[ok] - 2.0))) if np.any(ok) else math.nan
    return EquivalenceReport(
        max_deviation=float(np.max(dev)),
        mean_deviation=float(np.mean(dev)),
        deviation=dev,
        l=np.asarray(wave_a.l),
        em_phase=em,
        gw_phase=gw,
        phase_ratio=ratio,
        max_phase_residual=residual,
        max_ratio_error=ratio_err,
        tolerance=tolerance,
        phase_tolerance=phase_tolerance,
    )


@dataclass
class EquivalenceRun:
    wave: GravitationalWave
    direct: PolarizationTensorField
    factored: PolarizationTensorField
    report: EquivalenceReport
    end_amplitudes: HelicityAmplitudes


def check_equivalence(metric, path, c_plus=1.0, c_minus=0.0, phi0=1.0, kappa_plus=0.5, kappa_minus=0.5,
                      tolerance=1e-7, phase_tolerance=1e-9, gauge_tolerance=1e-8):
    """Full comparison on one ray: direct vs factored, gauge, non-mixing, phase doubling."""
    wave = wave_on_ray(metric, path, c_plus, c_minus, phi0, kappa_plus, kappa_minus)
    direct = propagate_direct(wave, metric, gauge_tolerance)
    factored = propagate_factored(wave, metric, gauge_tolerance)
    frames = frames_along(metric, path)
    em, gw, _, pure = phase_series(metric, path, phi0, 0.5, frames, return_transport=True)
    report = equivalence_report(direct, factored, em, gw, tolerance, phase_tolerance)
    end = decompose_helicity(direct.amplitude[-1], frames[-1])
    # pure helicity +2 and -2 inputs (the -2 one is the complex conjugate, the connection being real)
    plus = decompose_helicity(pure[-1], frames[-1])
    minus = decompose_helicity(np.conj(pure[-1]), frames[-1])
    alt = propagate_factored(
        assemble_gw(c_plus, c_minus, wave.frame, phi0, 1.0 - kappa_plus if kappa_plus != 0.5 else 0.3,
                    1.0 - kappa_minus if kappa_minus != 0.5 else 0.7, path),
        metric,
        gauge_tolerance,
    )
    report.extra.update(
        {
            "mixing_plus_to_minus": abs(plus.c_minus) / abs(plus.c_plus),
            "mixing_minus_to_plus": abs(minus.c_plus) / abs(minus.c_minus),
            "kappa_dependence": float(np.max(relative_deviation(factored.h, alt.h))),
            "max_gauge_residual_direct": direct.max_gauge_residual(),
            "max_gauge_residual_factored": factored.max_gauge_residual(),
            "end_c_plus_abs": abs(end.c_plus),
            "end_c_minus_abs": abs(end.c_minus),
            "end_c_zero_abs": abs(end.c_zero),
        }
    )
    return EquivalenceRun(wave, direct, factored, report, end)
