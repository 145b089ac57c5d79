"""Flat-space plane waves, two-photon tensor states and their invariants.

Polarization vectors are unit-norm under the conjugating dot product. The
familiar unnormalised (x + iy) convention differs by a factor sqrt(2) per
vector, so ``s + i m == 2 * e_plus (x) e_plus`` for propagation along z.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInput,
    InvalidGravHelicity,
    InvalidHelicity,
    KappaOutOfRange,
    NonUnitAxis,
    NotFactorizable,
    NotHelicityEigenstate,
    NotMomentumEigenstateAlongRay,
    ZeroMomentum,
)

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])

PLUS = np.outer(X_HAT, X_HAT) - np.outer(Y_HAT, Y_HAT)  # "s"
CROSS = np.outer(X_HAT, Y_HAT) + np.outer(Y_HAT, X_HAT)  # "m"
PLUS_2D = np.array([[1.0, 0.0], [0.0, -1.0]])
CROSS_2D = np.array([[0.0, 1.0], [1.0, 0.0]])

PARALLEL_RTOL = 1e-12
RANK_RTOL = 1e-10


class NonNullFourMomentumWarning(UserWarning):
    pass


def check_kappa(kappa, operation="algebra"):
    if not (isinstance(kappa, (int, float, np.floating)) and 0.0 < kappa < 1.0):
        raise KappaOutOfRange(
            f"kappa = {kappa!r} violates the rule kappa in (0,1): a factor with kappa <= 0 or kappa >= 1 "
            "would propagate backwards along the ray",
            operation,
        )


def rotation_matrix(axis, theta):
    """Active right-handed rotation by ``theta`` about the unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if abs(n - 1.0) > 1e-12:
        raise NonUnitAxis(f"rotation axis must be a unit vector (|axis| = {n!r})", "algebra.rotate_about")
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def rotate_about(axis, theta, obj):
    """Rotate a 3- or 4-vector, or a 3x3 / 4x4 tensor, about a spatial axis.

    Four-component objects are rotated in their spatial slots only.
    """
    r = rotation_matrix(axis, theta)
    obj = np.asarray(obj)
    if obj.shape in ((4,), (4, 4)):
        big = np.eye(4)
        big[1:, 1:] = r
        r = big
    if obj.ndim == 1:
        return r @ obj
    if obj.ndim == 2:
        return r @ obj @ r.T
    raise ValueError(f"cannot rotate object of shape {obj.shape}")


def alignment_rotation(direction):
    """Rotation taking z to ``direction`` about the axis z x direction.

    The anti-aligned case uses a half turn about x, so x is kept and y flips.
    """
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    c = n[2]
    if c >= 1.0 - 1e-15 and abs(n[0]) < 1e-15 and abs(n[1]) < 1e-15:
        return np.eye(3)
    if c <= -1.0 + 1e-15 and abs(n[0]) < 1e-15 and abs(n[1]) < 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(Z_HAT, n)
    k = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    # 1/(1+c) == (1-c)/sin^2; the second form keeps precision near -z
    w = 1.0 / (1.0 + c) if c >= 0.0 else (1.0 - c) / (n[0] * n[0] + n[1] * n[1])
    return np.eye(3) + k + w * (k @ k)


def circular_vector(direction, helicity):
    """Unit helicity vector (x + i*helicity*y)/sqrt(2) carried from z to ``direction``."""
    r = alignment_rotation(direction)
    return (r[:, 0] + 1j * helicity * r[:, 1]) / math.sqrt(2.0)


@dataclass(frozen=True)
class PlaneWave:
    momentum: tuple
    helicity: int

    def __post_init__(self):
        p = tuple(float(v) for v in self.momentum)
        if len(p) != 3:
            raise ValueError("momentum must be a spatial 3-vector")
        if math.sqrt(sum(v * v for v in p)) == 0.0:
            raise ZeroMomentum("plane wave momentum must be non-zero", "algebra.make_plane_wave")
        if self.helicity not in (1, -1):
            raise InvalidHelicity(f"helicity must be +1 or -1, got {self.helicity!r}", "algebra.make_plane_wave")
        object.__setattr__(self, "momentum", p)

    @property
    def p(self):
        return np.array(self.momentum)

    @property
    def omega(self):
        return float(np.linalg.norm(self.p))

    @property
    def direction(self):
        return self.p / self.omega

    @property
    def polarization(self):
        return circular_vector(self.p, self.helicity)

    def field(self, position, t):
        """Complex vector field e * exp(i (p.r - omega t))."""
        phase = self.p @ np.asarray(position, dtype=float) - self.omega * t
        return self.polarization * np.exp(1j * phase)


def make_plane_wave(p, helicity):
    return PlaneWave(tuple(np.asarray(p, dtype=float)), helicity)


def _parallel(p, q, rtol=PARALLEL_RTOL):
    return _misalignment(p, q) <= rtol


def _misalignment(p, q):
    # 1 - cos(angle) as |u - v|^2 / 2: no cancellation for (anti)parallel input
    u = p / np.linalg.norm(p)
    v = q / np.linalg.norm(q)
    d = u - v
    return 0.5 * float(d @ d)


@dataclass(frozen=True)
class TwoPhotonState:
    """Unnormalised symmetrized product w1 (x) w2 + w2 (x) w1."""

    first: PlaneWave
    second: PlaneWave

    symmetrized = True

    @property
    def parallel(self):
        return _parallel(self.first.p, self.second.p)

    @property
    def kappa(self):
        if not self.parallel:
            return None
        w1, w2 = self.first.omega, self.second.omega
        return w1 / (w1 + w2)

    @property
    def alpha(self):
        if not self.parallel:
            return None
        return self.first.omega / self.second.omega

    @property
    def gravitational_equivalent(self):
        """True for the helicity +2 / -2 sectors with parallel momenta."""
        return self.parallel and self.first.helicity == self.second.helicity

    def exchanged(self):
        return TwoPhotonState(self.second, self.first)

    def tensor(self, position, t):
        """Spatial 3x3 tensor of the state at one event (both factors at the same event)."""
        a = self.first.field(position, t)
        b = self.second.field(position, t)
        ab = np.outer(a, b)
        return ab + ab.T

    def equivalent(self, other, rtol=1e-12):
        """Equality as an unordered pair of waves, up to ``rtol`` in momenta."""

        def same(a, b):
            return a.helicity == b.helicity and np.allclose(a.p, b.p, rtol=rtol, atol=rtol * max(a.omega, b.omega))

        return (same(self.first, other.first) and same(self.second, other.second)) or (
            same(self.first, other.second) and same(self.second, other.first)
        )

    def _key(self):
        return tuple(sorted((w.momentum, w.helicity) for w in (self.first, self.second)))

    def __eq__(self, other):
        if not isinstance(other, TwoPhotonState):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


def symmetrized_product(w1, w2):
    return TwoPhotonState(w1, w2)


def mass_squared(state):
    """-2 (omega omega' - p.p'), with the leading minus sign kept verbatim.

    Zero exactly when the momenta are parallel; negative otherwise.
    """
    w1, w2 = state.first, state.second
    return -2.0 * w1.omega * w2.omega * _misalignment(w1.p, w2.p)


def mass_squared_direct(p, q):
    """Same quantity straight from the closed form, without the stable rewrite."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return -2.0 * (np.linalg.norm(p) * np.linalg.norm(q) - p @ q)


def total_helicity(state):
    if not state.parallel:
        raise NotHelicityEigenstate(
            "momenta are not parallel, so the state is not a two-particle helicity eigenstate",
            "algebra.total_helicity",
        )
    return state.first.helicity + state.second.helicity


def four_momentum(state, strict=False):
    """(omega + omega', p + p'). Non-parallel momenta give a non-null sum; that
    raises with ``strict`` and warns otherwise."""
    w1, w2 = state.first, state.second
    total = np.concatenate([[w1.omega + w2.omega], w1.p + w2.p])
    if not state.parallel:
        msg = "momenta are not parallel: the summed four-momentum is not null"
        if strict:
            raise NotMomentumEigenstateAlongRay(msg, "algebra.four_momentum")
        warnings.warn(msg, NonNullFourMomentumWarning, stacklevel=2)
    return total


def minkowski_square(k):
    k = np.asarray(k, dtype=float)
    return k[0] ** 2 - k[1:] @ k[1:]


def equivalent_tensor_family(q, grav_helicity, kappa):
    """Two same-helicity waves with momenta kappa*q and (1-kappa)*q."""
    check_kappa(kappa, "algebra.equivalent_tensor_family")
    if grav_helicity not in (2, -2):
        raise InvalidGravHelicity(
            f"gravitational helicity must be +2 or -2, got {grav_helicity!r}", "algebra.equivalent_tensor_family"
        )
    q = np.asarray(q, dtype=float)
    if np.linalg.norm(q) == 0.0:
        raise ZeroMomentum("q must be non-zero", "algebra.equivalent_tensor_family")
    lam = grav_helicity // 2
    return TwoPhotonState(make_plane_wave(kappa * q, lam), make_plane_wave((1.0 - kappa) * q, lam))


def factorize_circular(t):
    """Return a with a a^T == T for a rank-1 symmetric 2x2 complex T.

    Raises :class:`NotFactorizable` for rank 2 (e.g. the linear "plus" and
    "cross" tensors). Sign convention: the first non-zero component of a has
    argument in [0, pi).
    """
    t = np.asarray(t, dtype=complex)
    if t.shape != (2, 2):
        raise ValueError("expected a 2x2 tensor")
    norm2 = float(np.sum(np.abs(t) ** 2))
    if norm2 == 0.0:
        raise DegenerateInput("tensor is identically zero", "algebra.factorize_circular")
    det = t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]
    if abs(det) > RANK_RTOL * norm2:
        raise NotFactorizable(
            "tensor has rank 2 and cannot be written as a vector times itself", "algebra.factorize_circular"
        )
    if abs(t[0, 0]) >= abs(t[1, 1]):
        a0 = np.sqrt(t[0, 0])
        a = np.array([a0, t[0, 1] / a0])
    else:
        a1 = np.sqrt(t[1, 1])
        a = np.array([t[0, 1] / a1, a1])
    lead = a[0] if abs(a[0]) > 1e-300 else a[1]
    ang = math.atan2(lead.imag, lead.real)
    if not 0.0 <= ang < math.pi:
        a = -a
    return a


@dataclass(frozen=True)
class PlaneWaveField:
    """Polarization times exp(i * frequency * (z - t)), travelling along z."""

    polarization: np.ndarray
    frequency: float

    def __call__(self, z, t):
        return self.polarization * np.exp(1j * self.frequency * (z - t))


def split_plane_wave(grav_helicity, omega, kappa):
    """The two vector factors whose product at equal (z, t) is the helicity-
    ``grav_helicity`` plane wave e (x) e exp(i omega (z - t))."""
    check_kappa(kappa, "algebra.split_plane_wave")
    if grav_helicity not in (2, -2):
        raise InvalidGravHelicity(f"gravitational helicity must be +2 or -2, got {grav_helicity!r}",
                                  "algebra.split_plane_wave")
    if not omega > 0:
        raise ValueError("omega must be positive")
    e = circular_vector(Z_HAT, grav_helicity // 2)
    return PlaneWaveField(e, kappa * omega), PlaneWaveField(e, (1.0 - kappa) * omega)


def symmetrized_sample(f1, f2, z, t):
    """Half the symmetrized outer product of two factor fields at one (z, t)."""
    a = f1(z, t)
    b = f2(z, t)
    return 0.5 * (np.outer(a, b) + np.outer(b, a))


def gravitational_plane_wave(grav_helicity, omega, z, t):
    e = circular_vector(Z_HAT, grav_helicity // 2)
    return np.outer(e, e) * np.exp(1j * omega * (z - t))


def sector_table(p, alpha=1.0):
    """The four parallel-momentum states of a given momentum p and ratio alpha.

    Returns rows (label, state, total helicity, mass squared, has gravitational
    equivalent).
    """
    p = np.asarray(p, dtype=float)
    rows = []
    for h1, h2 in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        st = TwoPhotonState(make_plane_wave(p, h1), make_plane_wave(alpha * p, h2))
        label = f"({'+' if h1 > 0 else '-'},{'+' if h2 > 0 else '-'})"
        rows.append((label, st, total_helicity(st), mass_squared(st), st.gravitational_equivalent))
    return rows
