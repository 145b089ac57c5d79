import math

import numpy as np
import pytest
from scipy import integrate, optimize

from gravem.spacetime import Minkowski, Schwarzschild, SchwarzschildIsotropic, WeakField
from gravem.transport import IntegratorControls, integrate_null_geodesic, ray_from_impact_parameter


def schwarzschild_orbit_sweep(b, r_s, r_start, r_end):
    """Azimuth swept by a scattering null orbit between two areal radii, by quadrature.

    Uses u = 1/r, (du/dphi)^2 = 1/b^2 - u^2 + r_s u^3 and the substitution
    u = u_turn - s^2 to remove the endpoint singularity.
    """
    f = lambda u: 1.0 / b**2 - u * u + r_s * u**3  # noqa: E731
    u_turn = optimize.brentq(f, 0.0, 2.0 / (3.0 * r_s), xtol=1e-16, rtol=1e-15)

    def leg(r):
        s_max = math.sqrt(u_turn - 1.0 / r)
        val, _ = integrate.quad(lambda s: 2.0 * s / math.sqrt(f(u_turn - s * s)), 0.0, s_max,
                                epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    return leg(r_start) + leg(r_end), 1.0 / u_turn


def schwarzschild_deflection_oracle(b, r_s, r_start, r_end):
    """Rotation of the locally measured propagation direction between two radii."""
    sweep, _ = schwarzschild_orbit_sweep(b, r_s, r_start, r_end)

    def bearing(r, sign):
        # direction angle relative to the outward radial, in the local static frame
        f = 1.0 - r_s / r
        tangential = b / r
        radial = sign * math.sqrt(max(0.0, 1.0 - f * b * b / (r * r)) / f)
        return math.atan2(tangential, radial)

    return sweep + bearing(r_end, 1.0) - bearing(r_start, -1.0)


@pytest.fixture(scope="session")
def metrics():
    return {
        "flat": Minkowski(),
        "schwarzschild": Schwarzschild(1.0),
        "isotropic": SchwarzschildIsotropic(1.0),
        "weak": WeakField(0.5),
    }


@pytest.fixture(scope="session")
def b10_isotropic():
    m = SchwarzschildIsotropic(1.0)
    ray = ray_from_impact_parameter(m, 10.0, 50.0, inclination=0.7)
    path = integrate_null_geodesic(m, ray, 100.0, IntegratorControls(step=1e-2, sample_every=10))
    return m, path


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
