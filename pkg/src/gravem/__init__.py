"""Gravitational waves in curved backgrounds as tensor products of two
same-helicity electromagnetic waves: propagation, equivalence checks and the
laboratory-emulation helpers."""

from .errors import GravemError
from .spacetime import (
    Minkowski,
    Schwarzschild,
    SchwarzschildIsotropic,
    SpacetimeEvent,
    WeakField,
    christoffel,
    curvature_length_scale,
    evaluate_metric,
    inner_product,
    make_metric,
    validity_ratio,
)
from .transport import (
    IntegratorControls,
    NullRay,
    check_tt_gauge,
    constraint_drift,
    integrate_null_geodesic,
    make_null_ray,
    parallel_transport_tensor,
    parallel_transport_vector,
    ray_from_impact_parameter,
)
from .equivalence import (
    assemble_gw,
    check_equivalence,
    decompose_helicity,
    equivalence_report,
    helicity_frame,
    propagate_direct,
    propagate_factored,
)

__version__ = "0.1.0"
