"""Scenario files: a sectioned TOML document describing a background, rays, a
wave, integrator controls and the optional emulation blocks.

Geometry in a scenario (ray data, step sizes, medium grids) is expressed in
the coordinates of the scaled system; ``[scale] s`` records the factor that
relates them to the original background, whose parameters stay unscaled.
"""
from __future__ import annotations

import difflib
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .algebra import check_kappa
from .emulation import ConformalScale, SpdcSourceSpec, conformal_scale_metric, scale_event
from .errors import ConfigSyntaxError, ConstraintViolation, GravemError, KappaOutOfRange, UnknownKey
from .spacetime import BUILTIN_METRICS, make_metric
from .transport import IntegratorControls, make_null_ray, ray_from_impact_parameter

INTEGRATORS = ("rk4", "rk45", "dop853")
METRIC_PARAMS = {"minkowski": (), "schwarzschild": ("r_s",), "weak_field": ("mass",), "grid": ("method",)}


@dataclass(frozen=True)
class MetricSpec:
    name: str
    chart: str
    params: tuple = ()
    grid_file: str | None = None

    @property
    def param_dict(self):
        return dict(self.params)


@dataclass(frozen=True)
class RaySpec:
    frequency: float = 1.0
    impact_parameter: float | None = None
    distance: float | None = None
    inclination: float = 0.0
    event: tuple | None = None
    direction: tuple | None = None
    c_plus: complex | None = None
    c_minus: complex | None = None
    kappa_plus: float | None = None
    kappa_minus: float | None = None

    @property
    def wavelength(self):
        return 2.0 * math.pi / self.frequency


@dataclass(frozen=True)
class WaveSpec:
    c_plus: complex = 1.0 + 0.0j
    c_minus: complex = 0.0j
    kappa_plus: float = 0.5
    kappa_minus: float = 0.5
    phi0: float = 1.0


@dataclass(frozen=True)
class RunSpec:
    integrator: str = "rk4"
    step: float = 0.01
    l_end: float = 100.0
    sample_every: int = 10
    rtol: float = 1e-10
    atol: float = 1e-12
    project_every: int = 0
    tolerance: float = 1e-7
    gauge_tolerance: float = 1e-8
    phase_tolerance: float = 1e-9
    transport_tolerance: float = 1e-9
    null_tolerance: float = 1e-9
    mixing_tolerance: float = 1e-9
    kappa_tolerance: float = 1e-12
    validity_threshold: float = 0.01
    workers: int = 1
    random_rays: int = 0
    seed: int = 0
    b_range: tuple = (5.0, 100.0)

    def controls(self):
        return IntegratorControls(
            method=self.integrator,
            step=self.step,
            rtol=self.rtol,
            atol=self.atol,
            sample_every=self.sample_every,
            project_every=self.project_every,
            tolerance=self.transport_tolerance,
        )


@dataclass(frozen=True)
class ScaleSpec:
    s: float = 1.0
    apply: float = 1.0


@dataclass(frozen=True)
class SourceSpec:
    pump_frequency: float
    kappa: float = 0.5
    crystal_length: float = 0.02
    pump_wavenumber: float | None = None
    pump_wavelength: float | None = 405e-9
    beam_width: float = 5e-6
    plus_amplitude: complex = 1.0 + 0.0j
    minus_amplitude: complex = 0.0j
    degenerate: bool = False
    quality_threshold: float = 0.2
    direction: tuple = (0.0, 0.0, 1.0)
    length_unit_m: float = 1.0

    @property
    def wavenumber(self):
        if self.pump_wavenumber is not None:
            return self.pump_wavenumber
        return 2.0 * math.pi / self.pump_wavelength

    def spdc(self):
        return SpdcSourceSpec(
            pump_frequency=self.pump_frequency,
            kappa=self.kappa,
            crystal_length=self.crystal_length,
            pump_wavenumber=self.wavenumber,
            beam_width=self.beam_width,
            plus_amplitude=self.plus_amplitude,
            minus_amplitude=self.minus_amplitude,
            degenerate=self.degenerate,
        )


@dataclass(frozen=True)
class StateSpec:
    p1: tuple
    h1: int
    p2: tuple
    h2: int


@dataclass(frozen=True)
class AlgebraSpec:
    momentum: tuple = (0.0, 0.0, 1.0)
    alpha: float = 1.0
    kappas: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    random_pairs: int = 1000
    states: tuple = ()


@dataclass(frozen=True)
class MediumSpec:
    x: tuple = (5.0, 15.0, 3)
    y: tuple = (-5.0, 5.0, 3)
    z: tuple = (-5.0, 5.0, 3)
    t: float = 0.0
    impact_parameters: tuple = ()
    distance: float = 1000.0
    l_end: float = 2000.0
    step: float = 1.0
    tolerance: float = 0.01

    def axes(self):
        return [np.linspace(a, b, int(n)) for a, b, n in (self.x, self.y, self.z)]


@dataclass(frozen=True)
class Scenario:
    metric: MetricSpec
    rays: tuple = ()
    wave: WaveSpec = field(default_factory=WaveSpec)
    run: RunSpec = field(default_factory=RunSpec)
    scale: ScaleSpec = field(default_factory=ScaleSpec)
    source: SourceSpec | None = None
    algebra: AlgebraSpec = field(default_factory=AlgebraSpec)
    medium: MediumSpec | None = None
    title: str = ""

    def build_metric(self):
        base = make_metric(self.metric.name, self.metric.chart, self.metric.param_dict, self.metric.grid_file)
        if self.scale.s == 1.0:
            return base
        return conformal_scale_metric(base, self.scale.s)

    def all_rays(self):
        """Configured rays followed by the seeded random ones."""
        return tuple(self.rays) + random_rays(self)

    def wave_for(self, ray):
        w = self.wave
        pick = lambda a, b: b if a is None else a  # noqa: E731
        return replace(
            w,
            c_plus=pick(ray.c_plus, w.c_plus),
            c_minus=pick(ray.c_minus, w.c_minus),
            kappa_plus=pick(ray.kappa_plus, w.kappa_plus),
            kappa_minus=pick(ray.kappa_minus, w.kappa_minus),
        )


def random_rays(scenario):
    """Rays with impact parameter in ``run.b_range`` (scaled units), random
    inclination, random helicity amplitudes and random kappas."""
    n = scenario.run.random_rays
    if n <= 0:
        return ()
    rng = np.random.default_rng(scenario.run.seed)
    lo, hi = scenario.run.b_range
    s = scenario.scale.s
    out = []
    for _ in range(n):
        b = float(rng.uniform(lo, hi))
        inc = float(rng.uniform(0.2, 1.4))
        cp = complex(*rng.normal(size=2))
        cm = complex(*rng.normal(size=2))
        kp, km = (float(v) for v in rng.uniform(0.05, 0.95, size=2))
        out.append(RaySpec(frequency=1.0 / s, impact_parameter=b, distance=max(50.0 * s, 2.0 * b),
                           inclination=inc, c_plus=cp, c_minus=cm, kappa_plus=kp, kappa_minus=km))
    return tuple(out)


def initial_ray(metric, spec):
    if spec.impact_parameter is not None:
        return ray_from_impact_parameter(metric, spec.impact_parameter, spec.distance, spec.frequency,
                                         spec.inclination)
    return make_null_ray(metric, np.array(spec.event), np.array(spec.direction), spec.frequency)


# ------------------------------------------------------------------ parsing


def _suggest(key, allowed):
    close = difflib.get_close_matches(key, list(allowed), n=1)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _check_keys(where, raw, allowed):
    if not isinstance(raw, dict):
        raise ConstraintViolation(f"[{where}] must be a table", "scenario.parse_scenario")
    for key in raw:
        if key not in allowed:
            raise UnknownKey(f"unknown key '{where}.{key}'{_suggest(key, allowed)}" if where else
                             f"unknown section '{key}'{_suggest(key, allowed)}", "scenario.parse_scenario")


def _num(where, v, positive=False, nonneg=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConstraintViolation(f"{where} must be a number, got {v!r}", "scenario.parse_scenario")
    if integer:
        if not isinstance(v, int):
            raise ConstraintViolation(f"{where} must be an integer, got {v!r}", "scenario.parse_scenario")
        out = int(v)
    else:
        out = float(v)
        if not math.isfinite(out):
            raise ConstraintViolation(f"{where} must be finite", "scenario.parse_scenario")
    if positive and not out > 0:
        raise ConstraintViolation(f"{where} must be > 0, got {v!r}", "scenario.parse_scenario")
    if nonneg and out < 0:
        raise ConstraintViolation(f"{where} must be >= 0, got {v!r}", "scenario.parse_scenario")
    return out


def _complex(where, v):
    if isinstance(v, list):
        if len(v) != 2:
            raise ConstraintViolation(f"{where} must be a number or [re, im]", "scenario.parse_scenario")
        return complex(_num(where, v[0]), _num(where, v[1]))
    return complex(_num(where, v), 0.0)


def _vec(where, v, n):
    if not isinstance(v, list) or len(v) != n:
        raise ConstraintViolation(f"{where} must be a list of {n} numbers", "scenario.parse_scenario")
    return tuple(_num(where, c) for c in v)


def _kappa(where, v):
    k = _num(where, v)
    try:
        check_kappa(k, "scenario.parse_scenario")
    except KappaOutOfRange:
        raise ConstraintViolation(
            f"{where} = {v!r} violates the rule kappa in (0,1): each electromagnetic factor must carry a "
            "positive share of the frequency, or it would run backwards along the ray",
            "scenario.parse_scenario",
        ) from None
    return k


def _helicity(where, v):
    if v not in (1, -1) or isinstance(v, bool):
        raise ConstraintViolation(f"{where} must be +1 or -1, got {v!r}", "scenario.parse_scenario")
    return int(v)


def _fill(cls, where, raw, conv):
    """Apply per-key converters from ``conv`` and build ``cls``."""
    names = {f.name for f in fields(cls)}
    _check_keys(where, raw, names)
    kw = {}
    for key, val in raw.items():
        fn = conv.get(key)
        kw[key] = fn(f"{where}.{key}", val) if fn else val
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConstraintViolation(f"[{where}]: {exc}", "scenario.parse_scenario") from None


def _parse_metric(raw):
    _check_keys("metric", raw, {"name", "chart", "params", "grid_file"})
    for req in ("name", "chart"):
        if req not in raw:
            raise ConstraintViolation(f"metric.{req} is required (media and rays are chart-dependent)",
                                      "scenario.parse_scenario")
    name, chart = raw["name"], raw["chart"]
    params = raw.get("params", {})
    allowed = METRIC_PARAMS.get(name)
    if allowed is None:
        raise ConstraintViolation(f"metric.name {name!r} is not one of {sorted(METRIC_PARAMS)}",
                                  "scenario.parse_scenario")
    if name != "grid" and (name, chart) not in BUILTIN_METRICS:
        charts = sorted(c for n, c in BUILTIN_METRICS if n == name)
        raise ConstraintViolation(f"metric {name!r} has no chart {chart!r}; use one of {charts}",
                                  "scenario.parse_scenario")
    _check_keys("metric.params", params, set(allowed))
    clean = {}
    for k, v in params.items():
        clean[k] = v if k == "method" else _num(f"metric.params.{k}", v, nonneg=True)
    if name == "weak_field" and "mass" in clean and clean["mass"] < 0:
        raise ConstraintViolation("metric.params.mass must be >= 0", "scenario.parse_scenario")
    return MetricSpec(name, chart, tuple(sorted(clean.items())), raw.get("grid_file"))


def _parse_ray(where, raw):
    conv = {
        "frequency": lambda w, v: _num(w, v, positive=True),
        "impact_parameter": lambda w, v: _num(w, v, positive=True),
        "distance": lambda w, v: _num(w, v, positive=True),
        "inclination": _num,
        "event": lambda w, v: _vec(w, v, 4),
        "direction": lambda w, v: _vec(w, v, 3),
        "c_plus": _complex,
        "c_minus": _complex,
        "kappa_plus": _kappa,
        "kappa_minus": _kappa,
    }
    ray = _fill(RaySpec, where, raw, conv)
    if ray.impact_parameter is not None:
        if ray.distance is None:
            raise ConstraintViolation(f"{where}: impact_parameter needs distance", "scenario.parse_scenario")
        if ray.event is not None or ray.direction is not None:
            raise ConstraintViolation(f"{where}: give impact_parameter/distance or event/direction, not both",
                                      "scenario.parse_scenario")
    elif ray.event is None or ray.direction is None:
        raise ConstraintViolation(f"{where}: needs impact_parameter + distance or event + direction",
                                  "scenario.parse_scenario")
    return ray


_RUN_CONV = {
    "integrator": None,
    "step": lambda w, v: _num(w, v, positive=True),
    "l_end": lambda w, v: _num(w, v, positive=True),
    "sample_every": lambda w, v: _num(w, v, positive=True, integer=True),
    "rtol": lambda w, v: _num(w, v, positive=True),
    "atol": lambda w, v: _num(w, v, positive=True),
    "project_every": lambda w, v: _num(w, v, nonneg=True, integer=True),
    "workers": lambda w, v: _num(w, v, positive=True, integer=True),
    "random_rays": lambda w, v: _num(w, v, nonneg=True, integer=True),
    "seed": lambda w, v: _num(w, v, nonneg=True, integer=True),
    "b_range": lambda w, v: _vec(w, v, 2),
}
for _k in ("tolerance", "gauge_tolerance", "phase_tolerance", "transport_tolerance", "null_tolerance",
           "mixing_tolerance", "kappa_tolerance", "validity_threshold"):
    _RUN_CONV[_k] = lambda w, v: _num(w, v, positive=True)


def _parse_source(raw):
    conv = {
        "pump_frequency": lambda w, v: _num(w, v, positive=True),
        "kappa": _kappa,
        "crystal_length": lambda w, v: _num(w, v, positive=True),
        "pump_wavenumber": lambda w, v: _num(w, v, positive=True),
        "pump_wavelength": lambda w, v: _num(w, v, positive=True),
        "beam_width": lambda w, v: _num(w, v, positive=True),
        "plus_amplitude": _complex,
        "minus_amplitude": _complex,
        "quality_threshold": lambda w, v: _num(w, v, positive=True),
        "direction": lambda w, v: _vec(w, v, 3),
        "length_unit_m": lambda w, v: _num(w, v, positive=True),
    }
    if "pump_frequency" not in raw:
        raise ConstraintViolation("source.pump_frequency is required", "scenario.parse_scenario")
    if "pump_wavenumber" in raw and "pump_wavelength" in raw:
        raise ConstraintViolation("give source.pump_wavenumber or source.pump_wavelength, not both",
                                  "scenario.parse_scenario")
    src = _fill(SourceSpec, "source", raw, conv)
    if "pump_wavenumber" in raw:
        src = replace(src, pump_wavelength=None)
    if not isinstance(src.degenerate, bool):
        raise ConstraintViolation("source.degenerate must be true or false", "scenario.parse_scenario")
    if src.plus_amplitude == 0 and src.minus_amplitude == 0:
        raise ConstraintViolation("source needs a non-zero plus_amplitude or minus_amplitude",
                                  "scenario.parse_scenario")
    return src


def _parse_algebra(raw):
    raw = dict(raw)
    states = raw.pop("states", [])
    conv = {
        "momentum": lambda w, v: _vec(w, v, 3),
        "alpha": lambda w, v: _num(w, v, positive=True),
        "kappas": lambda w, v: tuple(_kappa(w, k) for k in v),
        "random_pairs": lambda w, v: _num(w, v, nonneg=True, integer=True),
    }
    alg = _fill(AlgebraSpec, "algebra", raw, conv)
    if np.linalg.norm(alg.momentum) == 0:
        raise ConstraintViolation("algebra.momentum must be non-zero", "scenario.parse_scenario")
    parsed = []
    for i, st in enumerate(states):
        where = f"algebra.states[{i}]"
        sconv = {"p1": lambda w, v: _vec(w, v, 3), "p2": lambda w, v: _vec(w, v, 3),
                 "h1": _helicity, "h2": _helicity}
        s = _fill(StateSpec, where, st, sconv)
        if np.linalg.norm(s.p1) == 0 or np.linalg.norm(s.p2) == 0:
            raise ConstraintViolation(f"{where}: momenta must be non-zero", "scenario.parse_scenario")
        parsed.append(s)
    return replace(alg, states=tuple(parsed))


def _axis(where, v):
    if not isinstance(v, list) or len(v) != 3:
        raise ConstraintViolation(f"{where} must be [min, max, count]", "scenario.parse_scenario")
    lo, hi = _num(where, v[0]), _num(where, v[1])
    n = _num(where, v[2], positive=True, integer=True)
    return (lo, hi, n)


def _parse_medium(raw):
    conv = {
        "x": _axis,
        "y": _axis,
        "z": _axis,
        "t": _num,
        "impact_parameters": lambda w, v: tuple(_num(w, b, positive=True) for b in v),
        "distance": lambda w, v: _num(w, v, positive=True),
        "l_end": lambda w, v: _num(w, v, positive=True),
        "step": lambda w, v: _num(w, v, positive=True),
        "tolerance": lambda w, v: _num(w, v, positive=True),
    }
    return _fill(MediumSpec, "medium", raw, conv)


SECTIONS = ("title", "metric", "rays", "wave", "run", "scale", "source", "algebra", "medium")


def parse_scenario(text):
    """Parse and validate scenario text; see :class:`Scenario` for the layout."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+), column (\d+)", msg)
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        err = ConfigSyntaxError(f"config syntax error: {msg}", "scenario.parse_scenario")
        err.line, err.column = line, col
        raise err from None
    _check_keys("", raw, SECTIONS)
    if "metric" not in raw:
        raise ConstraintViolation("a [metric] section is required", "scenario.parse_scenario")
    metric = _parse_metric(raw["metric"])
    rays = tuple(_parse_ray(f"rays[{i}]", r) for i, r in enumerate(raw.get("rays", [])))
    wave = _fill(WaveSpec, "wave", raw.get("wave", {}),
                 {"c_plus": _complex, "c_minus": _complex, "kappa_plus": _kappa, "kappa_minus": _kappa,
                  "phi0": _num})
    run = _fill(RunSpec, "run", raw.get("run", {}), _RUN_CONV)
    if run.integrator not in INTEGRATORS:
        raise ConstraintViolation(f"run.integrator must be one of {INTEGRATORS}{_suggest(run.integrator, INTEGRATORS)}",
                                  "scenario.parse_scenario")
    if not run.b_range[0] < run.b_range[1] or run.b_range[0] <= 0:
        raise ConstraintViolation("run.b_range must be [lo, hi] with 0 < lo < hi", "scenario.parse_scenario")
    scale = _fill(ScaleSpec, "scale", raw.get("scale", {}),
                  {"s": lambda w, v: _num(w, v, positive=True), "apply": lambda w, v: _num(w, v, positive=True)})
    source = _parse_source(raw["source"]) if "source" in raw else None
    algebra = _parse_algebra(raw.get("algebra", {}))
    medium = _parse_medium(raw["medium"]) if "medium" in raw else None
    title = raw.get("title", "")
    if not isinstance(title, str):
        raise ConstraintViolation("title must be a string", "scenario.parse_scenario")
    sc = Scenario(metric, rays, wave, run, scale, source, algebra, medium, title)
    _validate(sc)
    return sc


def _validate(sc):
    """Module preconditions that need the built metric."""
    try:
        metric = sc.build_metric()
        for i, spec in enumerate(sc.rays):
            ray = initial_ray(metric, spec)
            metric.check_domain(ray.x)
    except ConstraintViolation:
        raise
    except GravemError as exc:
        raise ConstraintViolation(f"scenario is inconsistent: {exc}", exc.operation or "scenario.parse_scenario") from None
    if sc.source is not None:
        sc.source.spdc()


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# ------------------------------------------------------------------ scaling


def scale_scenario(sc, s):
    """Rescale every length by ``s`` (frequencies by 1/s); background
    parameters are untouched and the cumulative factor goes into scale.s."""
    s = ConformalScale(s).s
    if s == 1.0:
        return sc
    chart = sc.metric.chart

    def ray(r):
        return replace(
            r,
            frequency=r.frequency / s,
            impact_parameter=None if r.impact_parameter is None else r.impact_parameter * s,
            distance=None if r.distance is None else r.distance * s,
            event=None if r.event is None else tuple(float(v) for v in scale_event(r.event, s, chart)),
            direction=r.direction if r.direction is None or chart != "schwarzschild" else tuple(
                [r.direction[0]] + [v / s for v in r.direction[1:]]
            ),
        )

    run = replace(sc.run, step=sc.run.step * s, l_end=sc.run.l_end * s,
                  b_range=tuple(v * s for v in sc.run.b_range))
    medium = sc.medium
    if medium is not None:
        medium = replace(
            medium,
            x=(medium.x[0] * s, medium.x[1] * s, medium.x[2]),
            y=(medium.y[0] * s, medium.y[1] * s, medium.y[2]),
            z=(medium.z[0] * s, medium.z[1] * s, medium.z[2]),
            t=medium.t * s,
            impact_parameters=tuple(b * s for b in medium.impact_parameters),
            distance=medium.distance * s,
            l_end=medium.l_end * s,
            step=medium.step * s,
        )
    return replace(sc, rays=tuple(ray(r) for r in sc.rays), run=run, medium=medium,
                   scale=replace(sc.scale, s=sc.scale.s * s))


# -------------------------------------------------------------------- echo


def _plain(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items() if x is not None}
    return v


def scenario_to_dict(sc):
    out = {}
    if sc.title:
        out["title"] = sc.title
    m = {"name": sc.metric.name, "chart": sc.metric.chart, "params": dict(sc.metric.params)}
    if sc.metric.grid_file is not None:
        m["grid_file"] = sc.metric.grid_file
    out["metric"] = m
    out["wave"] = _plain(asdict(sc.wave))
    out["run"] = _plain(asdict(sc.run))
    out["scale"] = _plain(asdict(sc.scale))
    if sc.source is not None:
        out["source"] = _plain(asdict(sc.source))
    alg = asdict(sc.algebra)
    alg["states"] = [_plain(st) for st in alg["states"]]
    if not alg["states"]:
        del alg["states"]
    out["algebra"] = _plain(alg)
    if sc.medium is not None:
        out["medium"] = _plain(asdict(sc.medium))
    if sc.rays:
        out["rays"] = [_plain(asdict(r)) for r in sc.rays]
    return out


def dump_scenario(sc):
    return tomli_w.dumps(scenario_to_dict(sc))
