"""Command-line front end: ``gravem <subcommand> --config scenario.toml``.

Exit status is 0 when every check passes, 2 when any check fails and 1 on
errors. Data files use 17 significant digits and carry no timestamps; the
timestamped log goes to ``run.log`` next to them.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import algebra as alg
from . import emulation as emu
from .equivalence import check_equivalence, helicity_frame, phase_series
from .errors import ConfigSyntaxError, GravemError
from .scenario import MediumSpec, dump_scenario, initial_ray, load_scenario, parse_scenario, scale_scenario
from .spacetime import validity_ratio
from .transport import (
    constraint_drift,
    deflection_angle,
    integrate_null_geodesic,
    parallel_transport_tensor,
    parallel_transport_vector,
    ray_from_impact_parameter,
    vector_transversality,
)

SUBCOMMANDS = ("propagate", "equivalence-check", "algebra", "medium", "scale", "source")
log = logging.getLogger("gravem")


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)):
        return f"{fmt(float(v.real))}{'+' if v.imag >= 0 or math.isnan(v.imag) else '-'}{fmt(abs(float(v.imag)))}j"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def short(v):
    if isinstance(v, (float, np.floating)) and not isinstance(v, bool):
        return format(float(v), ".6g")
    return fmt(v)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def kv_text(pairs):
    return "".join(f"{k} = {fmt(v)}\n" for k, v in pairs)


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    limit: object = None


@dataclass
class RunReport:
    subcommand: str
    checks: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)

    def check(self, name, passed, value=None, limit=None):
        self.checks.append(Check(name, bool(passed), value, limit))

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------- propagate

PATH_HEADER = ["l", "x0", "x1", "x2", "x3", "p0", "p1", "p2", "p3", "null_residual"]
TRANSPORT_HEADER = ["l", "norm_residual", "self_product", "transversality", "trace", "symmetry", "validity_ratio"]


def _propagate_one(args):
    sc, spec = args
    metric = sc.build_metric()
    ray = initial_ray(metric, spec)
    path = integrate_null_geodesic(metric, ray, ray.l + sc.run.l_end, sc.run.controls())
    frame = helicity_frame(path.p[0], metric, path.x[0])
    e = parallel_transport_vector(metric, path, frame.e_plus)
    b = parallel_transport_tensor(metric, path, np.outer(frame.e_plus, frame.e_plus), symmetrize=False)
    rows = []
    for i in range(len(path)):
        g = metric(path.x[i])
        p = path.p[i]
        v = e[i]
        norm = -(np.conj(v) @ g @ v).real
        rows.append(
            [
                path.l[i],
                abs(norm - 1.0),
                abs(v @ g @ v),
                vector_transversality(g, p, v),
                abs(np.sum(g * b[i])),
                float(np.max(np.abs(b[i] - b[i].T))),
                validity_ratio(spec.wavelength, metric, path.x[i], sc.run.validity_threshold).ratio,
            ]
        )
    drift = constraint_drift(path, e)
    return {
        "path": np.column_stack([path.l, path.x, path.p, path.null_residual]),
        "transport": np.array(rows),
        "drift": drift,
        "deflection": deflection_angle(path, metric),
        "samples": len(path),
    }


def cmd_propagate(sc, report):
    rays = sc.all_rays()
    results = _map(_propagate_one, [(sc, r) for r in rays], sc.run.workers)
    tol = sc.run.transport_tolerance
    for i, res in enumerate(results):
        report.files[f"ray{i}_path.csv"] = csv_text(PATH_HEADER, res["path"])
        report.files[f"ray{i}_transport.csv"] = csv_text(TRANSPORT_HEADER, res["transport"])
        t = res["transport"]
        worst = {name: float(np.max(t[:, k])) for k, name in enumerate(TRANSPORT_HEADER) if k}
        report.check(f"ray{i}.null_drift", res["drift"].max_null < sc.run.null_tolerance, res["drift"].max_null,
                     sc.run.null_tolerance)
        for name in ("norm_residual", "self_product", "transversality", "trace", "symmetry"):
            report.check(f"ray{i}.{name}", worst[name] < tol, worst[name], tol)
        verdict = "pass" if worst["validity_ratio"] < sc.run.validity_threshold else (
            "warn" if worst["validity_ratio"] < 10 * sc.run.validity_threshold else "fail")
        report.summary += [
            (f"ray{i}.samples", res["samples"]),
            (f"ray{i}.deflection_angle", res["deflection"]),
            (f"ray{i}.max_null_residual", res["drift"].max_null),
            (f"ray{i}.mean_null_residual", res["drift"].mean_null),
            (f"ray{i}.max_validity_ratio", worst["validity_ratio"]),
            (f"ray{i}.validity_verdict", verdict),
        ]


# -------------------------------------------------------- equivalence-check

EQ_HEADER = ["l", "relative_deviation", "em_phase", "gw_phase", "phase_ratio", "gauge_direct", "gauge_factored"]


def _equivalence_one(args):
    sc, spec = args
    metric = sc.build_metric()
    ray = initial_ray(metric, spec)
    path = integrate_null_geodesic(metric, ray, ray.l + sc.run.l_end, sc.run.controls())
    w = sc.wave_for(spec)
    run = check_equivalence(metric, path, w.c_plus, w.c_minus, w.phi0, w.kappa_plus, w.kappa_minus,
                            sc.run.tolerance, sc.run.phase_tolerance, sc.run.gauge_tolerance)
    r = run.report
    gd = [max(g.spatial, g.trace, g.transversality) for g in run.direct.gauge]
    gf = [max(g.spatial, g.trace, g.transversality) for g in run.factored.gauge]
    table = np.column_stack([r.l, r.deviation, r.em_phase, r.gw_phase, r.phase_ratio, gd, gf])
    return {"summary": r.summary(), "table": table, "wave": w}


def cmd_equivalence(sc, report):
    rays = sc.all_rays()
    results = _map(_equivalence_one, [(sc, r) for r in rays], sc.run.workers)
    lines = []
    for i, res in enumerate(results):
        s = res["summary"]
        w = res["wave"]
        report.files[f"equivalence_ray{i}.csv"] = csv_text(EQ_HEADER, res["table"])
        lines += [(f"ray{i}.c_plus", w.c_plus), (f"ray{i}.c_minus", w.c_minus),
                  (f"ray{i}.kappa_plus", w.kappa_plus), (f"ray{i}.kappa_minus", w.kappa_minus)]
        lines += [(f"ray{i}.{k}", v) for k, v in s.items() if k != "passed"]
        run = sc.run
        report.check(f"ray{i}.relative_deviation", s["max_relative_deviation"] < run.tolerance,
                     s["max_relative_deviation"], run.tolerance)
        report.check(f"ray{i}.phase_doubling", s["max_phase_residual"] < run.phase_tolerance,
                     s["max_phase_residual"], run.phase_tolerance)
        gauge = max(s["max_gauge_residual_direct"], s["max_gauge_residual_factored"])
        report.check(f"ray{i}.gauge", gauge < run.gauge_tolerance, gauge, run.gauge_tolerance)
        mix = max(s["mixing_plus_to_minus"], s["mixing_minus_to_plus"])
        report.check(f"ray{i}.helicity_mixing", mix < run.mixing_tolerance, mix, run.mixing_tolerance)
        report.check(f"ray{i}.kappa_independence", s["kappa_dependence"] < run.kappa_tolerance,
                     s["kappa_dependence"], run.kappa_tolerance)
        report.summary += [(f"ray{i}.max_relative_deviation", s["max_relative_deviation"]),
                           (f"ray{i}.phase_ratio_median", s["phase_ratio_median"])]
    report.files["equivalence_report.txt"] = kv_text(lines)


# ------------------------------------------------------------------ algebra


def _sign(h):
    return "+" if h > 0 else "-"


def cmd_algebra(sc, report):
    a = sc.algebra
    rows = []
    expected = {"(+,+)": 2, "(-,-)": -2, "(+,-)": 0, "(-,+)": 0}
    for label, st, hel, m2, grav in alg.sector_table(a.momentum, a.alpha):
        rows.append([label, hel, m2, grav])
        report.check(f"sector{label}.helicity", hel == expected[label], hel, expected[label])
        report.check(f"sector{label}.mass_squared", abs(m2) < 1e-12, m2, 0.0)
    report.files["sectors.csv"] = csv_text(["state", "total_helicity", "mass_squared", "gravitational"], rows)

    q = np.asarray(a.momentum, dtype=float)
    z, t = 0.37, 0.11
    ref = {lam: emu.coincidence_amplitude(alg.equivalent_tensor_family(q, lam, 0.5), z, t) for lam in (2, -2)}
    fam = []
    for k in a.kappas:
        for lam in (2, -2):
            st = alg.equivalent_tensor_family(q, lam, k)
            k4 = alg.four_momentum(st, strict=True)
            dev = float(np.max(np.abs(emu.coincidence_amplitude(st, z, t) - ref[lam])))
            mom_err = float(np.max(np.abs(k4 - np.concatenate([[np.linalg.norm(q)], q]))))
            fam.append([k, lam, alg.total_helicity(st), alg.mass_squared(st), mom_err, dev])
            report.check(f"family.kappa={k:g}.lambda={lam:+d}",
                         alg.total_helicity(st) == lam and abs(alg.mass_squared(st)) < 1e-12
                         and mom_err < 1e-12 * np.linalg.norm(q) and dev < 1e-12, dev, 1e-12)
    report.files["family.csv"] = csv_text(
        ["kappa", "grav_helicity", "total_helicity", "mass_squared", "four_momentum_error", "coincidence_deviation"],
        fam)

    srows = []
    for st_spec in a.states:
        st = alg.symmetrized_product(alg.make_plane_wave(st_spec.p1, st_spec.h1),
                                     alg.make_plane_wave(st_spec.p2, st_spec.h2))
        hel = alg.total_helicity(st) if st.parallel else "undefined"
        k4 = alg.four_momentum(st, strict=False) if st.parallel else np.concatenate(
            [[st.first.omega + st.second.omega], st.first.p + st.second.p])
        srows.append([f"{_sign(st_spec.h1)}{_sign(st_spec.h2)}", st.parallel,
                      "" if st.kappa is None else st.kappa, "" if st.alpha is None else st.alpha,
                      alg.mass_squared(st), hel, *k4])
    if srows:
        report.files["states.csv"] = csv_text(
            ["helicities", "parallel", "kappa", "alpha", "mass_squared", "total_helicity", "k0", "k1", "k2", "k3"],
            srows)

    frows = []
    cases = [("s+im", alg.PLUS_2D + 1j * alg.CROSS_2D, (1.0, 1j)), ("s-im", alg.PLUS_2D - 1j * alg.CROSS_2D, (1.0, -1j)),
             ("s", alg.PLUS_2D, None), ("m", alg.CROSS_2D, None)]
    for name, t, want in cases:
        try:
            v = alg.factorize_circular(t)
            ok = want is not None and np.max(np.abs(v - np.array(want))) < 1e-12
            frows.append([name, "rank1", v[0], v[1]])
        except alg.NotFactorizable:
            ok = want is None
            frows.append([name, "not_factorizable", "", ""])
        report.check(f"factorize.{name}", ok)
    report.files["factorization.csv"] = csv_text(["tensor", "result", "a0", "a1"], frows)

    if a.random_pairs:
        rng = np.random.default_rng(sc.run.seed)
        worst = -math.inf
        for _ in range(a.random_pairs):
            p, qq = rng.normal(size=3), rng.normal(size=3)
            worst = max(worst, alg.mass_squared(alg.symmetrized_product(alg.make_plane_wave(p, 1),
                                                                        alg.make_plane_wave(qq, 1))))
        report.check("random_nonparallel.mass_squared_negative", worst < 0, worst, 0.0)
        report.summary.append(("random_nonparallel.max_mass_squared", worst))


# ------------------------------------------------------------------- medium


def cmd_medium(sc, report):
    med = sc.medium or MediumSpec()
    metric = sc.build_metric()
    rows = emu.medium_voxels(metric, med.axes(), med.t)
    path = "medium_voxels.txt"
    head = " ".join(f"{k}={fmt(v)}" for k, v in sorted(metric.params.items()))
    text = [f"# chart={metric.chart} s={fmt(sc.scale.s)} metric={metric.name} {head}".rstrip(),
            "# " + " ".join(emu.VOXEL_COLUMNS)]
    text += [" ".join(fmt(v) for v in r) for r in rows]
    report.files[path] = "\n".join(text) + "\n"
    matched = all(r[3:9] == r[9:15] for r in rows)
    report.check("impedance_matched", matched)
    if metric.flat():
        vac = all(np.array_equal(r[3:], [1, 0, 0, 1, 0, 1] * 2 + [0, 0, 0]) for r in rows)
        report.check("vacuum", vac)
    crows = []
    if med.impact_parameters and metric.chart in ("cartesian", "isotropic"):
        controls = replace(sc.run.controls(), step=med.step, sample_every=1 << 30, method="rk4")
        for b in med.impact_parameters:
            ray = ray_from_impact_parameter(metric, b, med.distance, 1.0 / sc.scale.s)
            res = emu.medium_ray_check(metric, None, ray, med.l_end, controls, tolerance=med.tolerance)
            crows.append([b, res.geodesic_deflection, res.medium_deflection, res.angular_deviation,
                          res.relative_deviation, res.passed])
            report.check(f"medium_ray.b={b:g}", res.passed, res.relative_deviation, med.tolerance)
        report.files["medium_check.csv"] = csv_text(
            ["impact_parameter", "geodesic_deflection", "medium_deflection", "angular_deviation",
             "relative_deviation", "passed"], crows)
    report.summary.append(("voxels", len(rows)))


# -------------------------------------------------------------------- scale


def _observables(sc, spec):
    metric = sc.build_metric()
    ray = initial_ray(metric, spec)
    path = integrate_null_geodesic(metric, ray, ray.l + sc.run.l_end, sc.run.controls())
    em, gw = phase_series(metric, path, sc.wave.phi0, 0.5)
    return {
        "deflection": deflection_angle(path, metric),
        "validity_ratio": validity_ratio(spec.wavelength, metric, ray.x, sc.run.validity_threshold).ratio,
        "phase_ratio": float(gw[-1] / em[-1]) if em[-1] != 0 else math.nan,
    }


def cmd_scale(sc, report):
    factor = sc.scale.apply
    scaled = replace(scale_scenario(sc, factor), scale=replace(sc.scale, s=sc.scale.s * factor, apply=1.0))
    text = dump_scenario(scaled)
    report.files["scenario_scaled.toml"] = text
    report.check("echo_reparses_equal", parse_scenario(text) == scaled)
    tol = 1e-9
    rows = []
    for i, spec in enumerate(sc.rays):
        before = _observables(sc, spec)
        after = _observables(scaled, scaled.rays[i])
        for k in ("deflection", "validity_ratio", "phase_ratio"):
            a, b = before[k], after[k]
            rel = abs(a - b) / max(abs(a), 1e-300) if a != b else 0.0
            rows.append([i, k, a, b, rel])
            report.check(f"ray{i}.{k}_invariant", rel < tol, rel, tol)
    report.files["scale_invariants.csv"] = csv_text(["ray", "observable", "before", "after", "relative_change"], rows)
    report.summary += [("scale_from", sc.scale.s), ("scale_to", scaled.scale.s)]


# ------------------------------------------------------------------- source


def cmd_source(sc, report):
    if sc.source is None:
        raise GravemError("the scenario has no [source] section", "cli.source")
    src = sc.source
    spec = src.spdc()
    state = emu.spdc_state(spec, src.direction)
    ws, wi = spec.frequencies
    q = emu.momentum_correlation_quality(spec, src.quality_threshold)
    cp, cm = state.gravitational_amplitudes
    pairs = [
        ("pump_frequency", spec.pump_frequency),
        ("kappa", spec.effective_kappa),
        ("degenerate_filter", spec.degenerate),
        ("signal_frequency", ws),
        ("idler_frequency", wi),
        ("energy_residual", ws + wi - spec.pump_frequency),
        ("correlation_length", q.scale),
        ("correlation_length_m", q.scale * src.length_unit_m),
        ("quality_ratio", q.ratio),
        ("quality_threshold", q.threshold),
        ("quality_verdict", q.verdict),
        ("c_plus", cp),
        ("c_minus", cm),
        ("linear_polarization", state.linear),
    ]
    for i, (amp, st) in enumerate(state.terms):
        pairs += [(f"pair{i}.amplitude", amp), (f"pair{i}.total_helicity", alg.total_helicity(st)),
                  (f"pair{i}.mass_squared", alg.mass_squared(st))]
    report.files["source_report.txt"] = kv_text(pairs)
    report.check("energy_conservation", ws + wi == spec.pump_frequency, ws + wi - spec.pump_frequency, 0.0)
    report.check("momentum_correlation_quality", q.good, q.ratio, q.threshold)

    # coincidence samples and their kappa independence against the degenerate split
    ref_state = emu.spdc_state(replace(spec, kappa=0.5), src.direction)
    rows = []
    worst = 0.0
    lam = 2.0 * math.pi / spec.pump_frequency
    for z in np.linspace(0.0, lam, 5):
        for t in np.linspace(0.0, lam, 3):
            amp = emu.coincidence_amplitude(state, z, t)
            ref = emu.coincidence_amplitude(ref_state, z, t)
            dev = float(np.max(np.abs(amp - ref)))
            worst = max(worst, dev)
            rows.append([z, t, amp[0, 0], amp[0, 1], amp[1, 1], dev])
    report.files["coincidence.csv"] = csv_text(["z", "t", "h_xx", "h_xy", "h_yy", "kappa_deviation"], rows)
    report.check("coincidence_kappa_independence", worst < 1e-12, worst, 1e-12)
    report.summary += [("quality_ratio", q.ratio), ("signal_frequency", ws), ("idler_frequency", wi)]


COMMANDS = {
    "propagate": cmd_propagate,
    "equivalence-check": cmd_equivalence,
    "algebra": cmd_algebra,
    "medium": cmd_medium,
    "scale": cmd_scale,
    "source": cmd_source,
}


# --------------------------------------------------------------------- main


def build_parser():
    ap = argparse.ArgumentParser(prog="gravem", description="Gravitational waves as products of light waves.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="scenario TOML file")
    ap.add_argument("--out", default="gravem_out", help="output directory (default: gravem_out)")
    ap.add_argument("--tolerance", type=float, help="override run.tolerance")
    ap.add_argument("--steps", type=int, help="integrate with l_end / STEPS as the step size")
    ap.add_argument("--seed", type=int, help="override run.seed")
    return ap


def apply_overrides(sc, args):
    run = sc.run
    if args.tolerance is not None:
        if not args.tolerance > 0:
            raise ValueError("--tolerance must be positive")
        run = replace(run, tolerance=args.tolerance)
    if args.steps is not None:
        if args.steps < 1:
            raise ValueError("--steps must be >= 1")
        run = replace(run, step=run.l_end / args.steps)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    return replace(sc, run=run)


def execute(subcommand, sc):
    report = RunReport(subcommand)
    COMMANDS[subcommand](sc, report)
    return report


def _setup_log(out):
    handler = logging.FileHandler(os.path.join(out, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False


def _render_error(exc):
    if isinstance(exc, GravemError):
        where = exc.operation or "gravem"
        extra = ""
        if isinstance(exc, ConfigSyntaxError) and exc.line is not None:
            extra = f" [line {exc.line}, column {exc.column}]"
        return f"error: {where}: {type(exc).__name__}: {exc}{extra}"
    return f"error: {type(exc).__name__}: {exc}"


def main(argv=None):
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        sc = apply_overrides(load_scenario(args.config), args)
        os.makedirs(args.out, exist_ok=True)
        _setup_log(args.out)
        log.info("subcommand %s config %s", args.subcommand, args.config)
        report = execute(args.subcommand, sc)
    except (GravemError, ValueError, OSError) as exc:
        msg = _render_error(exc)
        print(msg, file=sys.stderr)
        if log.handlers:
            log.error(msg)
        return 1

    lines = [("subcommand", args.subcommand), ("passed", report.passed)]
    lines += [(f"check.{c.name}", "pass" if c.passed else "FAIL") for c in report.checks]
    lines += [(f"value.{c.name}", c.value) for c in report.checks if c.value is not None]
    lines += report.summary
    report.files["summary.txt"] = kv_text(lines)
    # single writer, after all computation
    for name in sorted(report.files):
        with open(os.path.join(args.out, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.files[name])

    for c in report.checks:
        detail = "" if c.value is None else f" ({short(c.value)}" + ("" if c.limit is None else f" vs {short(c.limit)}") + ")"
        print(f"{'pass' if c.passed else 'FAIL'}  {c.name}{detail}")
    for k, v in report.summary:
        print(f"      {k} = {short(v)}")
    n_fail = sum(not c.passed for c in report.checks)
    print(f"{args.subcommand}: {len(report.checks) - n_fail}/{len(report.checks)} checks passed; output in {args.out}")
    log.info("done in %.3f s, %d checks, %d failed", time.perf_counter() - start, len(report.checks), n_fail)
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
