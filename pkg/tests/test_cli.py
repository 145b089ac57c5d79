import subprocess
import sys
from pathlib import Path

import pytest

import gravem
from gravem.cli import apply_overrides, build_parser, main
from gravem.scenario import load_scenario, parse_scenario

DEMOS = Path(gravem.__file__).parent / "demos"

PLUNGE = """
[metric]
name = "schwarzschild"
chart = "schwarzschild"
params = { r_s = 1.0 }

[[rays]]
impact_parameter = 1.0
distance = 20.0
frequency = 1.0

[run]
step = 0.01
l_end = 100.0
"""


def summary(out):
    pairs = {}
    for line in (out / "summary.txt").read_text().splitlines():
        k, _, v = line.partition(" = ")
        pairs[k] = v
    return pairs


def test_flat_equivalence_exact(tmp_path, capsys):
    rc = main(["equivalence-check", "--config", str(DEMOS / "flat.toml"), "--out", str(tmp_path)])
    assert rc == 0
    s = summary(tmp_path)
    assert s["passed"] == "true"
    assert float(s["ray0.max_relative_deviation"]) < 1e-15
    assert float(s["ray0.phase_ratio_median"]) == 2.0
    assert "checks passed" in capsys.readouterr().out


def test_b10_equivalence_passes(tmp_path):
    rc = main(["equivalence-check", "--config", str(DEMOS / "schwarzschild_b10.toml"), "--out", str(tmp_path),
               "--steps", "2000"])
    assert rc == 0
    assert float(summary(tmp_path)["ray0.max_relative_deviation"]) < 1e-8


def test_failed_check_exits_two(tmp_path):
    rc = main(["equivalence-check", "--config", str(DEMOS / "schwarzschild_b10.toml"), "--out", str(tmp_path),
               "--steps", "500", "--tolerance", "1e-300"])
    assert rc == 2
    assert summary(tmp_path)["check.ray0.relative_deviation"] == "FAIL"


def test_plunging_ray_is_an_error(tmp_path, capsys):
    cfg = tmp_path / "plunge.toml"
    cfg.write_text(PLUNGE)
    rc = main(["propagate", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "OutsideChartDomain" in err
    assert not (tmp_path / "out" / "summary.txt").exists()


def test_source_without_section(tmp_path, capsys):
    rc = main(["source", "--config", str(DEMOS / "flat.toml"), "--out", str(tmp_path)])
    assert rc == 1
    assert "[source]" in capsys.readouterr().err


def test_bad_config_reports_position(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[metric]\nname = \n")
    assert main(["propagate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "ConfigSyntaxError" in err and "line 2" in err


def test_missing_config_file(tmp_path):
    assert main(["algebra", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 1


def test_overrides():
    sc = load_scenario(DEMOS / "schwarzschild_b10.toml")
    args = build_parser().parse_args(["propagate", "--config", "x", "--steps", "100", "--tolerance", "1e-6",
                                      "--seed", "9"])
    new = apply_overrides(sc, args)
    assert new.run.step == pytest.approx(sc.run.l_end / 100)
    assert new.run.tolerance == 1e-6 and new.run.seed == 9
    for bad in (["--steps", "0"], ["--tolerance", "-1"]):
        with pytest.raises(ValueError):
            apply_overrides(sc, build_parser().parse_args(["propagate", "--config", "x"] + bad))


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["warp", "--config", "x"])
    assert info.value.code == 2


@pytest.mark.parametrize("sub", ["algebra", "medium", "scale", "source"])
def test_scaled_lab_subcommands(sub, tmp_path):
    assert main([sub, "--config", str(DEMOS / "scaled_lab.toml"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "run.log").exists()


def test_scale_writes_loadable_scenario(tmp_path):
    assert main(["scale", "--config", str(DEMOS / "scaled_lab.toml"), "--out", str(tmp_path)]) == 0
    scaled = parse_scenario((tmp_path / "scenario_scaled.toml").read_text())
    base = load_scenario(DEMOS / "scaled_lab.toml")
    assert scaled.scale.s == pytest.approx(base.scale.s * base.scale.apply)
    assert (tmp_path / "scale_invariants.csv").read_text().count("\n") >= 2


def test_byte_identical_reruns(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["propagate", "--config", str(DEMOS / "flat.toml"), "--out", str(out), "--seed", "4"]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "run.log"})
    assert outs[0] == outs[1] and len(outs[0]) > 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gravem", "algebra", "--config", str(DEMOS / "flat.toml"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
