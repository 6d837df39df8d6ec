import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from behavdyn.cli import main
from behavdyn.core import derive_seed
from behavdyn.harness.config import ConfigError, dump_config, parse_config
from behavdyn.harness.io import format_value, read_table, sha256_file
from behavdyn.harness.runner import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    RunError,
    orchestrate_sweep,
    run_command,
    verify_manifest,
)

SMALL_FLOCK = {"M": 40, "width": 25.0, "height": 25.0, "steps": 4}
SHORT_HKB = {"duration": 2.0}


def _cfg(tmp_path, name="out", **doc):
    doc.setdefault("output_dir", str(tmp_path / name))
    return parse_config(doc)


# -- config ----------------------------------------------------------------------


def test_minimal_config_gets_model_defaults():
    cfg = parse_config('{"seed": 1, "command": "flock"}')
    f = cfg.flock
    assert (f.M, f.D, f.E, f.V) == (1000, 2.0, 5.0, 1.0)
    assert (f.k, f.k_prime, f.t_ties, f.W, f.mode) == (0.1, 0.5, 0.55, 1.0, "PI3")
    assert cfg.format == "csv" and cfg.jobs == 1


def test_out_of_range_names_key_and_bounds():
    with pytest.raises(ConfigError) as info:
        parse_config({"command": "flock", "flock": {"k": 1.5}})
    msg = str(info.value)
    assert "k must lie in [0, 1]" in msg and msg.startswith("flock")


@pytest.mark.parametrize("doc, fragment", [
    ({"command": "flock", "bogus": 1}, "bogus: unknown key"),
    ({"command": "flock", "flock": {"speed": 2}}, "flock.speed: unknown key"),
    ({"command": "flock", "seed": "abc"}, "seed"),
    ({"command": "dance"}, "command"),
    ({"command": "chaos", "chaos": {"r_values": [4.5]}}, "r must lie in [0, 4]"),
    ({"command": "hkb", "hkb": {"b": -1}}, "b must be >= 0"),
    ({"command": "experiment", "experiment": {"conditions": ["SAUNA"]}}, "experiment.conditions"),
    ({"command": "flock", "seed": -3}, "seed"),
])
def test_config_errors(doc, fragment):
    with pytest.raises(ConfigError, match=None) as info:
        parse_config(doc)
    assert fragment in str(info.value)


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed JSON"):
        parse_config("{command: flock")


@settings(max_examples=30)
@given(st.sampled_from(["flock", "hkb", "experiment", "entropy", "chaos", "sweep"]),
       st.integers(0, 2**64 - 1), st.floats(0.1, 0.9), st.floats(0.0, 0.5),
       st.lists(st.floats(0.0, 4.0), min_size=1, max_size=4))
def test_config_round_trip(command, seed, ties, k, rs):
    cfg = parse_config({"command": command, "seed": seed,
                        "flock": {"t_ties": ties, "k": k}, "chaos": {"r_values": rs}})
    assert parse_config(dump_config(cfg)) == cfg


# -- io --------------------------------------------------------------------------


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(format_value(x)) == x


def test_format_value_types():
    assert format_value(True) == "true"
    assert format_value(3) == "3"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(math.inf) == "inf"


# -- commands --------------------------------------------------------------------


def _outputs(manifest):
    return {o["path"]: o["sha256"] for o in manifest.outputs}


def test_flock_command_is_reproducible(tmp_path):
    a = run_command(_cfg(tmp_path, "a", command="flock", seed=5, flock=SMALL_FLOCK))
    b = run_command(_cfg(tmp_path, "b", command="flock", seed=5, flock=SMALL_FLOCK))
    assert _outputs(a) == _outputs(b)
    assert set(_outputs(a)) == {"flock_final.csv", "flock_metrics.csv"}
    cols, rows = read_table(tmp_path / "a" / "flock_metrics.csv")
    assert cols == ["step", "avg_displacement", "cluster_var_min", "cluster_var_max",
                    "sd_displacement", "entropy_bits", "alignment"]
    assert len(rows) == 4


def test_manifest_contents_and_replay(tmp_path):
    cfg = _cfg(tmp_path, "a", command="hkb", seed=2, hkb=SHORT_HKB)
    m = run_command(cfg)
    out = tmp_path / "a"
    assert verify_manifest(out) == []
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["version"] and doc["started_at"] <= doc["finished_at"]
    for o in doc["outputs"]:
        assert sha256_file(out / o["path"]) == o["sha256"]
    snapshot = dict(doc["config"], output_dir=str(tmp_path / "replay"))
    assert _outputs(run_command(parse_config(snapshot))) == _outputs(m)
    (out / "phase_series.csv").write_text("tampered\n")
    assert verify_manifest(out) == ["phase_series.csv"]


def test_hkb_outputs(tmp_path):
    run_command(_cfg(tmp_path, command="hkb", hkb=dict(SHORT_HKB, b=1.0, Q=0.0)))
    cols, rows = read_table(tmp_path / "out" / "phase_series.csv")
    assert cols == ["t_seconds", "phi_radians"] and len(rows) == 401
    _, fps = read_table(tmp_path / "out" / "fixed_points.csv")
    assert any(abs(float(phi)) < 1e-9 and stable == "true" for phi, stable in fps)
    summary = json.loads((tmp_path / "out" / "hkb_summary.json").read_text())
    assert summary["entropy"]["h_bits"] == 0.0 and summary["sd_phi"] == 0.0


def test_chaos_command_two_rows(tmp_path):
    run_command(_cfg(tmp_path, command="chaos", chaos={"r_values": [2.5, 4.0]}))
    cols, rows = read_table(tmp_path / "out" / "chaos.csv")
    assert cols[:2] == ["r", "lambda"] and len(rows) == 2
    assert abs(float(rows[0][1]) + math.log(2)) < 0.01
    assert abs(float(rows[1][1]) - math.log(2)) < 0.01
    assert [r[-1] for r in rows] == ["false", "true"]


def test_experiment_table_design(tmp_path):
    run_command(_cfg(tmp_path, command="experiment", hkb=SHORT_HKB))
    cols, rows = read_table(tmp_path / "out" / "series_index.csv")
    assert len(rows) == 192
    assert cols[:4] == ["participant", "hour", "trial", "condition"]
    scols, srows = read_table(tmp_path / "out" / "series_NORMAL.csv")
    assert scols == ["participant", "hour", "trial", "t_seconds", "phi_radians"]
    # 2 s at dt 0.005 is 401 samples; stride 20 keeps 21 per series
    assert len(srows) == 192 * 21


def test_experiment_conditions_and_anova(tmp_path):
    exp = {"conditions": ["NORMAL", "HEAT"], "participants": 3, "trials_per_point": 2,
           "circadian_points": [5, 17], "write_samples": False}
    run_command(_cfg(tmp_path, command="experiment", hkb=SHORT_HKB, experiment=exp))
    out = tmp_path / "out"
    assert not (out / "series_NORMAL.csv").exists()
    anova = json.loads((out / "anova.json").read_text())
    assert anova["dof"]["alpha"] == [1, 8]
    assert min(anova["f_alpha"], anova["f_beta"], anova["f_interaction"]) >= 0
    _, summary = read_table(out / "experiment_summary.csv")
    assert len(summary) == 4


def test_entropy_command_probs_and_series(tmp_path):
    run_command(_cfg(tmp_path, "p", command="entropy", entropy={"probs": [0.75, 0.25]}))
    _, rows = read_table(tmp_path / "p" / "entropy.csv")
    assert abs(float(rows[0][0]) - 0.8112781244591328) < 1e-15
    exp = {"participants": 1, "trials_per_point": 2, "circadian_points": [5]}
    run_command(_cfg(tmp_path, "e", command="experiment", hkb=SHORT_HKB, experiment=exp))
    src = str(tmp_path / "e" / "series_NORMAL.csv")
    run_command(_cfg(tmp_path, "s", command="entropy", entropy={"series_csv": src}))
    cols, rows = read_table(tmp_path / "s" / "entropy.csv")
    assert cols == ["participant", "hour", "trial", "n_samples", "h_bits"]
    assert len(rows) == 2


def test_entropy_needs_input(tmp_path):
    with pytest.raises(RunError) as info:
        run_command(_cfg(tmp_path, command="entropy"))
    assert info.value.category == "config"


def test_json_format(tmp_path):
    run_command(_cfg(tmp_path, command="chaos", format="json", chaos={"r_values": [4.0]}))
    doc = json.loads((tmp_path / "out" / "chaos.json").read_text())
    assert doc["columns"][1] == "lambda" and len(doc["rows"]) == 1


def test_dat_format(tmp_path):
    run_command(_cfg(tmp_path, command="chaos", format="dat", chaos={"r_values": [2.5, 4.0]}))
    lines = (tmp_path / "out" / "chaos.dat").read_text().splitlines()
    assert lines[0].startswith("# r lambda")
    assert len(lines) == 3 and len(lines[1].split()) == 7


# -- sweeps ----------------------------------------------------------------------


def test_single_point_sweep_equals_plain_run(tmp_path):
    cfg = _cfg(tmp_path, "sw", command="sweep", seed=8, flock=SMALL_FLOCK,
               sweep={"axis": "t_ties", "grid": [0.57], "replicates": 1})
    orchestrate_sweep(cfg)
    _, srows = read_table(tmp_path / "sw" / "sweep.csv")
    plain = _cfg(tmp_path, "pl", command="flock", seed=derive_seed(8, 0, 0),
                 flock=dict(SMALL_FLOCK, t_ties=0.57))
    run_command(plain)
    _, frows = read_table(tmp_path / "pl" / "flock_metrics.csv")
    assert len(srows) == 1
    assert srows[0][4:] == frows[-1]


def test_sweep_parallel_bytes_identical(tmp_path):
    doc = dict(command="sweep", seed=3, flock=SMALL_FLOCK,
               sweep={"grid": [0.5, 0.55, 0.6], "replicates": 2})
    a = run_command(_cfg(tmp_path, "serial", jobs=1, **doc))
    b = run_command(_cfg(tmp_path, "par", jobs=8, **doc))
    assert _outputs(a) == _outputs(b)
    _, rows = read_table(tmp_path / "serial" / "sweep.csv")
    assert [(r[0], r[1]) for r in rows] == [(str(g), str(r)) for g in range(3) for r in range(2)]
    report = json.loads((tmp_path / "serial" / "sweep_report.json").read_text())
    assert report["ties_grid"] == [0.5, 0.55, 0.6]


@pytest.mark.parametrize("target, axis, grid", [("hkb", "Q", [0.1, 0.4]), ("chaos", "r", [2.5, 4.0])])
def test_other_sweep_targets(tmp_path, target, axis, grid):
    cfg = _cfg(tmp_path, command="sweep", hkb=SHORT_HKB, chaos={"n": 20000},
               sweep={"target": target, "axis": axis, "grid": grid})
    run_command(cfg)
    cols, rows = read_table(tmp_path / "out" / "sweep.csv")
    assert cols[2] == axis and len(rows) == 2


def test_sweep_unknown_axis(tmp_path):
    cfg = _cfg(tmp_path, command="sweep", sweep={"axis": "colour"})
    with pytest.raises(RunError) as info:
        orchestrate_sweep(cfg)
    assert info.value.category == "config" and "colour" in str(info.value)


def test_sweep_point_error_carries_grid_index(tmp_path):
    cfg = _cfg(tmp_path, command="sweep", flock=SMALL_FLOCK,
               sweep={"axis": "k", "grid": [0.2, 0.9]})
    with pytest.raises(RunError, match="grid_index=1"):
        orchestrate_sweep(cfg)


# -- cli -------------------------------------------------------------------------


def test_cli_success_and_replay(tmp_path, capsys):
    out = tmp_path / "c"
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"chaos": {"r_values": [3.9], "n": 5000}}))
    assert main(["chaos", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "chaos.csv" in printed
    replay = tmp_path / "r"
    assert main(["chaos", "--config", str(out / "manifest.json"), "--out", str(replay)]) == EXIT_OK
    assert sha256_file(out / "chaos.csv") == sha256_file(replay / "chaos.csv")


def test_cli_config_error(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"flock": {"k": 1.5}}))
    assert main(["flock", "--config", str(cfg_file), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "k must lie in [0, 1]" in capsys.readouterr().err


def test_cli_numeric_error(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"flock": {"M": 10, "k_prime": 0.0, "steps": 2}}))
    assert main(["flock", "--config", str(cfg_file), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "numeric" in err and "step 1" in err


def test_cli_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["chaos", "--out", str(blocker / "sub")]) == EXIT_IO
    assert main(["chaos", "--config", str(tmp_path / "missing.json")]) == EXIT_IO
