"""Command-line behavior: config parsing, exit codes, and artifact layout."""

import json

import pytest

from vspc.cli import main, parse_run_config, UsageError


def _write_config(path, **overrides):
    base = {
        "grid": {"n": 16},
        "solver": {"nu": 0.01, "t_end": 0.05, "dt_max": 0.005},
        "initial": {"kind": "perturbed-identity", "amplitude": 0.1},
        "output": {"dir": str(path.parent / "out"), "snapshot_interval": 5,
                   "diagnostics_interval": 2},
        "certificates": {"strict": "false"},
    }
    for section, vals in overrides.items():
        base.setdefault(section, {}).update(vals)
    lines = []
    for section, vals in base.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in vals.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return path


def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 1


def test_missing_config_file():
    assert main(["run", "/nonexistent/path.ini"]) == 1


def test_config_validation_errors(tmp_path):
    cfg = _write_config(tmp_path / "a.ini", grid={"n": 12})
    with pytest.raises(UsageError, match="power of two"):
        parse_run_config(cfg)
    cfg = _write_config(tmp_path / "b.ini", initial={"kind": "vortex-sheet"})
    with pytest.raises(UsageError, match="unknown initial kind"):
        parse_run_config(cfg)
    cfg = _write_config(tmp_path / "c.ini", solver={"nu": "fast"})
    with pytest.raises(UsageError, match="bad value"):
        parse_run_config(cfg)
    (tmp_path / "d.ini").write_text("[grid]\nn = 16\n")  # no [solver]
    with pytest.raises(UsageError, match="missing"):
        parse_run_config(tmp_path / "d.ini")


def test_run_produces_artifacts(tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.ini")
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    assert (out / "diagnostics.csv").exists()
    assert (out / "certificates.json").exists()
    assert (out / "metadata.json").exists()
    snaps = sorted((out / "snapshots").iterdir())
    assert len(snaps) == 3   # t = 0, t = 0.025, final

    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["grid"]["n"] == "16"
    assert meta["result"]["termination"] == "completed"
    assert meta["result"]["snapshots_written"] == 3

    certs = json.loads((out / "certificates.json").read_text())
    assert all(c["satisfied"] for c in certs["certificates"])


def test_criterion_report_round_trips_the_run(tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.ini")
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    capsys.readouterr()
    assert main(["criterion-report", str(out / "diagnostics.csv")]) == 0
    printed = json.loads(capsys.readouterr().out)
    stored = json.loads((out / "certificates.json").read_text())
    assert printed == stored


def test_criterion_report_forced_flag(tmp_path, capsys):
    cfg = _write_config(tmp_path / "run.ini")
    main(["run", str(cfg)])
    capsys.readouterr()
    csv_path = str(tmp_path / "out" / "diagnostics.csv")
    assert main(["criterion-report", csv_path, "--forced"]) == 0
    report = json.loads(capsys.readouterr().out)
    energy = report["certificates"][0]
    assert energy["name"] == "energy-identity"
    assert energy["applicable"] is False


def test_criterion_report_rejects_empty_history(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["criterion-report", str(empty)]) == 1
    import vspc.diagnostics as dg
    header_only = tmp_path / "header.csv"
    dg.write_records_csv(header_only, [])
    assert main(["criterion-report", str(header_only)]) == 1


def test_run_from_snapshot_round_trip(tmp_path, capsys):
    cfg = _write_config(tmp_path / "first.ini")
    assert main(["run", str(cfg)]) == 0
    snap = sorted((tmp_path / "out" / "snapshots").iterdir())[-1]
    cfg2 = _write_config(tmp_path / "second.ini",
                         initial={"kind": "from-snapshot", "path": str(snap)},
                         output={"dir": str(tmp_path / "out2")})
    assert main(["run", str(cfg2)]) == 0
    meta = json.loads((tmp_path / "out2" / "metadata.json").read_text())
    # resumed clock: 0.05 from the first leg plus 0.05 more
    assert abs(meta["result"]["final_time"] - 0.1) < 1e-9


def test_run_from_snapshot_grid_mismatch(tmp_path):
    cfg = _write_config(tmp_path / "first.ini")
    assert main(["run", str(cfg)]) == 0
    snap = sorted((tmp_path / "out" / "snapshots").iterdir())[-1]
    cfg2 = _write_config(tmp_path / "second.ini", grid={"n": 32},
                         initial={"kind": "from-snapshot", "path": str(snap)})
    assert main(["run", str(cfg2)]) == 1


def test_zero_horizon_run(tmp_path):
    cfg = _write_config(tmp_path / "zero.ini", solver={"t_end": 0.0})
    assert main(["run", str(cfg)]) == 0
    csv_text = (tmp_path / "out" / "diagnostics.csv").read_text().strip().splitlines()
    assert len(csv_text) == 2   # header + the single t = 0 record


def test_strict_violation_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path / "strict.ini",
                        certificates={"strict": "true", "energy_tolerance": 1e-18})
    assert main(["run", str(cfg)]) == 3
    assert "energy-identity" in capsys.readouterr().err


def test_blowup_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path / "ceil.ini",
                        initial={"kind": "taylor-green"},
                        certificates={"gradu_ceiling": 0.5})
    assert main(["run", str(cfg)]) == 2
    assert "blowup" in capsys.readouterr().err


def test_verify_exact_default_passes(capsys):
    assert main(["verify-exact"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out


def test_verify_exact_rejects_equal_parameters(capsys):
    assert main(["verify-exact", "--alpha", "1.0", "--beta", "1.0"]) == 1


def test_temporal_convergence_passes(capsys):
    assert main(["convergence", "--mode", "temporal"]) == 0
    assert "order" in capsys.readouterr().out


def test_convergence_mode_is_required():
    assert main(["convergence"]) == 1
    assert main(["convergence", "--mode", "sideways"]) == 1
