"""Command-line driver: exit codes, artifact layout, reproducibility,
and verification of tampered outputs."""

import json

import pytest

from torusobs.cli import (
    CONTINUOUS_HEADER,
    SERIES_HEADER,
    main,
)
from test_experiment import config_dict


def write_config(tmp_path, name="run.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(config_dict(**overrides)))
    return path


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    return lines[0], lines[1], [line.split(",") for line in lines[2:]]


def test_design_command_writes_reduced_design(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["design", "--config", str(config), "--out", str(out)]) == 0
    payload = json.loads((out / "design_K1.json").read_text())
    assert len(payload["atoms"]) == 5
    assert payload["residual"] <= 1e-12
    assert payload["verification"]["max_scalar_deviation"] <= 1e-10
    assert "design_K1.json" in capsys.readouterr().out


def test_design_command_full_torus_collapses_to_one_atom(tmp_path):
    config = write_config(tmp_path, prototype={"boxes": [[0, 1]]})
    out = tmp_path / "out"
    assert main(["design", "--config", str(config), "--out", str(out)]) == 0
    payload = json.loads((out / "design_K1.json").read_text())
    assert len(payload["atoms"]) == 1
    assert payload["atoms"][0]["weight"] == pytest.approx(1.0, abs=1e-12)


def test_design_command_solver_method(tmp_path):
    config = write_config(
        tmp_path, design={"method": "solver", "cutoff": 1, "tol": 1e-10}
    )
    out = tmp_path / "out"
    assert main(["design", "--config", str(config), "--out", str(out)]) == 0
    payload = json.loads((out / "design_K1.json").read_text())
    assert payload["residual"] <= 1e-9


def test_missing_config_exits_2(tmp_path, capsys):
    rc = main(["design", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config_dict(flavor="spicy")))
    assert main(["design", "--config", str(path)]) == 2
    assert "flavor" in capsys.readouterr().err


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{oops")
    assert main(["design", "--config", str(path)]) == 2


def test_infeasible_design_exits_3(tmp_path, capsys):
    config = write_config(
        tmp_path,
        design={
            "method": "solver",
            "cutoff": 1,
            "tol": 1e-20,
            "candidate_kind": "random",
            "candidates": 6,
            "max_iter": 300,
        },
    )
    assert main(["design", "--config", str(config), "--out", str(tmp_path / "o")]) == 3
    assert "DesignInfeasible" in capsys.readouterr().err


def test_slow_speeds_exit_3(tmp_path, capsys):
    config = write_config(
        tmp_path,
        model="wave",
        datum={"window": 2, "seed": 2},
        schedule={"speeds": [0.5], "interval": 1},
    )
    rc = main(["continuous", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "SpeedTooLow" in capsys.readouterr().err


def test_experiment_artifacts(tmp_path, capsys):
    config = write_config(tmp_path, schedule={"emit_intervals": [1], "interval": 1})
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(config), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "final running-mean ratio:" in stdout

    for name in (
        "series.csv",
        "calibration.json",
        "design_K1.json",
        "design_K2.json",
        "schedule_m1.csv",
        "schedule_m1.json",
        "run_meta.json",
    ):
        assert (out / name).exists(), name

    version, header, rows = read_csv(out / "series.csv")
    assert version.startswith("# torusobs series v1")
    assert header == SERIES_HEADER
    assert len(rows) == 4
    assert [row[0] for row in rows] == ["1", "2", "3", "4"]
    # the first running mean is the first observation
    assert rows[0][3] == rows[0][4]

    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["interval_count"] == 4
    assert meta["final_ratio"] > 0

    sidecar = json.loads((out / "schedule_m1.json").read_text())
    _, sched_header, sched_rows = read_csv(out / "schedule_m1.csv")
    assert sched_header == "t_start,t_end,atom,shift_0"
    assert len(sched_rows) == sidecar["emitted_rows"] == sidecar["total_rows"]
    starts = [float(r[0]) for r in sched_rows]
    assert starts == sorted(starts)


def test_schedule_row_cap(tmp_path):
    config = write_config(
        tmp_path,
        schedule={"emit_intervals": [1], "interval": 1, "csv_row_cap": 7},
    )
    out = tmp_path / "out"
    assert main(["schedule", "--config", str(config), "--out", str(out)]) == 0
    sidecar = json.loads((out / "schedule_m1.json").read_text())
    _, _, rows = read_csv(out / "schedule_m1.csv")
    assert sidecar["emitted_rows"] == 7
    assert len(rows) == 7
    assert sidecar["total_rows"] > 7
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 0


def test_experiment_is_reproducible(tmp_path):
    config = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["experiment", "--config", str(config), "--out", str(out1)]) == 0
    assert main(["experiment", "--config", str(config), "--out", str(out2)]) == 0
    for name in ("series.csv", "calibration.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_threads_do_not_change_series(tmp_path):
    config = write_config(tmp_path)
    out1, out3 = tmp_path / "t1", tmp_path / "t3"
    assert main(["experiment", "--config", str(config), "--out", str(out1)]) == 0
    rc = main(
        ["experiment", "--config", str(config), "--out", str(out3), "--threads", "3"]
    )
    assert rc == 0
    assert (out1 / "series.csv").read_bytes() == (out3 / "series.csv").read_bytes()


def test_experiment_check_flag(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["experiment", "--config", str(config), "--out", str(out), "--check"])
    assert rc == 0


def test_verify_detects_series_tampering(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(config), "--out", str(out)]) == 0
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 0
    assert "verify: ok" in capsys.readouterr().out

    series = out / "series.csv"
    lines = series.read_text().splitlines()
    cells = lines[3].split(",")
    cells[4] = repr(float(cells[4]) + 0.5)  # running mean no longer matches
    lines[3] = ",".join(cells)
    series.write_text("\n".join(lines) + "\n")
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 3
    assert "series.csv" in capsys.readouterr().err


def test_verify_detects_design_tampering(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(config), "--out", str(out)]) == 0
    path = out / "design_K1.json"
    payload = json.loads(path.read_text())
    payload["atoms"][0]["weight"] += 0.05
    payload["atoms"][1]["weight"] -= 0.05
    path.write_text(json.dumps(payload))
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 3
    assert "design_K1.json" in capsys.readouterr().err


def test_continuous_command(tmp_path, capsys):
    config = write_config(
        tmp_path,
        model="wave",
        datum={"window": 2, "seed": 2},
        schedule={"speeds": [200.0, 10000.0], "interval": 1},
    )
    out = tmp_path / "out"
    assert main(["continuous", "--config", str(config), "--out", str(out)]) == 0
    version, header, rows = read_csv(out / "continuous.csv")
    assert version.startswith("# torusobs continuous v1")
    assert header == CONTINUOUS_HEADER
    assert {row[0] for row in rows} == {"200.0", "10000.0"}
    assert len(rows) == 8  # two speeds x four intervals

    report = json.loads((out / "continuous_report.json").read_text())
    assert report["monotone_ok"] and report["realized_ok"]
    assert report["certified_factors"]["10000.0"] > 0.0
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 0


def test_calibrate_command(tmp_path):
    config = write_config(tmp_path, model="wave", datum={"window": 2, "seed": 2})
    out = tmp_path / "out"
    assert main(["calibrate", "--config", str(config), "--out", str(out)]) == 0
    payload = json.loads((out / "calibration.json").read_text())
    assert payload["lower"] == pytest.approx(0.5)
    assert payload["upper"] == pytest.approx(1.0)
