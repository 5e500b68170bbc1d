import json

import numpy as np
import pytest

from trajopt.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    for name in ("block_move", "pendulum_swingup", "particle_field", "cannon", "hammer"):
        assert name in out


def test_unknown_problem(capsys):
    code, _, err = run(capsys, "solve", "--problem", "walker")
    assert code == 2
    assert "block_move" in err and len(err.strip().splitlines()) == 1


def test_multiple_shooting_one_segment(capsys):
    code, _, err = run(capsys, "solve", "--problem", "block_move", "--method", "multiple_shooting",
                       "--segments", "1")
    assert code == 2
    assert "single_shooting" in err


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--problem", "block_move", "--schedule", "20,5"])
    assert info.value.code == 2


def test_solve_writes_outputs(tmp_path, capsys):
    csv_path, json_path, plot = tmp_path / "t.csv", tmp_path / "r.json", tmp_path / "plot"
    code, _, _ = run(capsys, "solve", "--problem", "block_move", "--method", "multiple_shooting",
                     "--segments", "20", "--verify", "--out-csv", str(csv_path),
                     "--out-json", str(json_path), "--plot-data", str(plot))
    assert code == 0
    doc = json.loads(json_path.read_text())
    assert list(doc) == ["problem", "method", "grid", "status", "objective", "defect_max",
                         "max_violation", "outer_iters", "inner_iters", "verify", "wall_time_s"]
    assert doc["status"] == "optimal"
    assert abs(doc["objective"] - 12.0) <= 0.12
    assert doc["verify"]["pass"] is True
    assert doc["wall_time_s"] is None
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x0,x1,u0,phase"
    assert len(lines) == 22
    first = lines[1].split(",")
    assert first[-1] == "0"
    assert len(lines[5].split(",")[2].replace("-", "").replace(".", "").lstrip("0")) <= 17
    assert sorted(p.name for p in plot.iterdir()) == ["control_0.dat", "cost_accum.dat", "state_0.dat",
                                                      "state_1.dat"]
    acc = np.loadtxt(plot / "cost_accum.dat")
    assert acc[-1, 1] == pytest.approx(12.0, rel=0.02)

    code, out, _ = run(capsys, "verify", "--problem", "block_move", "--csv", str(csv_path),
                       "--report", str(json_path))
    assert code == 0 and json.loads(out)["pass"] is True


def test_verify_detects_corrupted_csv(tmp_path, capsys):
    csv_path, json_path = tmp_path / "t.csv", tmp_path / "r.json"
    run(capsys, "solve", "--problem", "block_move", "--segments", "10", "--out-csv", str(csv_path),
        "--out-json", str(json_path))
    lines = csv_path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[1] = repr(float(cells[1]) + 0.1)
    lines[3] = ",".join(cells)
    csv_path.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "verify", "--problem", "block_move", "--csv", str(csv_path),
                       "--report", str(json_path))
    assert code == 3 and json.loads(out)["pass"] is False


def test_orthogonal_round_trip_through_csv(tmp_path, capsys):
    csv_path, json_path = tmp_path / "t.csv", tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--problem", "pendulum_swingup", "--method", "orthogonal_collocation",
                     "--segments", "4", "--poly-order", "6", "--out-csv", str(csv_path),
                     "--out-json", str(json_path), "--verify")
    assert code == 0
    code, out, _ = run(capsys, "verify", "--problem", "pendulum_swingup", "--csv", str(csv_path),
                       "--report", str(json_path))
    assert code == 0


def test_non_optimal_exit_code(tmp_path, capsys):
    code, out, err = run(capsys, "solve", "--problem", "pendulum_swingup", "--segments", "10",
                         "--max-outer", "1", "--max-inner", "2")
    assert code == 1
    assert json.loads(out)["status"] != "optimal"


def test_schedule_reaches_feasibility(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "pendulum_swingup", "--schedule", "5,20")
    doc = json.loads(out)
    assert code == 0
    assert doc["grid"]["segments"] == [20]
    assert doc["defect_max"] <= 1e-6


def test_polyfit_guess_and_timing(capsys):
    code, out, _ = run(capsys, "solve", "--problem", "block_move", "--method", "direct_collocation",
                       "--segments", "10", "--guess", "polyfit", "--timing", "--regularization", "1e-9")
    doc = json.loads(out)
    assert code == 0
    assert isinstance(doc["wall_time_s"], float)


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "trajopt", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "hammer" in res.stdout
