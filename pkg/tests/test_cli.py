import json
from pathlib import Path

import pytest
from test_io import TWO_NODE

from dfn.cli import main

FIXTURE = Path(__file__).with_name("data") / "gap_fixture.json"


@pytest.fixture
def two_node_file(tmp_path):
    path = tmp_path / "two.json"
    path.write_text(TWO_NODE)
    return path


def test_maxflow_both_methods(two_node_file, tmp_path, capsys):
    out = tmp_path / "res.json"
    assert main(["maxflow", str(two_node_file), "--method", "both", "--output", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["energy"]["objective"] == pytest.approx(-2.0, abs=1e-6)
    assert res["micp"]["lower_bound"] == pytest.approx(-2.0, abs=1e-6)
    assert abs(res["gap"]) < 1e-6
    assert "certified optimal" in capsys.readouterr().out


def test_seed_upper_file(two_node_file, tmp_path):
    seed = tmp_path / "seed.json"
    seed.write_text(json.dumps({"objective": -1.5}))
    assert main(["maxflow", str(two_node_file), "--method", "micp", "--seed-upper", str(seed)]) == 0
    seed.write_text("[1, 2]")
    assert main(["maxflow", str(two_node_file), "--method", "micp", "--seed-upper", str(seed)]) == 2


def test_solve_nf(tmp_path, capsys):
    path = tmp_path / "q.json"
    path.write_text(TWO_NODE.replace('"cost": 1', '"cost": 1, "q": -1'))
    assert main(["solve-nf", str(path)]) == 0
    out = capsys.readouterr().out
    assert "pi[d] = 3" in out and "derived slack injection 1" in out


def test_solve_nf_without_injections_is_usage_error(two_node_file):
    assert main(["solve-nf", str(two_node_file)]) == 2


@pytest.mark.parametrize("argv", [
    ["maxflow", "/nonexistent.json"],
    ["maxflow", "{file}", "--big-m", "-1"],
    ["maxflow", "{file}", "--units", "pressure"],
    ["maxflow", "{file}", "--column", "nope"],
])
def test_input_errors_exit_2(argv, two_node_file):
    argv = [a.replace("{file}", str(two_node_file)) for a in argv]
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_infeasible_exits_4(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(TWO_NODE.replace('"x_lo": -10', '"x_lo": -0.5').replace('"pi_hi": 4.0', '"pi_hi": 3.0'))
    assert main(["maxflow", str(path), "--method", "energy"]) == 4


def test_nonconvergence_exits_3(two_node_file):
    assert main(["maxflow", str(two_node_file), "--method", "energy", "--max-outer", "1",
                 "--formulation", "1", "--epsilon", "1e-14"]) == 3


def test_check_is_deterministic(capsys):
    assert main(["check", "--monotonicity", "--trials", "20", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["check", "--monotonicity", "--trials", "20", "--seed", "3"]) == 0
    assert capsys.readouterr().out == first and first.startswith("PASS")


def test_report_from_results(tmp_path, capsys):
    assert main(["report", "--results", str(FIXTURE)]) == 0
    out = capsys.readouterr().out
    assert "4.96%" in out and "-685" in out
    csv = tmp_path / "t.csv"
    assert main(["report", "--results", str(FIXTURE), "--format", "csv", "--output", str(csv)]) == 0
    assert csv.read_text().startswith("Pressure bounds,")


def test_invalid_thread_count(monkeypatch, two_node_file):
    monkeypatch.setenv("DFN_THREADS", "many")
    assert main(["report", str(two_node_file)]) == 2


def test_report_solves_file(monkeypatch, two_node_file, capsys):
    monkeypatch.setenv("DFN_THREADS", "1")
    assert main(["report", str(two_node_file)]) == 0
    assert "certified optimal" in capsys.readouterr().out


def test_report_compression_modes(tmp_path, capsys):
    path = tmp_path / "boost.json"
    path.write_text(TWO_NODE.replace('"delta": 1.0', '"delta": 1.0, "b_lo": 0, "b_hi": 5, "compressor": true')
                    .replace('"pi_lo": 0.0', '"pi_lo": 1.0'))
    assert main(["report", str(path), "--compression", "both", "--format", "csv"]) == 0
    off, on = capsys.readouterr().out.strip().split("\n\n")
    assert "Energy heuristic,-1.73205" in off and "MIQP lower bound,-1.73205" in off
    assert "Energy heuristic,-2.82843" in on and "MIQP lower bound,-2.82843" in on
