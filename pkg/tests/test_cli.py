import csv
import io
import json
import subprocess
import sys

import pytest

from bellpost.cli import EXIT_FAILED, EXIT_NO_SOLUTION, EXIT_OK, EXIT_USAGE, run

from .conftest import SQRT2


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), buf)
    return code, buf.getvalue()


def call_json(*argv):
    code, out = call(*argv, "--format", "json")
    return code, json.loads(out)


def test_table1_csv():
    code, out = call("table1")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["inequality"] for r in rows] == ["chsh", "mermin", "svetlichny"]
    assert float(rows[0]["eta_c_star"]) == pytest.approx(2 * (SQRT2 - 1), abs=1e-11)
    assert float(rows[2]["eta_det_star_ys"]) == pytest.approx(36 / (35 + SQRT2), abs=1e-11)
    assert rows[1]["eta_det_star_ys"] == "0.9"


def test_csv_digits():
    code, out = call("sharpen", "--inequality", "chsh", "--eta-c", "0.9", "--format", "csv")
    assert code == EXIT_OK
    row = next(csv.DictReader(io.StringIO(out)))
    # 2 + 2 * 2 * (1 - 0.1/0.9) ... printed to 12 significant digits
    assert row["bound"] == "2.44444444444"


def test_report_fields():
    code, rep = call_json("ys", "analytic", "--parties", "3", "--eta-det", "0.9")
    assert code == EXIT_OK
    assert set(rep) == {"command", "inputs", "results", "version", "wall_time"}
    assert rep["command"] == "ys analytic"
    assert rep["results"]["eta_c"] == pytest.approx(0.75, abs=1e-15)


def test_ys_analytic_ideal():
    code, rep = call_json("ys", "analytic", "--parties", "3", "--eta-det", "1", "--eta-tra", "1", "--eta-1of2", "0")
    assert rep["results"]["eta_c"] == 1.0


def test_ys_analytic_grid():
    code, rep = call_json("ys", "analytic", "--parties", "2", "--eta-det", "0.9", "0.95", "--eta-tra", "1", "0.99")
    assert code == EXIT_OK
    assert len(rep["results"]["rows"]) == 4


def test_bound_json():
    code, rep = call_json("bound", "--inequality", "svetlichny", "--model-class", "HLNHV")
    assert code == EXIT_OK
    assert rep["results"]["bound"] == 4.0
    assert set(rep["results"]["witness"]) == {"lone_party", "pair", "lone_response", "pair_vertex"}


def test_quantum_optimize():
    code, rep = call_json("quantum", "--inequality", "chsh", "--optimize", "--restarts", "4")
    assert code == EXIT_OK
    assert rep["results"]["value"] == pytest.approx(2 * SQRT2, abs=1e-6)


def test_threshold():
    code, rep = call_json("threshold", "--inequality", "mermin")
    assert rep["results"]["eta_c_star"] == pytest.approx(0.75, abs=1e-12)


def test_dsep_json():
    code, rep = call_json("dsep", "--diagram", "lhv", "--parties", "2", "--from", "X1", "--to", "Lambda", "--given", "D1", "D2")
    assert code == EXIT_OK
    assert rep["results"]["separated"] is False
    nodes = [w["node"] for w in rep["results"]["witness"]]
    assert nodes[0] == "X1" and nodes[-1] == "Lambda"


def test_verify_local_chain():
    code, rep = call_json("verify", "appendix-b", "--trials", "50", "--seed", "7")
    assert code == EXIT_OK
    assert rep["results"]["passed"] is True


def test_verify_causal():
    code, rep = call_json("verify", "causal")
    assert code == EXIT_OK


def test_usage_error():
    assert call("nonsense")[0] == EXIT_USAGE
    assert call("sharpen", "--inequality", "chsh")[0] == EXIT_USAGE
    assert call("sharpen", "--inequality", "nope", "--eta-c", "0.9")[0] == EXIT_USAGE


def test_no_solution_exit():
    code, out = call("ys", "threshold", "--parties", "2", "--on-off", "--inequality", "chsh")
    assert code == EXIT_NO_SOLUTION
    rep = json.loads(out)
    assert rep["results"]["error"] == "NoSolutionError"
    assert rep["inputs"]["on_off"] is True


def test_failed_check_exit_code():
    # an unreachable target makes the loophole check fail
    code, rep = call_json("verify", "loophole", "--target", "4", "--iterations", "300")
    assert code == EXIT_FAILED
    assert rep["results"]["passed"] is False


def test_deterministic_output():
    argv = ("ys", "simulate", "--parties", "3", "--eta-det", "0.9", "--samples", "20000", "--seed", "5")
    a = call_json(*argv)[1]
    b = call_json(*argv)[1]
    a.pop("wall_time")
    b.pop("wall_time")
    assert a == b


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "bellpost", "threshold", "--inequality", "chsh", "--format", "json"],
        capture_output=True, text=True, check=True,
    )
    assert json.loads(out.stdout)["results"]["eta_c_star"] == pytest.approx(2 * (SQRT2 - 1))
