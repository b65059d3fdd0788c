import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from geoshape.cli import main
from geoshape.constellation import load_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_square(tmp_path, capsys):
    out = tmp_path / "qam16.csv"
    code, _, _ = run(capsys, "generate", "--kind", "square", "--m", "16", "--pairs", "1",
                     "-o", str(out))
    assert code == 0
    c = load_csv(out)
    assert c.M == 16 and sorted(c.labels.tolist()) == list(range(16))
    assert out.with_suffix(".json").exists()
    for i in range(16):
        for j in range(i):
            if np.isclose(np.linalg.norm(c.points[i] - c.points[j]), 2.0):
                assert bin(int(c.labels[i] ^ c.labels[j])).count("1") == 1


def test_generate_is_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "generate", "--kind", "gaussian", "--m", "64", "--pairs", "2",
                   "--seed", "1", "-o", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_generate_bad_args_exit_2(capsys):
    code, out, err = run(capsys, "generate", "--kind", "square", "--m", "8", "--pairs", "1")
    assert code == 2 and "error" in err and out == ""
    assert run(capsys, "generate", "--kind", "square", "--m", "12")[0] == 2


def test_argparse_errors_exit_2():
    r = subprocess.run([sys.executable, "-m", "geoshape", "generate", "--kind", "hex", "--m", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "invalid choice" in r.stderr


def test_evaluate_16qam(capsys):
    code, out, _ = run(capsys, "evaluate", "--kind", "square", "--m", "16", "--snr-db", "10")
    assert code == 0
    rep = json.loads(out)
    for key in ("mi", "gmi", "capacity_2d", "gap_gmi"):
        assert key in rep
    assert rep["gmi"] <= rep["mi"] <= rep["capacity_2d"]
    assert rep["gap_gmi"] == pytest.approx(rep["capacity_2d"] - rep["gmi"], abs=2e-6)


def test_evaluate_from_file_and_fibre(tmp_path, capsys):
    f = tmp_path / "c.csv"
    run(capsys, "generate", "--kind", "ring", "--m", "16", "-o", str(f))
    code, out, _ = run(capsys, "evaluate", "--constellation", str(f), "--fibre-c", "0.4",
                       "--fibre-snr-gaussian-db", "12")
    rep = json.loads(out)
    assert code == 0 and rep["snr_db"] > 12 and rep["excess_kurtosis"] < 0
    assert run(capsys, "evaluate", "--kind", "square", "--m", "16")[0] == 2


@pytest.mark.parametrize("metric", ["mi", "gmi"])
def test_gradcheck_passes(capsys, metric):
    code, out, _ = run(capsys, "gradcheck", "--kind", "gaussian", "--m", "16", "--snr-db", "10",
                       "--metric", metric, "--seed", "4")
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and rep["max_rel_err"] < 1e-6


def test_gradcheck_nonlinear(capsys):
    code, out, _ = run(capsys, "gradcheck", "--kind", "gaussian", "--m", "8", "--snr-db", "10",
                       "--fibre-c", "0.4")
    assert code == 0 and json.loads(out)["objective"] == "nonlinear"


def test_gradcheck_large_step_warns(capsys):
    code, out, err = run(capsys, "gradcheck", "--kind", "gaussian", "--m", "16", "--snr-db", "10",
                         "--fd-step", "1e-1")
    rep = json.loads(out)
    assert code == 0 and rep["max_rel_err"] > 1e-6 and not rep["pass"] and "warning" in err
    assert run(capsys, "gradcheck", "--kind", "gaussian", "--m", "16", "--snr-db", "10",
               "--fd-step", "0")[0] == 2


def test_optimize_writes_outputs(tmp_path, capsys):
    out = tmp_path / "opt.csv"
    code, stdout, _ = run(capsys, "optimize", "--m", "16", "--snr-db", "8", "--starts",
                          "square,ring", "--seed", "7", "-o", str(out))
    assert code == 0
    summary = json.loads(stdout)
    assert summary["start"] in ("square", "ring")
    c = load_csv(out)
    assert np.sum(c.points ** 2) == pytest.approx(16.0)
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["design_snr_db"] == 8 and meta["metric"] == "gmi"
    trace = (tmp_path / "opt_trace.csv").read_text().splitlines()
    assert trace[0].startswith("iter,") and len(trace) > 2
    first = out.read_bytes()
    run(capsys, "optimize", "--m", "16", "--snr-db", "8", "--starts", "square,ring",
        "--seed", "7", "-o", str(out))
    assert out.read_bytes() == first
    assert run(capsys, "optimize", "--m", "16", "--snr-db", "8", "--starts", "hex")[0] == 2


def sweep_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_saturation(capsys):
    code, out, _ = run(capsys, "sweep", "--m", "4", "--snr-db", "40", "--metric", "mi")
    row = sweep_rows(out)[0]
    assert code == 0
    cap = np.log2(1 + 10 ** 4)
    assert float(row["gap"]) == pytest.approx(cap - 2, abs=1e-5)


def test_sweep_gap_non_negative_and_deterministic(tmp_path, capsys):
    args = ["sweep", "--m", "16,32", "--snr-db", "4:12:4", "--jobs", "2", "--max-iters", "40"]
    code, out, _ = run(capsys, *args)
    rows = sweep_rows(out)
    assert code == 0 and len(rows) == 6
    assert all(float(r["gap"]) >= -1e-3 for r in rows)
    _, again, _ = run(capsys, *args)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rs]
    assert strip(sweep_rows(again)) == strip(rows)
    code, _, _ = run(capsys, *args[:5], "--max-iters", "5", "-o", str(tmp_path / "sw"))
    assert (tmp_path / "sw" / "sweep.csv").exists() and (tmp_path / "sw" / "M16_snr4.csv").exists()


def test_sweep_spec_errors(capsys):
    assert run(capsys, "sweep", "--m", "16", "--snr-db", "12,10")[0] == 2
    assert run(capsys, "sweep", "--m", "12", "--snr-db", "10")[0] == 2


def test_sweep_all_cells_fail(capsys):
    with pytest.warns(RuntimeWarning):
        code, out, _ = run(capsys, "sweep", "--m", "4", "--pairs", "2", "--snr-db", "10")
    assert code == 1 and sweep_rows(out)[0]["gap"] == "nan"


@pytest.mark.slow
def test_sweep_m64_gap_curve_has_interior_minimum(capsys):
    code, out, _ = run(capsys, "sweep", "--m", "64", "--snr-db", "10:16:1")
    gaps = [float(r["gap"]) for r in sweep_rows(out)]
    assert code == 0 and len(gaps) == 7
    k = int(np.argmin(gaps))
    assert 0 < k < len(gaps) - 1
    assert gaps[-1] > gaps[k]
