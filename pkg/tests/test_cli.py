import json
import subprocess
import sys

import numpy as np
import pytest

from prioq import io
from prioq.cli import EXIT_DIVERGENCE, EXIT_IO, EXIT_USAGE, main, parse_range


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main(list(argv) + ["--out", str(out)])
    return code, out


def _column(path, name):
    _, cols, rows = io.read_csv(path)
    i = cols.index(name)
    return np.array([float(r[i]) if r[i] else np.nan for r in rows])


def test_parse_range_is_inclusive():
    assert parse_range("0.05:0.5:0.05")[-1] == 0.5
    assert len(parse_range("0.1:0.99:0.01")) == 90
    assert parse_range("1:1:0.5") == [1.0]


def test_simulate_outputs(tmp_path):
    code, out = _run(tmp_path, "simulate", "--p", "0", "--steps", "100000", "--seed", "1")
    assert code == 0
    cfg, cols, rows = io.read_csv(out / "histogram.csv")
    assert cols == ["k", "count"] and cfg["p"] == 0.0 and cfg["seed"] == 1
    counts = _column(out / "histogram.csv", "count")
    k = _column(out / "histogram.csv", "k")
    pmf = counts / counts.sum()
    assert np.all(np.abs(pmf[:8] - 0.5 ** k[:8]) < 0.01)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["steps"] == 100000
    assert abs(summary["mean_tau"] - 2) < 0.02
    assert summary["replicas"][0]["accounting_identity"] is True
    assert "renewal_count" in summary and "residual_fraction" in summary
    assert (out / "priorities.csv").exists()


def test_solve_uniform_selection(tmp_path):
    code, out = _run(tmp_path, "solve", "--p", "0", "--c", "0.2", "--nodes", "64")
    assert code == 0
    r1 = _column(out / "density.csv", "r1_normalized")
    assert np.allclose(r1, 1 / 0.8, rtol=1e-12)
    meta = json.loads((out / "solve.json").read_text())
    assert meta["n_terms"] == 1 and meta["hs_norm"] == 0.0


def test_scan_table(tmp_path):
    code, out = _run(tmp_path, "scan", "--c-range", "0.2:0.2:0.1", "--p-range", "0.5:0.99:0.07",
                     "--nodes", "64")
    assert code == 0
    hs = _column(out / "region.csv", "hs_norm")
    assert np.all(np.diff(hs) > 0)
    _, _, rows = io.read_csv(out / "region.csv")
    conv = [r[3] == "true" for r in rows]
    assert conv == sorted(conv, reverse=True)


def test_pmf_near_one_tail(tmp_path):
    code, out = _run(tmp_path, "pmf", "--protocol", "barabasi", "--p", "0.999", "--kmax", "100")
    assert code == 0
    k = _column(out / "pmf.csv", "k")
    pmf = _column(out / "pmf.csv", "probability")
    scaled = ((k - 1) * pmf)[9:]
    assert scaled.max() / scaled.min() < 1.1
    assert np.allclose(_column(out / "pmf.csv", "ln_k"), np.log(k))


def test_pmf_proportional_has_bounds(tmp_path):
    code, out = _run(tmp_path, "pmf", "--protocol", "proportional", "--p", "0.9", "--c", "0.2",
                     "--kmax", "20", "--nodes", "128")
    assert code == 0
    pmf, lo, hi = (_column(out / "pmf.csv", c) for c in ("probability", "lower", "upper"))
    assert np.isnan(lo[0]) and np.all((lo[1:] <= pmf[1:]) & (pmf[1:] <= hi[1:]))


def test_records_outputs(tmp_path):
    code, out = _run(tmp_path, "records", "--runs", "200", "--k", "12", "--lil-k", "500")
    assert code == 0
    T = _column(out / "records.csv", "T_k")
    assert T[0] == 1 and np.all(np.diff(T) > 0)
    battery = json.loads((out / "battery.json").read_text())
    assert {"slln", "clt_ks", "lil_band", "ratio_ks"} <= set(battery)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p": 0.8, "steps": 5000, "burnin": 100, "no-samples": True}))
    code, out = _run(tmp_path, "simulate", "--config", str(cfg), "--p", "0.3")
    assert code == 0
    header, _, _ = io.read_csv(out / "histogram.csv")
    assert header["p"] == 0.3 and header["steps"] == 5000 and header["no_samples"] is True
    assert not (out / "priorities.csv").exists()


def test_usage_errors(tmp_path, capsys):
    code, _ = _run(tmp_path, "simulate", "--protocol", "proportional", "--L", "4")
    assert code == EXIT_USAGE
    assert "--L 4" in capsys.readouterr().err
    assert _run(tmp_path, "simulate", "--steps", "10", "--burnin", "10")[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--p", "1.5"])
    assert info.value.code == EXIT_USAGE
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": 1}))
    with pytest.raises(SystemExit) as info:
        main(["solve", "--config", str(cfg)])
    assert info.value.code == EXIT_USAGE


def test_divergence_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "solve", "--p", "0.999", "--c", "0.001", "--method", "neumann")
    assert code == EXIT_DIVERGENCE
    assert "hs_norm=1.1" in capsys.readouterr().err
    assert _run(tmp_path, "solve", "--p", "0.999", "--c", "0.001", "--method", "auto")[0] == 0


def test_io_exit_codes(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["solve", "--nodes", "32", "--out", str(blocker / "sub")]) == EXIT_IO
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_IO


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "prioq", "pmf", "--p", "0.5", "--kmax", "5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "P(tau=1)" in proc.stdout


def test_csv_floats_round_trip(tmp_path):
    vals = np.array([0.1, 1 / 3, 2.0 ** -60, 1e300])
    io.write_csv(tmp_path / "x.csv", ["x"], [vals], {"a": 1})
    assert np.array_equal(_column(tmp_path / "x.csv", "x"), vals)
