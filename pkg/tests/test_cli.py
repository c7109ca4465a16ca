import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from latentrank import __version__
from latentrank.cli import main

CHAIN = ["--iterations", "1500", "--burnin", "200", "--chains", "2", "--seed", "7"]


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(0)
    x = np.round(rng.normal(size=12), 3)
    y = np.round(rng.normal(0.8, size=12), 3)
    path = tmp_path / "data.csv"
    lines = ["a,b,g,v"] + [f"{a},{b},{'ctl' if i % 2 else 'trt'},{a + i}"
                           for i, (a, b) in enumerate(zip(x, y))]
    path.write_text("\n".join(lines) + "\n")
    return path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_grid(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return rows[0], np.array(rows[1:], dtype=float)


class TestExitCodes:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "test", "--test", "spearman", "--input",
                           str(tmp_path / "nope.csv"), "--x", "a", "--y", "b")
        assert code == 2 and "not found" in err

    def test_ragged_row(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n3\n5,6\n")
        code, _, err = run(capsys, "test", "--test", "spearman", "--input", str(p),
                           "--x", "a", "--y", "b")
        assert code == 3 and "line 3" in err

    def test_non_numeric(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n3,4\n5,six\n7,8\n")
        code, _, err = run(capsys, "test", "--test", "spearman", "--input", str(p),
                           "--x", "a", "--y", "b")
        assert code == 3 and "line 4" in err and "six" in err

    def test_unknown_column(self, capsys, data):
        code, _, err = run(capsys, "test", "--test", "spearman", "--input", str(data),
                           "--x", "a", "--y", "zzz")
        assert code == 3 and "zzz" in err

    def test_sampler_precondition(self, capsys, tmp_path):
        p = tmp_path / "small.csv"
        p.write_text("a,b\n1,2\n2,1\n3,3\n")
        code, _, err = run(capsys, "test", "--test", "spearman", "--input", str(p),
                           "--x", "a", "--y", "b")
        assert code == 4 and err

    def test_all_zero_differences(self, capsys, tmp_path):
        p = tmp_path / "zero.csv"
        p.write_text("d\n0\n0\n0\n")
        code, _, _ = run(capsys, "test", "--test", "signedrank", "--input", str(p), "--diff", "d")
        assert code == 4

    def test_bad_config(self, capsys, data):
        code, _, _ = run(capsys, "test", "--test", "spearman", "--input", str(data),
                         "--x", "a", "--y", "b", "--chains", "0")
        assert code == 3


class TestJson:
    def test_schema(self, capsys, data):
        code, out, _ = run(capsys, "test", "--test", "ranksum", "--input", str(data),
                           "--x", "a", "--y", "b", *CHAIN)
        assert code == 0
        doc = json.loads(out)
        assert doc["schema_version"] == "1.0"
        assert doc["test"] == "ranksum"
        assert doc["provenance"] == {"seed": 7, "version": __version__}
        assert doc["config"]["chains"] == 2
        assert doc["bayes_factor"]["bf10"] * doc["bayes_factor"]["bf01"] == pytest.approx(1)
        assert doc["bayes_factor"]["prior_ordinate"] == pytest.approx(math.sqrt(2) / math.pi)
        assert doc["input"]["columns"] == {"x": "a", "y": "b"}
        assert len(doc["input"]["sha256"]) == 64
        assert doc["posterior"]["median"] > 0
        assert {"ess", "rhat", "acceptance_rate", "warnings"} <= set(doc["diagnostics"])

    def test_no_timestamps_and_reproducible(self, capsys, data):
        argv = ["test", "--test", "signedrank", "--input", str(data), "--x", "a", "--y", "b", *CHAIN]
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        assert first == second
        assert "time" not in first.lower() and "date" not in first.lower()

    def test_grouped_input(self, capsys, data):
        code, out, _ = run(capsys, "test", "--test", "ranksum", "--input", str(data),
                           "--value", "v", "--group", "g", "--x-level", "trt", *CHAIN)
        doc = json.loads(out)
        assert code == 0
        assert doc["input"]["columns"]["x_level"] == "trt"
        assert doc["n"] == {"x": 6, "y": 6}

    def test_signedrank_test_value(self, capsys, data):
        code, out, _ = run(capsys, "test", "--test", "signedrank", "--input", str(data),
                           "--x", "a", "--test-value", "-5", *CHAIN)
        assert code == 0
        doc = json.loads(out)
        assert doc["observed"]["matched_rank_biserial"] == 1.0
        assert isinstance(doc["observed"]["n_zero_dropped"], int)

    def test_spearman_fields(self, capsys, data):
        code, out, _ = run(capsys, "test", "--test", "spearman", "--input", str(data),
                           "--x", "a", "--y", "b", *CHAIN)
        doc = json.loads(out)
        assert code == 0
        assert doc["posterior_rho_s"]["parameter"] == "rho_s"
        assert 0 < doc["diagnostics"]["acceptance_rate"] < 1
        assert doc["prior"] == {"kind": "uniform", "cauchy_scale": None}

    def test_output_file(self, capsys, data, tmp_path):
        target = tmp_path / "out.json"
        code, out, _ = run(capsys, "test", "--test", "spearman", "--input", str(data),
                           "--x", "a", "--y", "b", "--output", str(target), *CHAIN)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["test"] == "spearman"


class TestPlotGrid:
    def test_delta_grid(self, capsys, data, tmp_path):
        grid = tmp_path / "grid.csv"
        code, out, _ = run(capsys, "test", "--test", "ranksum", "--input", str(data), "--x", "a",
                           "--y", "b", "--plot-grid", str(grid), *CHAIN)
        assert code == 0
        header, rows = read_grid(grid)
        assert header == ["value", "prior_density", "posterior_density"]
        zero = rows[rows[:, 0] == 0.0]
        assert len(zero) == 1
        assert zero[0, 1] == pytest.approx(math.sqrt(2) / math.pi, rel=1e-15)
        assert integrate.trapezoid(rows[:, 2], rows[:, 0]) == pytest.approx(1, abs=0.01)
        doc = json.loads(out)
        assert zero[0, 1] / zero[0, 2] == pytest.approx(doc["bayes_factor"]["bf10"], rel=1e-6)

    def test_rho_grid(self, capsys, data, tmp_path):
        grid = tmp_path / "grid.csv"
        code, out, _ = run(capsys, "test", "--test", "spearman", "--input", str(data), "--x", "a",
                           "--y", "b", "--plot-grid", str(grid), "--grid-points", "201", *CHAIN)
        assert code == 0
        _, rows = read_grid(grid)
        assert rows[0, 0] == -1 and rows[-1, 0] == 1
        assert np.all(rows[:, 1] == 0.5)
        assert integrate.trapezoid(rows[:, 2], rows[:, 0]) == pytest.approx(1, abs=0.01)
        zero = rows[rows[:, 0] == 0.0][0]
        assert zero[1] / zero[2] == pytest.approx(json.loads(out)["bayes_factor"]["bf10"], rel=1e-6)

    def test_too_few_points(self, capsys, data, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["test", "--test", "spearman", "--input", str(data), "--x", "a", "--y", "b",
                  "--plot-grid", str(tmp_path / "g.csv"), "--grid-points", "1"])
        assert exc.value.code == 3


class TestSimulate:
    ARGS = ["simulate", "--test", "signedrank", "--effects", "0.5", "--n", "8",
            "--replicates", "1", *CHAIN]

    def test_single_row(self, capsys):
        code, out, _ = run(capsys, *self.ARGS)
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("test,family,scenario,n,effect,replicate,statistic")

    def test_byte_identical(self, capsys):
        assert run(capsys, *self.ARGS)[1] == run(capsys, *self.ARGS)[1]

    def test_runtime_flag(self, capsys):
        code, out, _ = run(capsys, *self.ARGS, "--runtime")
        assert code == 0 and out.splitlines()[0].endswith(",runtime")

    @pytest.mark.parametrize("extra", [["--replicates", "0"], ["--n", "a,b"], ["--effects", ""],
                                       ["--family", "nope"], ["--replicates", "x"],
                                       ["--family", "clayton"]])
    def test_bad_flags(self, capsys, extra):
        argv = self.ARGS + extra
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
        assert code == 3

    def test_spearman_needs_copula(self, capsys):
        code, _, err = run(capsys, "simulate", "--test", "spearman", "--family", "normal",
                           "--replicates", "1", "--n", "10", "--effects", "0.3", *CHAIN)
        assert code == 3 and "copula" in err


def test_module_entry_point(data):
    proc = subprocess.run([sys.executable, "-m", "latentrank", "test", "--test", "spearman",
                           "--input", str(data), "--x", "a", "--y", "b", *CHAIN],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["schema_version"] == "1.0"
