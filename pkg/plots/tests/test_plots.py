"""Figure rendering from CSVs: slope fitting, both commands, error paths."""

import csv

import numpy as np
import pytest

from chronos_plots.cli import main_convergence, main_work_precision
from chronos_plots.plotting import (PlotDataError, convergence_series, fit_slope,
                                    plot_convergence, plot_work_precision)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture
def synthetic_h2(tmp_path):
    path = tmp_path / "h2.csv"
    hs = [2.0 ** (-i) for i in range(6)]
    write_csv(path, ["h", "error"], [[h, 0.37 * h * h] for h in hs])
    return path


@pytest.fixture
def harness_convergence_csv(tmp_path):
    # mirrors the gray-scott splitting schema (long format with a flag column)
    path = tmp_path / "gs.csv"
    hs = [2.0 ** (-i) for i in range(8)]
    rows = []
    for name, order in [("lie-trotter", 1), ("strang", 2), ("suzuki3", 3),
                        ("yoshida4", 4), ("yoshida6", 6)]:
        for h in hs:
            rows.append([name, order, h, 0.2 * h ** order, 0.01, int(10 / h), "ok"])
    rows.append(["strang", 2, 2.0, float("nan"), 0.0, 5, "blowup"])
    write_csv(path, ["method", "order", "h", "error", "time_s", "steps", "flag"],
              rows)
    return path


@pytest.fixture
def harness_lsrk_csv(tmp_path):
    path = tmp_path / "lsrk.csv"
    rows = []
    for method, base in [("rkc", 0.3), ("erk2", 1.0)]:
        for i, reltol in enumerate([1e-2, 1e-3, 1e-4, 1e-5]):
            rows.append([method, reltol, reltol * 0.5, base * (1.5 ** i),
                         100 + i, i, 300, 10])
    write_csv(path, ["method", "reltol", "error", "time_s", "steps",
                     "rejections", "nfe", "max_stages"], rows)
    return path


class TestSlopeFitting:
    def test_synthetic_h2_slope(self, synthetic_h2, capsys, tmp_path):
        slopes = plot_convergence(synthetic_h2, tmp_path / "out.png")
        assert slopes["error"] == pytest.approx(2.0, abs=0.01)
        assert "fitted slope 2.00" in capsys.readouterr().out

    def test_reproducible_to_1e10(self, harness_convergence_csv):
        series = convergence_series(harness_convergence_csv)
        first = {k: fit_slope(h, e) for k, (h, e) in series.items()}
        second = {k: fit_slope(h, e) for k, (h, e) in series.items()}
        for key in first:
            assert abs(first[key] - second[key]) <= 1e-10

    def test_flagged_rows_excluded(self, harness_convergence_csv):
        series = convergence_series(harness_convergence_csv)
        h, err = series["strang"]
        assert len(h) == 8  # the blowup row is dropped
        assert np.all(np.isfinite(err))
        assert fit_slope(h, err) == pytest.approx(2.0, abs=0.01)


class TestConvergenceCommand:
    def test_harness_csv_renders_five_series(self, harness_convergence_csv,
                                             tmp_path, capsys):
        out = tmp_path / "conv.png"
        code = main_convergence(["--csv", str(harness_convergence_csv),
                                 "--out", str(out), "--orders", "1,2,3,4,6"])
        assert code == 0
        assert out.exists() and out.stat().st_size > 0
        text = capsys.readouterr().out
        for name in ("lie-trotter", "strang", "suzuki3", "yoshida4", "yoshida6"):
            assert name in text

    def test_empty_csv_errors(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        code = main_convergence(["--csv", str(path), "--out",
                                 str(tmp_path / "x.png")])
        assert code != 0
        assert "error:" in capsys.readouterr().err

    def test_header_only_csv_errors(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("h,error\n")
        code = main_convergence(["--csv", str(path), "--out",
                                 str(tmp_path / "x.png")])
        assert code != 0

    def test_missing_h_column_errors(self, tmp_path, capsys):
        path = tmp_path / "noh.csv"
        write_csv(path, ["step", "error"], [[1, 0.1]])
        code = main_convergence(["--csv", str(path), "--out",
                                 str(tmp_path / "x.png")])
        assert code != 0
        assert "h" in capsys.readouterr().err


class TestWorkPrecisionCommand:
    def test_harness_lsrk_two_series(self, harness_lsrk_csv, tmp_path, capsys):
        out = tmp_path / "wp.png"
        code = main_work_precision(["--csv", str(harness_lsrk_csv),
                                    "--out", str(out)])
        assert code == 0
        assert out.exists() and out.stat().st_size > 0
        text = capsys.readouterr().out
        assert "rkc: 4 points" in text and "erk2: 4 points" in text

    def test_single_row_csv(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, ["method", "reltol", "error", "time_s"],
                  [["rkc", 1e-2, 1e-3, 0.5]])
        out = tmp_path / "one.png"
        assert main_work_precision(["--csv", str(path), "--out", str(out)]) == 0
        assert out.exists()

    def test_non_numeric_cell_names_row_and_column(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        write_csv(path, ["method", "error", "time_s"],
                  [["rkc", "0.1", "0.5"], ["rkc", "oops", "0.7"]])
        code = main_work_precision(["--csv", str(path), "--out",
                                    str(tmp_path / "x.png")])
        assert code != 0
        err = capsys.readouterr().err
        assert "row 3" in err and "'error'" in err

    def test_missing_column_errors(self, tmp_path):
        path = tmp_path / "m.csv"
        write_csv(path, ["method", "error"], [["rkc", 0.1]])
        assert main_work_precision(["--csv", str(path), "--out",
                                    str(tmp_path / "x.png")]) != 0
