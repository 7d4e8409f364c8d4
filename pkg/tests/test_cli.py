import json

import numpy as np
import pytest

from l2calib import testbed
from l2calib.cli import (CliConfigError, RunConfig, check_report, load_config,
                         main, read_data_csv, simulate)


def write_config(path, **overrides):
    doc = {
        "example": "example2",
        "methods": ["L2", "OLS"],
        "sigma2": [0.01],
        "replications": 2,
        "seed": 7,
        "design": {"kind": "fixed_grid", "n": 51},
        "quadrature_m": 128,
        "optimizer": {"grid_points": 201, "tolerance": 1e-8},
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


def write_noiseless_example1_csv(path):
    system = testbed.make_system("example1", 0.0)
    pts, y = testbed.generate(system, 0, 0)
    lines = ["x1,y"] + [f"{x:.17g},{v:.17g}" for x, v in zip(pts[:, 0], y)]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.json"))
        assert cfg.example == "example2"
        assert cfg.methods == ("L2", "OLS")
        assert cfg.sigma2 == (0.01,)
        assert cfg.optimizer.grid_points == 201

    def test_unknown_key_rejected(self, tmp_path):
        p = write_config(tmp_path / "c.json")
        doc = json.loads(p.read_text())
        doc["replicatons"] = 5
        p.write_text(json.dumps(doc))
        with pytest.raises(CliConfigError, match="replicatons"):
            load_config(p)

    def test_unknown_nested_key_rejected(self, tmp_path):
        p = write_config(tmp_path / "c.json",
                         design={"kind": "fixed_grid", "count": 51})
        with pytest.raises(CliConfigError, match="count"):
            load_config(p)

    def test_unknown_method_rejected(self, tmp_path):
        p = write_config(tmp_path / "c.json", methods=["L2", "GLS"])
        with pytest.raises(CliConfigError, match="GLS"):
            load_config(p)

    def test_invalid_json_is_config_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(CliConfigError, match="not valid JSON"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CliConfigError, match="not found"):
            load_config(tmp_path / "nope.json")


class TestDataCsv:
    def test_missing_y_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,value\n1.0,2.0\n")
        with pytest.raises(CliConfigError, match="column 'y' not found"):
            read_data_csv(p)

    def test_parse_error_names_line_and_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,y\n1.0,2.0\noops,3.0\n")
        with pytest.raises(CliConfigError, match="line 3, column 'x1'"):
            read_data_csv(p)

    def test_good_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,y\n0.5,1.5\n1.5,2.5\n")
        pts, y = read_data_csv(p)
        assert pts.shape == (2, 1)
        assert np.array_equal(y, [1.5, 2.5])

    def test_multidimensional_columns(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,x2,y\n0.5,0.1,1.5\n1.5,0.2,2.5\n")
        pts, _ = read_data_csv(p)
        assert pts.shape == (2, 2)


class TestCalibrateCommand:
    def test_noiseless_example1_and_determinism(self, tmp_path):
        data = write_noiseless_example1_csv(tmp_path / "d.csv")
        cfg = write_config(tmp_path / "c.json", example="example1",
                           methods=["L2", "OLS"])
        out1, out2 = tmp_path / "o1.csv", tmp_path / "o2.csv"
        assert main(["calibrate", "--config", str(cfg), "--data", str(data),
                     "--out", str(out1)]) == 0
        assert main(["calibrate", "--config", str(cfg), "--data", str(data),
                     "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        rows = out1.read_text().strip().splitlines()
        assert rows[0].startswith("method,theta_hat")
        l2_row = next(r for r in rows if r.startswith("L2,"))
        assert float(l2_row.split(",")[1]) == pytest.approx(-1.0, abs=1e-3)
        assert l2_row.rstrip().endswith("ok")

    def test_method_failure_isolated_per_row(self, tmp_path):
        # two observations: least squares works, the GP method needs
        # three and must fail in its own row only
        data = tmp_path / "d.csv"
        data.write_text("x1,y\n1.0,0.9\n4.0,-0.6\n")
        cfg = write_config(tmp_path / "c.json", methods=["OLS", "KO"])
        out = tmp_path / "o.csv"
        assert main(["calibrate", "--config", str(cfg), "--data", str(data),
                     "--out", str(out)]) == 0
        rows = {r.split(",")[0]: r for r in out.read_text().strip().splitlines()[1:]}
        assert rows["OLS"].rstrip().endswith("ok")
        assert "error" in rows["KO"]
        assert "at least 3" in rows["KO"]

    def test_standard_errors_emitted_for_smooth_model(self, tmp_path):
        system = testbed.make_system("example2", 0.01)
        pts, y = testbed.generate(system, 3, 0)
        data = tmp_path / "d.csv"
        lines = ["x1,y"] + [f"{x:.17g},{v:.17g}" for x, v in zip(pts[:, 0], y)]
        data.write_text("\n".join(lines) + "\n")
        cfg = write_config(tmp_path / "c.json", methods=["L2", "OLS", "KO"])
        out = tmp_path / "o.csv"
        assert main(["calibrate", "--config", str(cfg), "--data", str(data),
                     "--out", str(out)]) == 0
        rows = {r.split(",")[0]: r.split(",") for r in
                out.read_text().strip().splitlines()[1:]}
        assert float(rows["L2"][5]) > 0.0
        assert float(rows["OLS"][5]) > 0.0
        assert rows["KO"][5] == ""


class TestSimulateCommand:
    def test_single_replication_identities(self):
        cfg = RunConfig(example="example2", methods=("OLS",), sigma2=(0.01,),
                        replications=1, seed=3, quadrature_m=128)
        report = simulate(cfg, log=None)
        row = report.rows[0]
        assert row.sd == 0.0
        assert row.mse == pytest.approx((row.mean - row.theta_star) ** 2, rel=1e-12)
        assert not check_report(report)

    def test_worker_count_does_not_change_report(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", replications=4,
                           methods=["L2", "OLS"])
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1),
                     "--workers", "1", "--check"]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out2),
                     "--workers", "2", "--check"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", methods=["OLS"], replications=2)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(a),
                     "--seed", "11"]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(b),
                     "--seed", "12"]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_report_layout(self, tmp_path):
        cfg = RunConfig(example="example1", methods=("OLS",), sigma2=(0.01,),
                        replications=2, seed=5, quadrature_m=64)
        report = simulate(cfg, log=None)
        text = report.to_csv()
        header, *rows = text.strip().splitlines()
        assert header == "method,sigma2,mean,mse,sd,reps,theta_star"
        assert len(rows) == 1
        fields = rows[0].split(",")
        assert fields[0] == "OLS"
        assert int(fields[5]) == 2


class TestDiscrepancyCommand:
    def test_curve_and_check(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["discrepancy", "--example", "example2", "--steps", "401",
                     "--out", str(out), "--check"]) == 0
        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        assert rows.shape == (401, 3)
        i = int(np.argmin(rows[:, 1]))
        assert rows[i, 0] == pytest.approx(-0.1789, abs=5e-3)

    def test_example1_touches_zero_at_minus_one(self, tmp_path):
        out = tmp_path / "c1.csv"
        assert main(["discrepancy", "--example", "example1", "--steps", "401",
                     "--out", str(out)]) == 0
        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        at = np.isclose(rows[:, 0], -1.0)
        assert at.any()
        assert rows[at, 1][0] == pytest.approx(0.0, abs=1e-12)
        assert rows[at, 2][0] == pytest.approx(0.0, abs=1e-10)

    def test_rejects_bad_range(self, tmp_path):
        assert main(["discrepancy", "--theta-min", "2.0", "--theta-max", "-2.0",
                     "--out", str(tmp_path / "x.csv")]) == 1


class TestExitCodes:
    def test_config_error_is_one(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"example": "example9"}))
        assert main(["simulate", "--config", str(p)]) == 1

    def test_custom_example_needs_api(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"example": "custom"}))
        assert main(["simulate", "--config", str(p),
                     "--out", str(tmp_path / "r.csv")]) == 1

    def test_numerical_failure_is_two(self, tmp_path):
        # GP calibration needs >= 3 observations, so every replication
        # fails and the failure-rate gate aborts the run
        p = tmp_path / "c.json"
        p.write_text(json.dumps({
            "example": "example2", "methods": ["KO"], "sigma2": [0.01],
            "replications": 2, "seed": 1,
            "design": {"kind": "uniform_random", "n": 2}}))
        assert main(["simulate", "--config", str(p),
                     "--out", str(tmp_path / "r.csv")]) == 2
