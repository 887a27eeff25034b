import json
import math
import subprocess
import sys

import pytest

from nstaylor import artifacts, cli, oracle
from nstaylor.trigpoly import tp_max_abs


@pytest.fixture(autouse=True)
def no_env_override(monkeypatch):
    monkeypatch.delenv("NSTAYLOR_OUTPUT_DIR", raising=False)


def write_config(tmp_path, body, name="run.cfg"):
    out = tmp_path / "out"
    path = tmp_path / name
    path.write_text(body + f"output.dir = {out}\n")
    return path, out


TG = "problem.initial = taylor_green\nproblem.nu = 0.1\nproblem.order = 10\n"


class TestRun:
    def test_taylor_green_norms(self, tmp_path):
        cfg, out = write_config(tmp_path, TG)
        assert cli.main(["run", str(cfg)]) == 0
        rows = artifacts.read_diagnostics(out / "diagnostics.csv")
        u0max = 1.0
        for r in rows:
            want = 0.2 ** r["order"] / math.factorial(r["order"]) * u0max
            assert r["max_norm_u"] == pytest.approx(want, rel=1e-10)
        radius = artifacts.read_json(out / "radius.json")
        assert radius["estimates"]["max"]["ratio"]["radius_lower_hint"] == "unbounded"
        assert "periodic box" in artifacts.read_json(out / "run.json")["domain"]

    def test_dumps_round_trip(self, tmp_path):
        cfg, out = write_config(tmp_path, TG)
        cli.main(["run", str(cfg)])
        files = sorted(p.name for p in (out / "coefficients").iterdir())
        assert len(files) == 3 * 11 + 10
        u3 = artifacts.read_trigpoly(out / "coefficients" / "u_003.tp")
        want = oracle.expected_coefficient(oracle.taylor_green(0.1), 3)[0][0]
        assert tp_max_abs(u3 - want) <= 1e-15

    def test_zero_field_grid(self, tmp_path):
        body = "problem.initial = zero\nproblem.nu = 0.5\nproblem.order = 3\nproblem.backend = grid\ngrid.n = 8\n"
        cfg, out = write_config(tmp_path, body)
        assert cli.main(["run", str(cfg)]) == 0
        for path in sorted((out / "coefficients").iterdir()):
            header, f = artifacts.read_field(path)
            assert f.max_abs() == 0.0 and header["domain"] == "torus"
        radius = artifacts.read_json(out / "radius.json")
        assert radius["estimates"]["max"]["ratio"]["radius_lower_hint"] == "unbounded"

    def test_artifacts_are_bit_identical(self, tmp_path):
        runs = []
        for name in ("a", "b"):
            body = TG.replace("order = 10", "order = 6") + "problem.backend = grid\ngrid.n = 16\n"
            d = tmp_path / name
            d.mkdir()
            cfg, out = write_config(d, body)
            assert cli.main(["run", str(cfg)]) == 0
            runs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        assert runs[0] == runs[1]

    def test_env_override(self, tmp_path, monkeypatch):
        cfg, out = write_config(tmp_path, TG)
        monkeypatch.setenv("NSTAYLOR_OUTPUT_DIR", str(tmp_path / "env"))
        assert cli.main(["run", str(cfg)]) == 0
        assert (tmp_path / "env" / "diagnostics.csv").is_file() and not out.exists()

    def test_timing_column(self, tmp_path):
        cfg, out = write_config(tmp_path, TG + "output.timing = true\noutput.dumps = false\n")
        cli.main(["run", str(cfg)])
        rows = artifacts.read_diagnostics(out / "diagnostics.csv")
        assert rows[1]["wall_time_ms"] is not None
        assert not (out / "coefficients").exists()

    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        cfg, _ = write_config(tmp_path, TG + "problem.colour = red\n")
        assert cli.main(["run", str(cfg)]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_divergent_initial_field(self, tmp_path, capsys):
        body = "problem.initial = modes\nproblem.nu = 0.1\nproblem.order = 2\nproblem.mode = 1 0 0 u 1 0\n"
        cfg, _ = write_config(tmp_path, body)
        assert cli.main(["run", str(cfg)]) == 3
        assert "order 0" in capsys.readouterr().err

    def test_engine_failure_names_order(self, tmp_path, capsys):
        # an absurd divergence tolerance trips on the first order with rounding in it
        # (order 1 of Taylor-Green is exactly solenoidal on the grid, order 2 is not)
        cfg, _ = write_config(tmp_path, TG + "problem.backend = grid\ngrid.n = 8\ntolerances.tol_div = 1e-300\n")
        code = cli.main(["run", str(cfg)])
        err = capsys.readouterr().err
        assert code == 3 and "engine failure at order 2" in err

    def test_modes_and_forcing(self, tmp_path):
        body = (
            "problem.initial = modes\nproblem.nu = 0.2\nproblem.order = 4\n"
            "problem.mode = 0 1 0 u 0 -0.5\n"  # u = sin y
            "forcing.mode = 0 0 1 0 u 0 -0.1\n"  # f = 0.2 * sin y balances viscosity
        )
        cfg, out = write_config(tmp_path, body)
        assert cli.main(["run", str(cfg)]) == 0
        rows = artifacts.read_diagnostics(out / "diagnostics.csv")
        assert rows[0]["max_norm_u"] == pytest.approx(1.0)
        assert all(r["max_norm_u"] <= 1e-15 for r in rows[1:])


class TestValidate:
    @pytest.mark.parametrize(
        "args",
        [
            ["taylor_green", "--nu", "0.1", "--order", "10"],
            ["abc", "--nu", "0", "--order", "5"],
            ["abc", "--nu", "1", "--order", "8", "--backend", "grid", "--grid-n", "24"],
        ],
    )
    def test_pass(self, args, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        assert cli.main(["validate", *args, "--report", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert report["passed"] and all(report["criteria"].values())
        assert json.loads(capsys.readouterr().out) == report

    def test_abc_euler_coefficients_vanish(self, capsys):
        cli.main(["validate", "abc", "--nu", "0", "--order", "5"])
        report = json.loads(capsys.readouterr().out)
        assert max(report["velocity_errors"][1:]) <= 1e-11

    def test_corrupted_coefficient(self, capsys):
        code = cli.main(["validate", "taylor_green", "--nu", "0.1", "--order", "6", "--corrupt-order", "4"])
        captured = capsys.readouterr()
        report = json.loads(captured.out)
        assert code == 1 and not report["passed"]
        assert any(f.startswith("order 4:") for f in report["failures"])
        assert "FAIL velocity_coefficients" in captured.err

    def test_env_report(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NSTAYLOR_OUTPUT_DIR", str(tmp_path))
        cli.main(["validate", "taylor_green", "--nu", "0.1", "--order", "3"])
        assert json.loads((tmp_path / "validation.json").read_text())["passed"]

    @pytest.mark.parametrize(
        "args",
        [
            ["--nu", "0.1", "--order", "0"],
            ["--nu", "-1", "--order", "3"],
            ["--nu", "0.1", "--order", "3", "--corrupt-order", "9"],
        ],
    )
    def test_bad_arguments(self, args):
        assert cli.main(["validate", "taylor_green", *args]) == 2

    def test_unknown_preset(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["validate", "kida", "--nu", "0.1", "--order", "3"])
        assert info.value.code == 2


class TestRadius:
    def test_geometric_fixture(self, tmp_path, capsys):
        lines = ["order,max_norm_u,max_norm_p,max_divergence,term_count_or_grid,wall_time_ms"]
        lines += [f"{n},{3 * 0.5**n!r},,0.0,1," for n in range(10)]
        (tmp_path / "diagnostics.csv").write_text("\n".join(lines) + "\n")
        assert cli.main(["radius", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["estimates"]["ratio"]["radius_lower_hint"] == pytest.approx(2.0, abs=1e-9)
        assert "empirical hint" in out["note"]
        assert artifacts.read_json(tmp_path / "radius_hint.json") == out

    def test_taylor_green_run(self, tmp_path, capsys):
        cfg, out = write_config(tmp_path, TG)
        cli.main(["run", str(cfg)])
        capsys.readouterr()
        assert cli.main(["radius", str(out)]) == 0
        hint = json.loads(capsys.readouterr().out)["estimates"]["ratio"]["radius_lower_hint"]
        assert hint == "unbounded"

    def test_missing_artifacts(self, tmp_path):
        assert cli.main(["radius", str(tmp_path)]) == 2

    def test_insufficient_orders(self, tmp_path):
        (tmp_path / "diagnostics.csv").write_text(
            "order,max_norm_u,max_norm_p,max_divergence,term_count_or_grid,wall_time_ms\n0,1.0,,0,1,\n1,0.5,,0,1,\n"
        )
        assert cli.main(["radius", str(tmp_path)]) == 2


class TestPoissonOracle:
    def test_calibrated_curve(self, capsys, tmp_path):
        assert cli.main(["poisson-oracle", "--half-width", "8", "--n", "64", "--dump", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["within_reference"] and report["relative_max_error"] <= 1e-3
        header, p = artifacts.read_field(tmp_path / "p.field")
        assert header["domain"] == "free-space" and p.n_per_axis == 64

    def test_interpolated_reference(self, capsys):
        assert cli.main(["poisson-oracle", "--half-width", "8", "--n", "40"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["reference_error"] == pytest.approx(cli.reference_error(40))
        assert report["within_reference"]

    def test_uncalibrated_width(self, capsys):
        assert cli.main(["poisson-oracle", "--half-width", "6", "--n", "24"]) == 0
        assert "within_reference" not in json.loads(capsys.readouterr().out)

    @pytest.mark.parametrize("args", [["--half-width", "3", "--n", "32"], ["--half-width", "8", "--n", "2"]])
    def test_invalid(self, args):
        assert cli.main(["poisson-oracle", *args]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "nstaylor.cli", "radius", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2 and "not found" in proc.stderr
