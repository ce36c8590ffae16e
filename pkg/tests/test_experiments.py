import csv
import json

import numpy as np
import pytest

from spinsim import cli
from spinsim.experiments import (
    CSV_HEADER,
    ConfigError,
    bundled_config,
    initial_state,
    load_config,
    parse_config,
    percent_difference,
    run_scenario,
    worker_count,
)
from spinsim.scattering import Model
from spinsim.spin import fidelity_with_singlet


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestParsing:
    def test_minimal(self):
        cfg = parse_config({"scenario": "sweep", "g_grid": [1.0, 2.0], "n_max": 3})
        assert cfg.model is Model.EXCHANGE
        assert cfg.g_grid == (1.0, 2.0)
        assert cfg.steps == (1, 2, 3)

    def test_grid_objects(self):
        cfg = parse_config({"scenario": "sweep", "g_grid": {"logspace": [0.1, 10, 5], "include": [1.6]},
                            "r_pol_grid": {"linspace": [0, 1, 3]}})
        np.testing.assert_allclose(cfg.g_grid, [0.1, 10 ** -0.5, 1.0, 1.6, 10 ** 0.5, 10.0])
        assert cfg.r_pol_grid == (0.0, 0.5, 1.0)

    def test_scalar_grid(self):
        assert parse_config({"scenario": "sweep", "g_grid": 2.5}).g_grid == (2.5,)

    @pytest.mark.parametrize("data", [
        [],
        {"scenario": "fig9"},
        {"scenario": "sweep", "bogus": 1},
        {"scenario": "sweep", "model": "photon"},
        {"scenario": "sweep", "g_grid": [-1.0]},
        {"scenario": "sweep", "g_grid": []},
        {"scenario": "sweep", "g_grid": ["a"]},
        {"scenario": "sweep", "g_grid": {"logspace": [1, 2]}},
        {"scenario": "sweep", "r_pol_grid": [1.2]},
        {"scenario": "sweep", "n_max": 0},
        {"scenario": "sweep", "n_max": 2.5},
        {"scenario": "sweep", "q": 0},
        {"scenario": "sweep", "seed": -3},
        {"scenario": "sweep", "seed": True},
        {"scenario": "sweep", "n_values": [0, 2]},
        {"scenario": "sweep", "s": "2/3"},
        {"scenario": "fig5"},
        {"scenario": "sweep", "s": "1", "noise": {"tb_over_td": [0.1]}},
        {"scenario": "sweep", "noise": {"mu": [2.0]}},
        {"scenario": "sweep", "noise": {"method": "guess"}},
        {"scenario": "sweep", "noise": {"trajectories": 0}},
    ])
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            parse_config(data)

    def test_missing_file_names_path(self, tmp_path):
        path = tmp_path / "missing.json"
        with pytest.raises(ConfigError, match="missing.json"):
            load_config(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)

    @pytest.mark.parametrize("fid", ["2", "3b", "4", "5"])
    def test_bundled(self, fid):
        cfg = bundled_config(fid)
        assert cfg.seed == 0 and cfg.output_path.endswith(".csv")

    def test_bundled_unknown(self):
        with pytest.raises(ConfigError):
            bundled_config("7")


class TestInitialState:
    @pytest.mark.parametrize("spec,fid", [("up-down", 0.5), ("singlet", 1.0), ("mixed", 0.25)])
    def test_named(self, spec, fid):
        rho = initial_state(parse_config({"scenario": "sweep", "initial_state": spec}))
        assert np.trace(rho).real == pytest.approx(1.0)
        assert fidelity_with_singlet(rho) == pytest.approx(fid)

    def test_file_roundtrip(self, tmp_path):
        rho = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
        rho[1, 2], rho[2, 1] = 0.05j, -0.05j
        (tmp_path / "rho.json").write_text(json.dumps({"real": rho.real.tolist(), "imag": rho.imag.tolist()}))
        cfg = load_config(write_config(tmp_path, {"scenario": "sweep", "initial_state": {"file": "rho.json"}}))
        np.testing.assert_allclose(initial_state(cfg), rho)

    @pytest.mark.parametrize("matrix", [
        {"real": [[0.5, 0.1, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]},
        {"real": [[0.5, 0, 0, 0], [0, 0.6, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]},
        {"real": [[1.5, 0, 0, 0], [0, -0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]},
        {"real": [[1.0, 0], [0, 0]]},
    ], ids=["non-hermitian", "trace", "negative", "shape"])
    def test_file_rejected(self, tmp_path, matrix):
        (tmp_path / "rho.json").write_text(json.dumps(matrix))
        path = write_config(tmp_path, {"scenario": "sweep", "initial_state": {"file": "rho.json"}})
        with pytest.raises(ConfigError, match="rho.json"):
            load_config(path)

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            parse_config({"scenario": "sweep", "initial_state": "bell"})


class TestScenarios:
    def test_fig2_anchor_row(self, tmp_path):
        cfg = parse_config({"scenario": "fig2", "g_grid": [1.6, 7.5], "n_max": 5})
        result = run_scenario(cfg, tmp_path / "fig2.csv")
        rows = read_rows(tmp_path / "fig2.csv")
        assert tuple(rows[0]) == CSV_HEADER
        row = next(r for r in rows if float(r["g"]) == 1.6 and r["n"] == "5")
        assert float(row["F"]) > 0.95 and float(row["P"]) > 0.5
        row = next(r for r in rows if float(r["g"]) == 7.5 and r["n"] == "1")
        assert float(row["F"]) > 0.95 and float(row["P"]) > 0.5
        names = sorted(p.name for p in result.paths)
        assert names == ["fig2.csv", "fig2_fidelity.csv", "fig2_probability.csv"]
        table = read_rows(tmp_path / "fig2_fidelity.csv")
        assert list(table[0]) == ["g"] + [f"n={n}" for n in range(1, 6)]
        anchor = next(r for r in rows if float(r["g"]) == 1.6 and r["n"] == "5")
        assert next(t for t in table if float(t["g"]) == 1.6)["n=5"] == anchor["F"]

    def test_fig3b_diff_table(self):
        cfg = parse_config({"scenario": "fig3b", "g_grid": [2.0], "n_values": [1, 3]})
        result = run_scenario(cfg)
        header, rows = result.tables["diff"]
        assert header == ["g", "n", "dF_percent", "dP_percent"]
        assert [r[1] for r in rows] == ["1", "3"]
        ex = [r for r in result.records if r.model == "exchange"]
        ra = [r for r in result.records if r.model == "raman"]
        assert all(r.g == 1.0 for r in ra)
        assert float(rows[1][2]) == pytest.approx(percent_difference(ex[1].F, ra[1].F))

    def test_fig4_fidelity_non_increasing_in_polarization(self):
        cfg = parse_config({"scenario": "fig4", "g_grid": [1.5], "r_pol_grid": [0, 0.25, 0.5, 0.75, 1],
                            "n_max": 10})
        recs = run_scenario(cfg).records
        for n in range(1, 11):
            fs = [r.F for r in recs if r.n == n]
            assert len(fs) == 5
            assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))

    def test_fig5_collective_rows_match_noiseless(self):
        cfg = parse_config({"scenario": "fig5", "g_grid": [1.5], "n_max": 5,
                            "noise": {"tb_over_td": [0, 0.5, 1.0], "mu": [0, 1], "trajectories": 200,
                                      "method": "both"}})
        recs = run_scenario(cfg).records
        exact = [r for r in recs if r.scenario == "fig5"]
        mc = [r for r in recs if r.scenario == "fig5-mc"]
        assert len(exact) == len(mc) == 2 * 3 * 5
        assert all(r.stderr_F is None for r in exact) and all(r.stderr_F is not None for r in mc)
        ref = {r.n: r.F for r in exact if r.tb_over_td == 0 and r.mu == 1}
        for r in exact:
            if r.mu == 1:
                assert abs(r.F - ref[r.n]) < 1e-10
        f5 = [r.F for r in exact if r.mu == 0 and r.n == 5]
        assert f5[0] > f5[1] > f5[2]

    def test_fixedpoint_report(self, tmp_path):
        cfg = parse_config({"scenario": "fixedpoint", "model": "raman", "g_grid": [1.5], "r_pol_grid": [1.0]})
        result = run_scenario(cfg, tmp_path / "fp.csv")
        assert "2 fixed state(s)" in result.report[0]
        assert (tmp_path / "fp.txt").exists()
        fs = sorted(r.F for r in result.records)
        assert fs == pytest.approx([0.0, 1.0], abs=1e-9)

    def test_csv_deterministic(self, tmp_path):
        data = {"scenario": "sweep", "model": "raman", "g_grid": [0.7, 2.0], "r_pol_grid": [0.3], "n_max": 4,
                "noise": {"tb_over_td": [0.4], "mu": [0.5], "trajectories": 100, "method": "montecarlo"},
                "seed": 9}
        a = run_scenario(parse_config(data), tmp_path / "a.csv").paths[0].read_bytes()
        b = run_scenario(parse_config(data), tmp_path / "b.csv").paths[0].read_bytes()
        assert a == b
        assert b"\r\n" not in a
        assert a.splitlines()[0] == b"scenario,model,g,q,r_pol,n,F,P,mu,tb_over_td,stderr_F"

    def test_thread_count_does_not_change_output(self, tmp_path, monkeypatch):
        data = {"scenario": "sweep", "g_grid": [0.5, 1.0, 1.6, 3.0], "n_max": 3}
        monkeypatch.setenv("SPINSIM_THREADS", "1")
        a = run_scenario(parse_config(data), tmp_path / "a.csv").paths[0].read_bytes()
        monkeypatch.setenv("SPINSIM_THREADS", "4")
        b = run_scenario(parse_config(data), tmp_path / "b.csv").paths[0].read_bytes()
        assert a == b

    def test_plot_script(self, tmp_path):
        cfg = parse_config({"scenario": "sweep", "n_max": 2})
        result = run_scenario(cfg, tmp_path / "s.csv", plot_script=True)
        script = tmp_path / "s_plot.py"
        assert script in result.paths
        compile(script.read_text(), str(script), "exec")


class TestThreads:
    def test_env(self, monkeypatch):
        monkeypatch.setenv("SPINSIM_THREADS", "3")
        assert worker_count() == 3

    @pytest.mark.parametrize("raw", ["0", "-2", "many"])
    def test_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("SPINSIM_THREADS", raw)
        with pytest.raises(ConfigError):
            worker_count()


class TestCli:
    def test_figure_two(self, tmp_path, capsys):
        assert cli.main(["figure", "--id", "2", "--out", str(tmp_path)]) == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["fig2.csv", "fig2_fidelity.csv", "fig2_probability.csv"]
        assert "wrote" in capsys.readouterr().out

    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 1
        assert "missing.json" in capsys.readouterr().err

    def test_run_with_overrides(self, tmp_path):
        path = write_config(tmp_path, {"scenario": "sweep", "g_grid": [1.0], "n_max": 8, "output_path": "x.csv"})
        assert cli.main(["run", "--config", str(path), "--n-max", "2", "--model", "raman", "--q", "2"]) == 0
        rows = read_rows(tmp_path / "x.csv")
        assert [r["n"] for r in rows] == ["1", "2"]
        assert {r["model"] for r in rows} == {"raman"} and {r["q"] for r in rows} == {"2"}

    def test_bad_override(self, tmp_path):
        path = write_config(tmp_path, {"scenario": "sweep"})
        assert cli.main(["run", "--config", str(path), "--n-max", "0"]) == 1
        assert cli.main(["run", "--config", str(path), "--trajectories", "10"]) == 1

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["figure", "--id", "9"])
        assert exc.value.code == 1

    def test_runtime_error(self, tmp_path, monkeypatch):
        import spinsim.scattering as mod

        monkeypatch.setattr(mod, "COND_LIMIT", 1.0)
        path = write_config(tmp_path, {"scenario": "sweep", "g_grid": [1.0], "n_max": 1})
        assert cli.main(["run", "--config", str(path)]) == 2

    def test_fixedpoint(self, capsys):
        assert cli.main(["fixedpoint", "--model", "exchange", "--g", "1.6", "--rpol", "0"]) == 0
        out = capsys.readouterr().out
        assert "1 fixed state(s)" in out and "singlet fidelity 1.0000" in out

    def test_selftest(self, capsys):
        assert cli.main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 5
