import io
import json

import numpy as np
import pytest

from hsicnoma import cli, harness
from hsicnoma.errors import ConfigError
from hsicnoma.estimates import Method
from hsicnoma.model import Scheme
from hsicnoma.sampling import SamplerSpec

from conftest import make_cfg

FAST = SamplerSpec(seed=3, n_samples=50_000)


def snr_spec(**kw):
    args = dict(axis="snr_db", start=0.0, stop=20.0, steps=3, fixed=make_cfg(),
                methods=("MC", "CF"), schemes=("HSIC",))
    args.update(kw)
    return harness.SweepSpec(**args)


class TestSweepSpec:
    def test_grid(self):
        np.testing.assert_allclose(snr_spec().grid(), [0.0, 10.0, 20.0])
        assert snr_spec().methods == (Method.MONTE_CARLO, Method.CLOSED_FORM)

    @pytest.mark.parametrize("kw", [dict(axis="users"), dict(steps=1), dict(start=5.0, stop=5.0),
                                    dict(axis="beta", start=0.1, stop=0.6),
                                    dict(schemes=("OMA",)), dict(methods=())])
    def test_invalid(self, kw):
        with pytest.raises((ConfigError, ValueError)):
            snr_spec(**kw)

    def test_axes(self):
        cfg = make_cfg()
        assert snr_spec(axis="R_m", start=0.1, stop=1.0).config_at(0.5).R_m == 0.5
        assert snr_spec(axis="beta", start=0.1, stop=0.4).config_at(0.2).beta == 0.2
        ratio = snr_spec(axis="rho_ratio", start=1.0, stop=9.0).config_at(4.0)
        assert ratio.eta == pytest.approx(4.0) and ratio.rho_n == cfg.rho_n


class TestRows:
    def test_columns(self):
        assert harness.COLUMNS == ("axis", "axis_value", "scheme", "method", "probability",
                                   "stderr", "regime_table", "regime_column", "flags")

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt):
        rows = harness.run_sweep(snr_spec(schemes=("HSIC", "FSIC")), None, FAST)
        path = harness.write_rows(rows, tmp_path / f"rows.{fmt}")
        assert harness.read_rows(path) == rows

    def test_csv_json_mirror(self, tmp_path):
        rows = harness.run_sweep(snr_spec(), None, FAST)
        a = harness.read_rows(harness.write_rows(rows, tmp_path / "a.csv"))
        b = harness.read_rows(harness.write_rows(rows, tmp_path / "b.json"))
        assert a == b

    def test_rows_content(self):
        rows = harness.run_sweep(snr_spec(schemes=("HSIC", "FSIC")), None, FAST)
        # per point: MC for both schemes, closed form for HSIC only
        assert len(rows) == 3 * 3
        assert {(r.scheme, r.method) for r in rows} == {
            ("HSIC_HYBRID", "MONTE_CARLO"), ("FSIC_HYBRID", "MONTE_CARLO"),
            ("HSIC_HYBRID", "CLOSED_FORM")}
        assert all(r.regime_table == "II" and r.regime_column == 1 for r in rows)
        assert all(0.0 <= r.probability <= 1.0 for r in rows)

    def test_deterministic(self):
        assert harness.run_sweep(snr_spec(), None, FAST) == harness.run_sweep(snr_spec(), None, FAST)

    def test_singular_point_falls_back(self):
        beta = 1 / 3
        spec = snr_spec(axis="rho_ratio", start=(1 - beta) / beta**2, stop=7.0, steps=2,
                        fixed=make_cfg(m=2, n=5, R_m=1.0, snr_db=10.0), methods=("CF",))
        first = harness.run_sweep(spec, None, FAST)[0]
        assert "singular" in first.flags and "fallback=quadrature" in first.flags
        assert 0.0 < first.probability < 1.0

    def test_row_errors_recorded(self):
        spec = snr_spec(methods=("QUAD",))
        rows = harness.run_sweep(spec, None, FAST, tol=1e-10)
        assert all(r.probability is not None for r in rows)
        bad = harness.evaluate_point(make_cfg(), (Method.QUADRATURE,), (Scheme.HSIC_HYBRID,),
                                     FAST, tol=1.0)
        assert bad[0][2] is None and bad[0][3] == ("error=ConfigError",)

    def test_asymptotic_flag(self):
        rows = harness.run_sweep(snr_spec(methods=("ASYM",)), None, FAST)
        assert "extrapolated" in rows[0].flags
        assert rows[-1].flags == ("extrapolated",)

    def test_bad_probability_row(self):
        with pytest.raises(ValueError):
            harness.SweepRow("snr_db", 0.0, "HSIC_HYBRID", "CLOSED_FORM", 1.5, 0.0)


class TestEval:
    def test_agreement(self):
        report = harness.run_eval(make_cfg(snr_db=10.0), ("MC", "CF", "QUAD"),
                                  SamplerSpec(seed=1, n_samples=200_000))
        assert report["agree"]
        assert report["regime"] == {"table": "II", "column": 1}
        pairs = {d["pair"] for d in report["deltas"]}
        assert pairs == {"MONTE_CARLO-CLOSED_FORM", "MONTE_CARLO-QUADRATURE",
                         "CLOSED_FORM-QUADRATURE"}
        json.dumps(report)

    def test_impossible_tolerance(self):
        report = harness.run_eval(make_cfg(snr_db=10.0), ("CF", "QUAD"), FAST, rtol=0.0)
        assert not report["agree"]


class TestValidate:
    def test_configs_in_range(self):
        for cfg in harness.validation_configs(50, seed=4):
            assert 3 <= cfg.M <= 6 and cfg.m != cfg.n
            assert 0.05 <= cfg.beta <= 0.45 and 0.1 <= cfg.R_m <= 2.0
            assert 5.0 <= cfg.snr_db <= 45.0 and 0.5 <= cfg.eta <= 12.0

    def test_seeded_rerun_identical(self):
        a = harness.run_validate(3, seed=9, n_samples=20_000).to_dict()
        b = harness.run_validate(3, seed=9, n_samples=20_000).to_dict()
        assert a == b

    def test_zero_tolerance_fails(self):
        report = harness.run_validate(3, seed=2, rtol=0.0, k=0.0, n_samples=20_000)
        assert not report.passed
        assert len(report.failures) == 3
        doc = json.loads(json.dumps(report.to_dict()))
        assert doc["n_failures"] == 3 and doc["passed"] is False

    def test_needs_a_config(self):
        with pytest.raises(ConfigError):
            harness.run_validate(0)


class TestScenario:
    def test_fraction_and_sections(self):
        doc = harness.read_scenario(
            "[scenario]\nusers = 5\nm = 1\nn = 4\nbeta = 1/3\nrm = 0.2\nratio = 5\nsnr_db = 20\n"
            "[run]\nmethods = MC, CF\nsamples = 1e5\nseed = 4\n")
        assert doc["scenario"]["beta"] == pytest.approx(1 / 3)
        assert doc["run"] == {"methods": ["MC", "CF"], "samples": 100000, "seed": 4}
        cfg = harness.build_config(doc["scenario"])
        assert (cfg.M, cfg.m, cfg.n) == (5, 1, 4)

    @pytest.mark.parametrize("text", ["[scenario]\ncolour = 3\n", "[sweep]\naxis = beta\n",
                                      "[curves]\nvary = colour\nvalues = 1\n"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            harness.read_scenario(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            harness.read_scenario(str(tmp_path / "nope.ini"))

    def test_missing_keys(self):
        with pytest.raises(ConfigError):
            harness.build_config({"users": 5})

    def test_presets_parse(self):
        names = harness.preset_names()
        assert {"fig1a", "fig1b", "fig5", "fig7"} <= set(names)
        for name in names:
            sweeps = harness.preset_sweeps(harness.load_preset(name))
            assert sweeps, name

    def test_fig1a_and_fig5_settings(self):
        fig1a = harness.load_preset("fig1a")
        assert fig1a["curves"] == {"vary": "n", "values": [2, 3, 4, 5]}
        assert fig1a["scenario"]["m"] == 1 and fig1a["scenario"]["ratio"] == 5.0
        fig5 = harness.load_preset("fig5")
        assert fig5["scenario"]["snr_db"] == 15.0 and fig5["scenario"]["rm"] == 1.0
        assert fig5["scenario"]["ratio"] == 6.0 and fig5["sweep"]["axis"] == "beta"

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            harness.load_preset("fig99")

    def test_run_figure(self, tmp_path):
        paths = harness.run_figure("fig1a", tmp_path, SamplerSpec(seed=1, n_samples=20_000),
                                   overrides=None)
        assert [p.name for p in paths] == [f"fig1a_n{k}.csv" for k in (2, 3, 4, 5)]
        rows = harness.read_rows(paths[0])
        assert len({r.axis_value for r in rows}) == 41


class TestCli:
    def run(self, argv, capsys):
        code = cli.main(argv)
        out = capsys.readouterr()
        return code, out.out, out.err

    def test_eval_ok(self, capsys):
        code, out, _ = self.run(["eval", "--snr-db", "10", "--methods", "CF,QUAD"], capsys)
        assert code == 0
        assert json.loads(out)["agree"] is True

    def test_fraction_flag(self, capsys):
        code, out, _ = self.run(["eval", "--beta", "1/4", "--methods", "CF"], capsys)
        assert code == 0 and json.loads(out)["config"]["beta"] == 0.25
        with pytest.raises(SystemExit) as exc:
            cli.main(["eval", "--beta", "x"])
        assert exc.value.code == 2

    def test_m_equals_n(self, capsys):
        code, _, err = self.run(["eval", "--m", "2", "--n", "2"], capsys)
        assert code == 2 and "configuration error" in err

    @pytest.mark.parametrize("argv", [["eval", "--beta", "0.5"], ["eval", "--schemes", "OMA"],
                                      ["sweep", "--axis", "snr_db", "--start", "0"],
                                      ["figure", "nosuch"]])
    def test_config_errors(self, argv, capsys):
        assert self.run(argv, capsys)[0] == 2

    def test_disagreement_exit(self, capsys):
        code, _, _ = self.run(["validate", "--configs", "2", "--samples", "1e4", "--rtol", "0",
                               "--k", "0"], capsys)
        assert code == 1

    def test_sweep_stdout_csv(self, capsys):
        code, out, _ = self.run(["sweep", "--axis", "snr_db", "--start", "0", "--stop", "10",
                                 "--steps", "2", "--samples", "1e4"], capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == ",".join(harness.COLUMNS)
        assert len(lines) == 1 + 2 * 2

    def test_sweep_file_json(self, tmp_path, capsys):
        out = tmp_path / "s.json"
        code, _, _ = self.run(["sweep", "--axis", "beta", "--start", "0.1", "--stop", "0.4",
                               "--steps", "3", "--methods", "CF", "--out", str(out)], capsys)
        assert code == 0
        assert [r.axis_value for r in harness.read_rows(out)] == pytest.approx([0.1, 0.25, 0.4])

    def test_config_file_and_override(self, tmp_path, capsys):
        ini = tmp_path / "s.ini"
        ini.write_text("[scenario]\nusers = 4\nm = 3\nn = 1\nbeta = 0.3\nrm = 0.5\nratio = 2\n"
                       "snr_db = 12\n[run]\nmethods = CF\n")
        code, out, _ = self.run(["eval", "--config", str(ini), "--snr-db", "18"], capsys)
        rec = json.loads(out)["config"]
        assert code == 0 and rec["M"] == 4 and rec["snr_db"] == pytest.approx(18.0)

    def test_seed_env(self, monkeypatch, capsys):
        argv = ["eval", "--methods", "MC", "--samples", "2e4", "--snr-db", "5"]
        monkeypatch.setenv(harness.SEED_ENV, "11")
        a = json.loads(self.run(argv, capsys)[1])["estimates"][0]["probability"]
        b = json.loads(self.run(argv + ["--seed", "11"], capsys)[1])["estimates"][0]["probability"]
        monkeypatch.setenv(harness.SEED_ENV, "12")
        c = json.loads(self.run(argv, capsys)[1])["estimates"][0]["probability"]
        assert a == b != c
        monkeypatch.setenv(harness.SEED_ENV, "x")
        assert self.run(argv, capsys)[0] == 2

    def test_figure_list(self, capsys):
        code, out, _ = self.run(["figure", "list"], capsys)
        assert code == 0 and "fig5" in out.split()

    def test_figure_writes(self, tmp_path, capsys):
        code, out, _ = self.run(["figure", "fig7", "--samples", "1e4", "--out", str(tmp_path)],
                                capsys)
        assert code == 0
        assert out.strip().endswith("fig7.csv")
