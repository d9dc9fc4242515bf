import numpy as np
import pytest
import yaml

from iegirs import harness
from iegirs.beamforming import SolverOptions
from iegirs.channel import ChannelSet, build_scenario
from iegirs.cli import main as cli_main
from iegirs.config import ScenarioConfig, trial_seed_sequence
from iegirs.harness import (aggregate, recompute_wsr, rows_to_csv_text, run_monte_carlo,
                            run_scheme, sweep, write_csv)

TINY = dict(N=32, Q=2, M=2, K=2, trials=2, seed=13)


def _tiny_config(**overrides):
    kw = dict(TINY)
    kw.update(overrides)
    return ScenarioConfig(**kw)


class TestRunScheme:
    def test_no_reflector_with_dead_direct_link_rates_zero(self):
        cfg = _tiny_config()
        zeros_bu = np.zeros((cfg.K, cfg.M), dtype=complex)
        rng = np.random.default_rng(0)
        h_bi = (rng.standard_normal((cfg.M, cfg.N)) + 1j * rng.standard_normal((cfg.M, cfg.N)))
        h_iu = (rng.standard_normal((cfg.K, cfg.N)) + 1j * rng.standard_normal((cfg.K, cfg.N)))
        ch = ChannelSet(h_bi=h_bi, h_iu=h_iu, h_bu=zeros_bu, h_bi_stat=h_bi, h_iu_stat=h_iu,
                        h_bu_stat=zeros_bu, noise_power=cfg.noise_watts, meta={})
        res = run_scheme("no_irs", ch, cfg, np.random.default_rng(1))
        assert res.wsr_bits == 0.0

    def test_pilot_budget_accounting(self):
        cfg = _tiny_config(schemes=("ieg", "aeg", "uirs_q", "random_rcv", "no_irs"), trials=1)
        rows = run_monte_carlo(cfg)
        dims = {r.scheme: r.realtime_dims for r in rows}
        assert dims == {"ieg": 2, "aeg": 2, "uirs_q": 2, "random_rcv": 0, "no_irs": 0}

    def test_unknown_scheme(self):
        cfg = _tiny_config()
        ch = build_scenario(cfg, np.random.default_rng(2))
        with pytest.raises(ValueError):
            run_scheme("beam_hopping", ch, cfg, np.random.default_rng(2))

    def test_adjacent_at_full_groups_equals_ungrouped(self):
        cfg = _tiny_config(N=16, Q=16)
        ch = build_scenario(cfg, np.random.default_rng(3))
        res_aeg = run_scheme("aeg", ch, cfg, np.random.default_rng(4))
        res_ieg = run_scheme("ieg", ch, cfg, np.random.default_rng(4),
                             opts=SolverOptions(grouping="identity"))
        assert res_aeg.wsr_bits == res_ieg.wsr_bits
        assert res_aeg.grouping == res_ieg.grouping


class TestAudit:
    def test_recomputed_rates_match(self):
        cfg = _tiny_config(schemes=("ieg", "aeg", "uirs_q", "random_rcv", "no_irs"))
        rows = run_monte_carlo(cfg)
        for row in rows:
            ss = trial_seed_sequence(cfg.seed, row.trial)
            channels = build_scenario(cfg, np.random.default_rng(ss.spawn(1)[0]))
            again = recompute_wsr(channels, row, cfg)
            assert abs(again - row.wsr_bits) <= 1e-9 * max(1.0, row.wsr_bits)

    def test_schemes_share_channels(self):
        # both schemes' stored artifacts audit against the same realization
        cfg = _tiny_config(schemes=("aeg", "no_irs"), trials=1)
        rows = run_monte_carlo(cfg)
        ss = trial_seed_sequence(cfg.seed, 0)
        channels = build_scenario(cfg, np.random.default_rng(ss.spawn(1)[0]))
        for row in rows:
            assert abs(recompute_wsr(channels, row, cfg) - row.wsr_bits) <= 1e-9


class TestDeterminism:
    def test_identical_csv_bytes(self):
        cfg = _tiny_config(schemes=("aeg", "no_irs"))
        text1 = rows_to_csv_text(run_monte_carlo(cfg))
        text2 = rows_to_csv_text(run_monte_carlo(cfg))
        assert text1 == text2

    def test_first_trial_independent_of_trial_count(self):
        cfg1 = _tiny_config(schemes=("aeg",), trials=1)
        cfg3 = _tiny_config(schemes=("aeg",), trials=3)
        row1 = run_monte_carlo(cfg1)[0]
        row3 = run_monte_carlo(cfg3)[0]
        assert row1.wsr_bits == row3.wsr_bits
        assert row1.seed == row3.seed

    def test_empty_scheme_list_rejected(self):
        cfg = _tiny_config(schemes=())
        with pytest.raises(ValueError):
            run_monte_carlo(cfg)

    def test_runtime_column_zeroed_by_default(self):
        cfg = _tiny_config(schemes=("no_irs",), trials=1)
        rows = run_monte_carlo(cfg)
        assert rows[0].runtime_ms > 0          # measured on the result object
        text = rows_to_csv_text(rows)
        last_field = text.strip().splitlines()[1].split(",")[-1]
        assert float(last_field) == 0.0
        timed = rows_to_csv_text(rows, timings=True)
        assert float(timed.strip().splitlines()[1].split(",")[-1]) > 0


class TestSweepAndAggregate:
    def test_groups_axis(self):
        cfg = _tiny_config(schemes=("aeg", "no_irs"))
        rows = sweep("groups", [1, 2], cfg)
        assert len(rows) == 2 * cfg.trials * 2
        assert {r.axis_value for r in rows} == {1.0, 2.0}
        assert {r.Q for r in rows} == {1, 2}

    def test_distance_axis_moves_reflector(self):
        cfg = _tiny_config(schemes=("no_irs",), trials=1)
        rows = sweep("distance", [150.0], cfg)
        assert rows[0].axis == "distance"
        assert rows[0].axis_value == 150.0

    def test_invalid_axis_and_empty_values(self):
        cfg = _tiny_config()
        with pytest.raises(ValueError):
            sweep("bandwidth", [1], cfg)
        with pytest.raises(ValueError):
            sweep("groups", [], cfg)

    def test_aggregate_mean_and_stderr(self):
        cfg = _tiny_config(schemes=("aeg",), trials=4)
        rows = run_monte_carlo(cfg)
        agg = aggregate(rows)[0]
        vals = np.array([r.wsr_bits for r in rows])
        assert abs(agg["wsr_mean"] - vals.mean()) <= 1e-15
        assert abs(agg["wsr_stderr"] - vals.std(ddof=1) / 2.0) <= 1e-15
        assert agg["n_trials"] == 4

    def test_power_axis_increases_rate(self):
        cfg = _tiny_config(N=64, Q=4, schemes=("aeg", "no_irs"), trials=3, scenario="unobscured")
        rows = sweep("power", [0.0, 20.0], cfg)
        means = {(a["scheme"], a["axis_value"]): a["wsr_mean"] for a in aggregate(rows)}
        for scheme in ("aeg", "no_irs"):
            assert means[(scheme, 20.0)] > means[(scheme, 0.0)]

    def test_group_count_sweep_trend(self):
        # mean rate non-decreasing in the group count, biggest gain 1 -> 2
        cfg = ScenarioConfig(N=1024, Q=4, M=4, K=4, scenario="obscured", trials=6,
                             seed=21, schemes=("ieg",))
        rows = sweep("groups", [1, 2, 4, 8], cfg)
        means = {a["axis_value"]: a["wsr_mean"] for a in aggregate(rows)}
        seq = [means[q] for q in (1.0, 2.0, 4.0, 8.0)]
        assert np.all(np.diff(seq) >= 0)
        jumps = np.diff(seq)
        assert jumps[0] > jumps[1] and jumps[0] > jumps[2]

    def test_element_growth_contrast(self):
        # growing the surface pays off far more with statistical grouping
        # than with adjacent blocks
        cfg = ScenarioConfig(N=256, Q=4, M=4, K=4, scenario="obscured", trials=6,
                             seed=22, schemes=("ieg", "aeg"))
        rows = sweep("elements", [256, 4096], cfg)
        means = {(a["scheme"], a["axis_value"]): a["wsr_mean"] for a in aggregate(rows)}
        growth_ieg = means[("ieg", 4096.0)] - means[("ieg", 256.0)]
        growth_aeg = means[("aeg", 4096.0)] - means[("aeg", 256.0)]
        assert growth_ieg > 0
        assert growth_ieg > 3.0 * max(growth_aeg, 0.0)

    def test_csv_files_written(self, tmp_path):
        cfg = _tiny_config(schemes=("no_irs",), trials=1)
        out = tmp_path / "rows.csv"
        sweep("groups", [2], cfg, out=str(out))
        assert out.exists()
        assert (tmp_path / "rows_agg.csv").exists()
        header = out.read_text().splitlines()[0]
        assert header == "scheme,axis,axis_value,N,Q,trial,seed,wsr_bits_per_hz,iterations,runtime_ms"

    def test_partial_flush_on_failure(self, tmp_path, monkeypatch):
        cfg = _tiny_config(schemes=("no_irs",), trials=3)
        out = tmp_path / "partial.csv"
        calls = {"n": 0}
        original = harness.run_scheme

        def flaky(*args, **kwargs):
            if calls["n"] >= 2:
                raise RuntimeError("boom")
            calls["n"] += 1
            return original(*args, **kwargs)

        monkeypatch.setattr(harness, "run_scheme", flaky)
        with pytest.raises(RuntimeError):
            run_monte_carlo(cfg, out=str(out))
        assert out.exists()
        assert len(out.read_text().strip().splitlines()) == 1 + 2


class TestCli:
    def _write_config(self, tmp_path):
        cfg = _tiny_config(schemes=("aeg", "no_irs"))
        path = tmp_path / "scene.yaml"
        path.write_text(yaml.safe_dump(cfg.to_dict()))
        return path

    def test_simulate(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "out.csv"
        rc = cli_main(["simulate", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        assert out.exists()
        assert "mean WSR" in capsys.readouterr().out

    def test_simulate_trial_override(self, tmp_path):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "out.csv"
        cli_main(["simulate", "--config", str(cfg_path), "--out", str(out),
                  "--trials", "1", "--quiet"])
        assert len(out.read_text().strip().splitlines()) == 1 + 2

    def test_sweep(self, tmp_path):
        cfg_path = self._write_config(tmp_path)
        out = tmp_path / "sweep.csv"
        rc = cli_main(["sweep", "--axis", "groups", "--values", "1,2", "--config",
                       str(cfg_path), "--out", str(out), "--quiet"])
        assert rc == 0
        assert out.exists() and (tmp_path / "sweep_agg.csv").exists()

    def test_asymptotics_table(self, tmp_path):
        out = tmp_path / "asym.csv"
        rc = cli_main(["asymptotics", "--out", str(out), "--trials", "10"])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("quantity,")
        assert len(lines) > 5

    def test_validate_selected(self, capsys):
        rc = cli_main(["validate", "--only", "c05"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_validate_fails_nonzero(self, capsys, monkeypatch):
        from iegirs import acceptance
        monkeypatch.setattr(acceptance, "CRITERIA",
                            (("c99_always_red", lambda: (False, "forced")),))
        rc = cli_main(["validate"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_full_scale_flag(self, tmp_path):
        cfg = _tiny_config(schemes=("no_irs",), trials=1)
        cfg_path = tmp_path / "scene.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg.to_dict()))
        out = tmp_path / "full.csv"
        cli_main(["simulate", "--config", str(cfg_path), "--out", str(out),
                  "--full-scale", "--quiet"])
        row = out.read_text().strip().splitlines()[1].split(",")
        assert row[3] == "10000"
