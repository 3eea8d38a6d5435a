import csv
import json
import time

import numpy as np
import pytest

from drmg.cli import main as cli_main
from drmg.episodes import RegretTrace, TraceRow, loglog_slope, read_trace_csv, simulate_episode
from drmg.equilibria import EquilibriumKind
from drmg.game_core import (
    Divergence, GameSpec, JointPolicy, build_corrupted_bandit, build_initial_shock, reference_game,
)
from drmg.harness import ExperimentConfig, run_bandit_baseline, run_experiment, sweep, worker_count
from drmg.io import load_query, load_spec, save_spec, spec_from_dict, spec_to_dict


@pytest.fixture
def ref_spec_path(tmp_path):
    path = tmp_path / "ref.json"
    save_spec(reference_game("TV"), path)
    return path


def config_dict(spec_path, **kw):
    return {"spec_path": str(spec_path), "K": 10, "c1": 0.1, "c2": 0.1, "cf": 0.1, "seed": 1, **kw}


class TestSimulation:
    def test_deterministic_everything(self, rng):
        spec = build_initial_shock(2, 2, 4, 0.3, (1, 1))
        pol = JointPolicy.deterministic(np.full((4, 2), 3), spec.actions)
        a = simulate_episode(spec, pol, 1, np.random.default_rng(0))
        b = simulate_episode(spec, pol, 1, np.random.default_rng(99))
        assert [(t.h, t.s, t.a, t.s_next) for t in a] == [(t.h, t.s, t.a, t.s_next) for t in b]
        assert [t.s for t in a] == [1, 0, 0, 0]

    def test_next_state_frequencies(self):
        spec = reference_game("TV")
        pol = JointPolicy.deterministic(np.full((3, 4), 2), spec.actions)
        rng = np.random.default_rng(3)
        n = 100_000
        counts = np.zeros(spec.num_states)
        for _ in range(n // 20):
            traj = simulate_episode(spec, pol, 1, rng)
            counts[traj[0].s_next] += 1
        m = n // 20
        p = spec.kernel[0, 1, 2]
        sd = np.sqrt(m * p * (1 - p))
        assert np.all(np.abs(counts - m * p) <= 3 * sd + 1e-9)

    def test_bandit_single_record(self):
        spec = build_corrupted_bandit((2, 2), 0.1, 0.1, 0)
        traj = simulate_episode(spec, JointPolicy.uniform(spec), 0, np.random.default_rng(0))
        assert len(traj) == 1 and set(traj[0].r.tolist()) <= {0.0, 1.0}

    def test_bad_initial_state(self):
        spec = reference_game()
        with pytest.raises(ValueError):
            simulate_episode(spec, JointPolicy.uniform(spec), 9, np.random.default_rng(0))


class TestTrace:
    def test_cumulative_and_csv(self, tmp_path):
        t = RegretTrace(kinds=(EquilibriumKind.CCE,), primary=EquilibriumKind.CCE)
        for k, g in enumerate([0.5, 0.25, 0.0], 1):
            t.append(TraceRow(k=k, s1=0, gaps={EquilibriumKind.CCE: np.array([g, g / 2])}))
        assert t.cumulative.tolist() == [0.5, 0.75, 0.75]
        assert t.certified_index() == 2
        path = tmp_path / "t.csv"
        t.write_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["k", "s1", "gap_nash", "gap_cce", "gap_ce", "max_gap", "cum_regret", "t_ms"]
        assert rows[1] == ["1", "0", "", "5.000000000000e-01", "", "5.000000000000e-01", "5.000000000000e-01", ""]

    def test_negative_gap_rejected(self):
        with pytest.raises(ValueError):
            RegretTrace().append(TraceRow(k=1, s1=0, max_gap=-0.1))

    def test_slope_of_power_law(self):
        k = np.arange(1, 2001)
        assert loglog_slope(k, np.sqrt(k)) == pytest.approx(0.5, abs=1e-9)
        assert loglog_slope(k, k.astype(float)) == pytest.approx(1.0, abs=1e-9)


class TestBandit:
    def test_zero_epsilon_no_regret(self):
        trace = run_bandit_baseline(build_corrupted_bandit((2, 2), 0.0, 0.1, 0), 500, np.random.default_rng(0))
        assert trace.cumulative[-1] == 0.0

    def test_sublinear(self):
        spec = build_corrupted_bandit((2, 2), 0.1, 0.1, 2)
        trace = run_bandit_baseline(spec, 10_000, np.random.default_rng(1))
        assert trace.average_gap(10_000) < 0.5 * trace.average_gap(1_000)

    def test_deterministic(self):
        spec = build_corrupted_bandit((2, 3), 0.1, 0.1, 4)
        a = run_bandit_baseline(spec, 300, np.random.default_rng(7))
        b = run_bandit_baseline(spec, 300, np.random.default_rng(7))
        np.testing.assert_array_equal(a.gaps, b.gaps)

    def test_wrong_instance(self):
        with pytest.raises(ValueError):
            run_bandit_baseline(reference_game(), 10, np.random.default_rng(0))


class TestIO:
    @pytest.mark.parametrize("spec", [
        reference_game("KL"), build_initial_shock(2, 2, 4, 0.3, (1, 0), fail_state=True),
        build_corrupted_bandit((2, 2), 0.1, 0.2, 1),
    ])
    def test_round_trip(self, tmp_path, spec):
        save_spec(spec, tmp_path / "s.json")
        back = load_spec(tmp_path / "s.json")
        np.testing.assert_array_equal(back.kernel, spec.kernel)
        np.testing.assert_array_equal(back.rewards, spec.rewards)
        np.testing.assert_array_equal(back.sigma, spec.sigma)
        assert (back.divergence, back.fail_states, back.bernoulli, back.initial_state) == \
            (spec.divergence, spec.fail_states, spec.bernoulli, spec.initial_state)

    def test_override_records(self):
        d = spec_to_dict(reference_game("KL"))
        d["radii"] = [{"h": 0, "s": 1, "a": 2, "sigma": 0.7}, {"h": 1, "s": 0, "a": 0, "sigma": 0.1, "agent": 1}]
        spec = spec_from_dict(d)
        assert spec.sigma[0, 0, 1, 2] == spec.sigma[1, 0, 1, 2] == 0.7
        assert spec.sigma[1, 1, 0, 0] == 0.1 and spec.sigma[0, 1, 0, 0] == 0.0

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.json"):
            load_query(tmp_path / "nope.json")


class TestExperiment:
    def test_missing_spec_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="absent.json"):
            run_experiment(config_dict(tmp_path / "absent.json"), tmp_path / "t.csv")

    def test_smoke_under_budget(self, tmp_path, ref_spec_path):
        t0 = time.perf_counter()
        summary = run_experiment(config_dict(ref_spec_path), tmp_path / "t.csv")
        assert time.perf_counter() - t0 < 5.0
        assert np.isfinite(summary["loglog_slope"])
        on_disk = json.loads((tmp_path / "t.summary.json").read_text())
        assert on_disk["certified_index"] == summary["certified_index"]

    def test_csv_invariants_and_reproducible(self, tmp_path, ref_spec_path):
        cfg = config_dict(ref_spec_path, score_every=2, score_kinds=["CCE", "CE"])
        run_experiment(cfg, tmp_path / "a.csv")
        run_experiment(cfg, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        rows = read_trace_csv(tmp_path / "a.csv")
        assert len(rows) == 5
        assert np.allclose(np.cumsum([r["max_gap"] for r in rows]), [r["cum_regret"] for r in rows], atol=1e-9)
        assert all(r["gap_nash"] is None and r["gap_ce"] is not None for r in rows)

    def test_record_time(self, tmp_path, ref_spec_path):
        run_experiment(config_dict(ref_spec_path, K=2, record_time=True), tmp_path / "t.csv")
        assert all(r["t_ms"] > 0 for r in read_trace_csv(tmp_path / "t.csv"))

    def test_divergence_override(self, tmp_path, ref_spec_path):
        cfg = ExperimentConfig.from_dict(config_dict(ref_spec_path, divergence="kl"))
        from drmg.harness import load_experiment_spec
        assert load_experiment_spec(cfg).divergence is Divergence.KL

    def test_unknown_key(self, ref_spec_path):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict(config_dict(ref_spec_path, bogus=1))

    def test_sweep(self, tmp_path, ref_spec_path, monkeypatch):
        monkeypatch.setenv("DRMG_THREADS", "1")
        assert worker_count() == 1
        (tmp_path / "cfg.json").write_text(json.dumps(config_dict(ref_spec_path, K=3)))
        out = sweep(tmp_path / "cfg.json", [0, 1], tmp_path / "sw")
        assert len(out) == 2 and (tmp_path / "sw" / "trace_seed1.csv").exists()


class TestCLI:
    def test_gen_run_eval_oracle(self, tmp_path, capsys):
        g = tmp_path / "g.json"
        assert cli_main(["gen", "--kind", "random", "--states", "2", "--horizon", "2", "--out", str(g)]) == 0
        assert cli_main(["gen", "--kind", "initial-shock", "--horizon", "4", "--sigma", "0.3",
                         "--out", str(tmp_path / "is.json")]) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"spec_path": "g.json", "K": 3}))
        assert cli_main(["run", "--config", str(cfg), "--out", str(tmp_path / "t.csv")]) == 0
        mp = tmp_path / "mp.json"
        mp.write_text(json.dumps({"actions": [2, 2], "payoffs": [[1, -1, -1, 1], [-1, 1, 1, -1]]}))
        capsys.readouterr()
        assert cli_main(["eval", "--game", str(mp), "--kind", "nash"]) == 0
        assert json.loads(capsys.readouterr().out)["distribution"] == pytest.approx([0.25] * 4)
        q = tmp_path / "q.json"
        q.write_text(json.dumps({"values": [0, 1], "center": [0.5, 0.5], "radius": 0.5, "divergence": "TV"}))
        assert cli_main(["oracle", "--query", str(q)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["value"] == pytest.approx(0.0, abs=1e-12) and out["abs_diff"] < 1e-8
        assert cli_main(["oracle", "--spec", str(tmp_path / "is.json"), "--out", str(tmp_path / "v.json")]) == 0
        # with a fail state the adversary sends the radius mass there: 4 - 0.3 * 3
        assert json.loads((tmp_path / "v.json").read_text())["V"][0][0][0] == pytest.approx(3.1)

    def test_missing_config_reports_path(self, tmp_path, capsys):
        assert cli_main(["run", "--config", str(tmp_path / "x.json"), "--out", str(tmp_path / "t.csv")]) == 1
        assert "x.json" in capsys.readouterr().err
