import json

import numpy as np
import pytest

from hetbandits import cli
from hetbandits.env import GenerationSpec
from hetbandits.harness.config import (
    ConfigError,
    ExperimentConfig,
    base_instance,
    preset,
    trial_instance,
)
from hetbandits.harness.experiment import CSV_HEADER, emit_results, replay, run_experiment
from hetbandits.policies import EmptyCandidateSet

SMALL = GenerationSpec(num_arms=6, num_agents=3, set_size=3)


def small_config(**kw):
    base = dict(name="small", generation=SMALL, horizon=600, trials=2, stride=50)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "changes",
        [
            {"trials": 0},
            {"algorithms": ()},
            {"algorithms": ("CO-UCB", "UCB1")},
            {"stride": 7},
            {"alpha": 2.0},
            {"delta_schedule": "sqrt"},
            {"delay_mode": "matrix"},
            {"delay_mode": "poisson"},
            {"engine": "gpu"},
        ],
    )
    def test_rejects(self, changes):
        with pytest.raises(ConfigError):
            small_config(**changes)

    def test_needs_exactly_one_instance_source(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(horizon=100, stride=10)
        with pytest.raises(ConfigError):
            ExperimentConfig(generation=SMALL, instance_file="x.json", horizon=100, stride=10)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="colour"):
            ExperimentConfig.from_dict({"generation": SMALL.to_dict(), "colour": 1})

    def test_roundtrip(self, tmp_path):
        cfg = small_config(delay_mode="constant", delay_value=4)
        p = tmp_path / "c.json"
        p.write_text(cfg.dumps())
        assert ExperimentConfig.load(p) == cfg

    def test_fixed_instance_across_trials(self):
        cfg = small_config(trials=3)
        base = base_instance(cfg)
        assert all(trial_instance(cfg, k) == base for k in range(3))

    def test_uniform_delays_change_per_trial(self):
        cfg = small_config(delay_mode="uniform", delay_value=100)
        a, b = trial_instance(cfg, 0), trial_instance(cfg, 1)
        assert a.local_sets == b.local_sets and a.means == b.means
        assert a.delay_matrix != b.delay_matrix

    def test_delay_matrix_file(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("0 3 1\n2 0 5\n1 1 0\n")
        inst = trial_instance(small_config(delay_mode="matrix", delay_file=str(p)), 0)
        assert inst.delay_matrix == ((0, 3, 1), (2, 0, 5), (1, 1, 0))

    def test_presets(self):
        exp1 = preset("exp1")
        assert [c.generation.num_agents for c in exp1] == [5, 25, 45, 65, 85, 105]
        exp2 = preset("exp2", trials=3)
        assert [c.generation.set_size for c in exp2] == [10, 30, 50, 70, 90, 100]
        assert all(c.trials == 3 for c in exp2)
        exp3 = preset("exp3")
        assert [c.delay_value for c in exp3] == [0, 1000, 3000, 5000]
        assert exp3[0].algorithms == ("CO-AAE", "IND-AAE")
        with pytest.raises(ConfigError):
            preset("exp4")


class TestExperiment:
    def test_csv_shape(self, tmp_path):
        cfg = small_config(algorithms=("CO-UCB", "IND-AAE"))
        emit_results(run_experiment(cfg), tmp_path)
        for name in ("co_ucb.csv", "ind_aae.csv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert lines[0] == CSV_HEADER
            assert len(lines) == 1 + 600 // 50
            assert lines[-1].startswith("600,")
        assert not (tmp_path / "co_aae.csv").exists()

    def test_summary_contents(self, tmp_path):
        result = run_experiment(small_config())
        emit_results(result, tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["algorithms"]) == {"CO-UCB", "CO-AAE", "IND-UCB", "IND-AAE"}
        assert summary["algorithms"]["IND-UCB"]["messages_mean"] == 0
        assert summary["bounds"]["coucb_regret_bound"] > 0
        seeds = json.loads((tmp_path / "seeds.json").read_text())
        assert seeds["reward_seeds"] == [[0, 1, 0], [0, 1, 1]]

    def test_std_nonnegative_and_lengths_equal(self):
        result = run_experiment(small_config(trials=3))
        lengths = {len(s.regret_mean) for s in result.algorithms.values()}
        assert lengths == {12}
        for s in result.algorithms.values():
            assert np.all(s.regret_std >= 0) and np.all(s.comm_std >= 0)

    def test_single_trial_std_is_zero(self):
        result = run_experiment(small_config(trials=1))
        assert not result.algorithms["CO-UCB"].regret_std.any()

    def test_reference_engine_matches_fast(self, tmp_path):
        emit_results(run_experiment(small_config()), tmp_path / "fast")
        emit_results(run_experiment(small_config(engine="reference")), tmp_path / "ref")
        for name in ("co_ucb.csv", "co_aae.csv", "ind_ucb.csv", "ind_aae.csv"):
            assert (tmp_path / "fast" / name).read_bytes() == (tmp_path / "ref" / name).read_bytes()

    def test_replay_byte_identical(self, tmp_path):
        cfg = small_config(keep_message_log=True, delay_mode="uniform", delay_value=20)
        emit_results(run_experiment(cfg), tmp_path / "a")
        replay(tmp_path / "a", tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert any(n.startswith("messages_co_aae") for n in names)
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_results(run_experiment(small_config(trials=1)), blocker / "sub")


class TestCli:
    def write_config(self, tmp_path, **kw):
        p = tmp_path / "cfg.json"
        p.write_text(small_config(**kw).dumps())
        return p

    def test_run(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(cfg), "--out", str(out), "--trials", "1",
                         "--algos", "CO-UCB,IND-UCB"])
        assert code == 0
        assert sorted(p.name for p in out.glob("*.csv")) == ["co_ucb.csv", "ind_ucb.csv"]
        assert "CO-UCB" in capsys.readouterr().out

    def test_preset_with_overrides(self, tmp_path):
        code = cli.main(["preset", "exp3", "--horizon", "200", "--trials", "1",
                         "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "exp3_delay5000" / "co_aae.csv").exists()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"generation": null, "instance_file": null}')
        assert cli.main(["run", "--config", str(p)]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 1

    def test_bad_algorithm_override(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert cli.main(["run", "--config", str(cfg), "--algos", "THOMPSON"]) == 1

    def test_invariant_exit_code(self, tmp_path, monkeypatch, capsys):
        def explode(config):
            raise EmptyCandidateSet("agent 0 would eliminate all candidates")

        monkeypatch.setattr(cli, "run_experiment", explode)
        cfg = self.write_config(tmp_path)
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "invariant violation" in capsys.readouterr().err

    def test_bounds_command(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        assert cli.main(["bounds", "--config", str(cfg), "--horizon", "1000"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["horizon"] == 1000
        assert report["lower_bound"] <= report["coucb_regret_bound"]

    def test_bounds_from_instance(self, tmp_path, capsys):
        path = tmp_path / "inst.json"
        base_instance(small_config()).save(path)
        assert cli.main(["bounds", "--instance", str(path)]) == 0
        assert json.loads(capsys.readouterr().out)["horizon"] == 600

    def test_replay_command(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
        assert cli.main(["replay", str(tmp_path / "r")]) == 0
        a = (tmp_path / "r" / "co_aae.csv").read_bytes()
        assert a == (tmp_path / "r" / "replay" / "co_aae.csv").read_bytes()
