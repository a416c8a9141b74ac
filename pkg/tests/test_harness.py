import json
from pathlib import Path

import numpy as np
import pytest

import gtde.grouping as grp
from gtde.checkpoint import (CheckpointError, load_checkpoint, save_checkpoint)
from gtde.cli import main as cli_main
from gtde.config import (ConfigError, dump_defaults, load_run_config,
                         parse_config_text, run_config_from_flat)
from gtde.harness import (CompatibilityError, ProtocolError, ablate, crossplay,
                          evaluate, inspect_groups, load_policy, run_training)
from gtde.metrics import (MetricRecord, MetricsWriter, metric_streams_equal,
                          read_metrics)
from gtde.envs import make_env
from gtde.rng import Rng

GOLDEN = Path(__file__).parent / "golden"


def tiny_run_config(tmp_path, **overrides):
    pairs = {
        "env": "buttons_4", "paradigm": "gtde", "algorithm": "ppo",
        "num_envs": "2", "rollout_len": "8", "hidden": "16",
        "history_len": "2", "iterations": "3", "seed": "5",
        "out_dir": str(tmp_path / "run"), "env.episode_limit": "20",
    }
    pairs.update({k: str(v) for k, v in overrides.items()})
    return load_run_config(overrides=[f"{k}={v}" for k, v in pairs.items()])


class TestConfig:
    def test_parse_comments_and_blanks(self):
        raw = parse_config_text("# header\n\nseed = 7  # trailing\nenv=buttons_4\n")
        assert raw == {"seed": "7", "env": "buttons_4"}

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="mystery") as err:
            load_run_config(overrides=["mystery=1"])
        assert err.value.key == "mystery"

    def test_bad_value_named(self):
        with pytest.raises(ConfigError, match="seed"):
            load_run_config(overrides=["seed=abc"])

    def test_override_precedence_last_wins(self, tmp_path):
        cfg_file = tmp_path / "a.cfg"
        cfg_file.write_text("seed = 1\nparadigm = dtde\n")
        cfg = load_run_config(cfg_file, overrides=["paradigm=gtde_a"])
        assert cfg.paradigm == "gtde_a"
        assert cfg.seed == 1

    def test_env_conditional_defaults(self):
        base = load_run_config(overrides=["env=buttons_4"])
        assert (base.gamma, base.entropy_coef, base.value_loss_coef) == (0.99, 0.01, 1.0)
        battle = load_run_config(overrides=["env=battle_lite_8v8"])
        assert (battle.gamma, battle.entropy_coef, battle.value_loss_coef) == (0.95, 0.08, 0.1)
        explicit = load_run_config(overrides=["env=battle_lite_8v8", "gamma=0.5"])
        assert explicit.gamma == 0.5

    def test_env_override_passthrough(self):
        cfg = load_run_config(overrides=["env.episode_limit=33"])
        assert cfg.env_overrides == {"episode_limit": 33}

    def test_dump_defaults_matches_golden(self):
        assert dump_defaults() == (GOLDEN / "defaults_base.cfg").read_text()
        assert dump_defaults("battle_lite_8v8") == (GOLDEN / "defaults_battle.cfg").read_text()

    def test_flat_round_trip(self, tmp_path):
        cfg = tiny_run_config(tmp_path)
        again = run_config_from_flat(cfg.as_flat_dict())
        assert again.values == cfg.values
        assert again.env_overrides == cfg.env_overrides


class TestCheckpoint:
    def test_round_trip_byte_identity(self, tmp_path):
        rng = Rng(1)
        params = {"w": rng.normal(3, 4), "b": rng.normal(1, 4)}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"seed": "1"}, 7, Rng(5).state(), params)
        first = path.read_bytes()
        data = load_checkpoint(path)
        save_checkpoint(path, data.config, data.iteration, data.rng_state, data.params)
        assert path.read_bytes() == first
        assert np.array_equal(data.params["w"], params["w"])
        assert data.iteration == 7

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "old.ckpt"
        doc = {"format_version": 99, "config": {}, "iteration": 0,
               "rng_state": {}, "params": {}}
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_corrupt_payload(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        doc = {"format_version": 1, "config": {}, "iteration": 0,
               "rng_state": {}, "params": {"w": {"rows": 2, "cols": 2,
                                                 "data": "00" * 8}}}
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="payload"):
            load_checkpoint(path)


class TestMetrics:
    def record(self, i, reward=1.0):
        return MetricRecord(iteration=i, env_steps=i * 10,
                            mean_episode_reward=reward, win_rate=None,
                            avg_node_information=1.5, policy_loss=0.1,
                            value_loss=0.2, entropy=1.0, wall_clock_s=0.05 * i)

    def test_jsonl_and_csv_mirror(self, tmp_path):
        with MetricsWriter(tmp_path) as w:
            w.write(self.record(0))
            w.write(self.record(1, reward=2.0))
        rows = read_metrics(tmp_path / "metrics.jsonl")
        assert len(rows) == 2 and rows[1]["mean_episode_reward"] == 2.0
        csv = (tmp_path / "metrics.csv").read_text().splitlines()
        assert csv[0].startswith("iteration,env_steps,")
        assert len(csv) == 3

    def test_monotonic_iterations_enforced(self, tmp_path):
        with MetricsWriter(tmp_path) as w:
            w.write(self.record(0))
            with pytest.raises(ValueError):
                w.write(self.record(0))

    def test_stream_equality_ignores_wall_clock(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d, clock in ((a, 1.0), (b, 2.0)):
            with MetricsWriter(d) as w:
                rec = self.record(0)
                rec.wall_clock_s = clock
                w.write(rec)
        assert metric_streams_equal(a / "metrics.jsonl", b / "metrics.jsonl")
        with MetricsWriter(a) as w:
            w.write(self.record(1))
        assert not metric_streams_equal(a / "metrics.jsonl", b / "metrics.jsonl")


class TestTrainingRuns:
    def test_run_training_outputs(self, tmp_path):
        result = run_training(tiny_run_config(tmp_path))
        assert Path(result["metrics_jsonl"]).exists()
        assert Path(result["metrics_csv"]).exists()
        ckpt = load_checkpoint(result["checkpoint"])
        assert ckpt.iteration == 3
        assert ckpt.config["paradigm"] == "gtde"
        assert len(read_metrics(result["metrics_jsonl"])) == 3

    def test_same_seed_identical_metric_files(self, tmp_path):
        res_a = run_training(tiny_run_config(tmp_path / "a"))
        res_b = run_training(tiny_run_config(tmp_path / "b"))
        assert metric_streams_equal(res_a["metrics_jsonl"], res_b["metrics_jsonl"])
        ckpt_a = Path(res_a["checkpoint"]).read_bytes()
        ckpt_b = Path(res_b["checkpoint"]).read_bytes()
        # config echo differs only in out_dir; params and rng must agree
        a, b = load_checkpoint(res_a["checkpoint"]), load_checkpoint(res_b["checkpoint"])
        assert a.rng_state == b.rng_state
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])

    def test_checkpoint_cadence(self, tmp_path):
        cfg = tiny_run_config(tmp_path, checkpoint_every=1, iterations=2)
        run_training(cfg)
        out = Path(cfg.out_dir)
        assert (out / "checkpoint_1.ckpt").exists()
        assert (out / "checkpoint_2.ckpt").exists()


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trained")
    cfg = tiny_run_config(tmp)
    result = run_training(cfg)
    return result


class TestEvaluate:
    def test_episode_count_and_summary(self, trained):
        summary = evaluate(trained["checkpoint"], "buttons_4", episodes=12,
                           mode="greedy", seed=7,
                           env_overrides={"episode_limit": 15})
        assert summary.episodes == 12
        assert summary.win_rate is None
        assert summary.avg_node_information is None
        assert np.isfinite(summary.mean_reward)

    def test_execution_constructs_no_adjacency(self, trained):
        before = grp.adjacency_sample_count()
        evaluate(trained["checkpoint"], "buttons_4", episodes=3, seed=8,
                 env_overrides={"episode_limit": 10})
        assert grp.adjacency_sample_count() == before

    def test_greedy_eval_reproducible(self, trained):
        kw = dict(episodes=5, mode="greedy", seed=9,
                  env_overrides={"episode_limit": 10})
        a = evaluate(trained["checkpoint"], "buttons_4", **kw)
        b = evaluate(trained["checkpoint"], "buttons_4", **kw)
        assert a == b

    def test_incompatible_env_rejected(self, trained):
        with pytest.raises(CompatibilityError):
            evaluate(trained["checkpoint"], "battle_lite_8v8", episodes=1)

    def test_bad_mode(self, trained):
        with pytest.raises(ProtocolError):
            evaluate(trained["checkpoint"], "buttons_4", episodes=1, mode="best")

    def test_untrained_bandit_greedy_follows_initial_argmax(self, tmp_path):
        from gtde.algos import Trainer
        from gtde import nets
        cfg = tiny_run_config(tmp_path, env="bandit_2", history_len=1)
        cfg.env_overrides.clear()
        trainer = Trainer(cfg.paradigm_config(), "bandit_2")
        ckpt = tmp_path / "random_policy.ckpt"
        save_checkpoint(ckpt, cfg.as_flat_dict(), 0, trainer.master.state(),
                        trainer.params)
        emb = nets.encode(trainer.params, np.ones((1, 1)))
        logits = nets.policy_forward(trainer.params, emb)
        best = int(nets.greedy_actions(logits.data)[0])
        env = make_env("bandit_2")
        expected = env.arm_rewards[best]
        a = evaluate(ckpt, "bandit_2", episodes=10, mode="greedy", seed=21)
        b = evaluate(ckpt, "bandit_2", episodes=10, mode="greedy", seed=21)
        assert a.mean_reward == expected and a.std_reward == 0.0
        assert a == b


@pytest.fixture(scope="module")
def battle_ckpts(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("battle")
    paths = []
    for seed in (11, 12):
        cfg = tiny_run_config(tmp / f"s{seed}", env="battle_lite_8v8", seed=seed,
                              iterations=2, rollout_len=4)
        cfg.env_overrides.clear()
        cfg.env_overrides["episode_limit"] = 12
        paths.append(run_training(cfg)["checkpoint"])
    return paths


class TestCrossplay:
    def test_self_play_symmetric_band(self, battle_ckpts):
        result = crossplay(battle_ckpts[0], battle_ckpts[0], "battle_lite_8v8",
                           episodes=40, seed=13,
                           env_overrides={"episode_limit": 12})
        assert result["episodes"] == 40
        assert 0.5 - 0.2 <= result["win_rate_a"] <= 0.5 + 0.2

    def test_side_swap_complementarity(self, battle_ckpts):
        kw = dict(episodes=20, seed=14, env_overrides={"episode_limit": 12})
        ab = crossplay(battle_ckpts[0], battle_ckpts[1], "battle_lite_8v8", **kw)
        ba = crossplay(battle_ckpts[1], battle_ckpts[0], "battle_lite_8v8", **kw)
        assert abs(ab["win_rate_a"] + ba["win_rate_a"] - 1.0) < 1e-12

    def test_two_team_env_required(self, trained):
        with pytest.raises(ProtocolError):
            crossplay(trained["checkpoint"], trained["checkpoint"],
                      "buttons_4", episodes=2)


class TestAblate:
    def test_sweep_bookkeeping(self, tmp_path):
        base = tiny_run_config(tmp_path, iterations=2, out_dir=str(tmp_path / "ablate"))
        result = ablate(base, ["dtde", "gtde_a"], [1, 2])
        assert len(result["runs"]) == 4
        assert len(result["summary"]) == 2
        dtde_rows = [r for r in result["runs"] if r["paradigm"] == "dtde"]
        assert all(r["avg_node_information"] == 1.0 for r in dtde_rows)
        summary = {s["paradigm"]: s for s in result["summary"]}
        rewards = np.array([r["mean_episode_reward"] for r in dtde_rows])
        assert abs(summary["dtde"]["reward_mean"] - rewards.mean()) < 1e-12
        assert abs(summary["dtde"]["reward_std"] - rewards.std()) < 1e-12


class TestInspectGroups:
    def test_export_and_summary(self, tmp_path, trained):
        out = tmp_path / "groups"
        summary = inspect_groups(trained["checkpoint"], "buttons_4", episodes=2,
                                 out_dir=out, seed=15,
                                 env_overrides={"episode_limit": 8})
        assert (out / "groups_0.jsonl").exists()
        assert (out / "groups_1.jsonl").exists()
        freq = np.array(summary["link_frequency"])
        assert np.array_equal(np.diag(freq), np.ones(4))
        assert 1.0 <= summary["avg_node_information"] <= 4.0
        first = json.loads((out / "groups_0.jsonl").read_text().splitlines()[0])
        assert set(first) == {"episode", "timestep", "agent", "alive", "members"}

    def test_identity_forced_checkpoint_exports_singletons(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "idrun", iterations=1)
        result = run_training(cfg)
        ckpt = load_checkpoint(result["checkpoint"])
        ckpt.params["group.w"][:] = 0.0
        ckpt.params["group.b"][:] = -50.0
        forced = tmp_path / "forced.ckpt"
        save_checkpoint(forced, ckpt.config, ckpt.iteration, ckpt.rng_state,
                        ckpt.params)
        out = tmp_path / "forced_groups"
        summary = inspect_groups(forced, "buttons_4", episodes=1, out_dir=out,
                                 seed=16, env_overrides={"episode_limit": 6})
        assert summary["avg_node_information"] == 1.0
        for line in (out / "groups_0.jsonl").read_text().splitlines():
            rec = json.loads(line)
            assert rec["members"] == [rec["agent"]]

    def test_non_gtde_checkpoint_rejected(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "dtde_run", paradigm="dtde", iterations=1)
        result = run_training(cfg)
        with pytest.raises(ProtocolError):
            inspect_groups(result["checkpoint"], "buttons_4", episodes=1,
                           out_dir=tmp_path / "x")


class TestCli:
    def test_train_eval_and_defaults(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(
            "env = buttons_4\nparadigm = gtde\nnum_envs = 2\nrollout_len = 8\n"
            "hidden = 16\nhistory_len = 2\niterations = 2\nseed = 3\n"
            f"out_dir = {tmp_path / 'cli_run'}\nenv.episode_limit = 15\n")
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "run complete" in out
        ckpt = str(tmp_path / "cli_run" / "checkpoint_2.ckpt")
        assert cli_main(["eval", ckpt, "--env", "buttons_4",
                         "--episodes", "3"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["episodes"] == 3
        assert cli_main(["dump-defaults"]) == 0
        assert capsys.readouterr().out == dump_defaults()

    def test_set_override_equivalent_to_file_edit(self, tmp_path, capsys):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        common = ["env=buttons_4", "num_envs=2", "rollout_len=8", "hidden=16",
                  "history_len=2", "iterations=1", "seed=4",
                  "env.episode_limit=10"]
        cfg_b = tmp_path / "b.cfg"
        cfg_b.write_text("\n".join(x.replace("=", " = ") for x in common)
                         + "\nparadigm = gtde_a\nout_dir = " + str(out_b) + "\n")
        args_a = ["train"] + sum((["--set", x] for x in common), []) + \
            ["--set", "paradigm=gtde_a", "--set", f"out_dir={out_a}"]
        assert cli_main(args_a) == 0
        assert cli_main(["train", "--config", str(cfg_b)]) == 0
        capsys.readouterr()
        assert metric_streams_equal(out_a / "metrics.jsonl", out_b / "metrics.jsonl")
        a = load_checkpoint(out_a / "checkpoint_1.ckpt")
        assert a.config["paradigm"] == "gtde_a"

    def test_exit_codes(self, tmp_path, capsys):
        assert cli_main(["train", "--set", "mystery=1"]) == 2
        assert cli_main(["train", "--set", "paradigm=warp"]) == 2
        doc = {"format_version": 99, "config": {}, "iteration": 0,
               "rng_state": {}, "params": {}}
        bad = tmp_path / "bad.ckpt"
        bad.write_text(json.dumps(doc))
        assert cli_main(["eval", str(bad), "--env", "buttons_4"]) == 3
        capsys.readouterr()
