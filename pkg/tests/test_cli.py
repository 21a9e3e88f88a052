from pathlib import Path

import pytest

from regmarl.cli import main


def write_tiny_config(tmp_path, out_dir, seed=3):
    path = tmp_path / "tiny.toml"
    path.write_text(
        "priors = [[0.0, 0.6, 0.4]]\n"
        "actor_hidden = [8, 8]\n"
        "critic_hidden = [8, 8]\n"
        "batch_size = 16\n"
        "buffer_capacity = 64\n"
        "iterations = 4\n"
        "steps_per_iteration = 24\n"
        "epochs_per_iteration = 1\n"
        "eval_every = 2\n"
        "eval_episodes = 2\n"
        f"seed = {seed}\n"
        f'out_dir = "{out_dir}"\n'
    )
    return path


def test_train_eval_export_plot_pipeline(tmp_path, capsys):
    cfg = write_tiny_config(tmp_path, tmp_path / "run")
    assert main(["train", "--config", str(cfg)]) == 0
    checkpoint = tmp_path / "run" / "checkpoint.json"
    metrics = tmp_path / "run" / "metrics.csv"
    assert checkpoint.exists() and metrics.exists()
    capsys.readouterr()

    assert main(["eval", "--checkpoint", str(checkpoint), "--episodes", "3", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "success_rate" in out and "agent 0" in out

    traj = tmp_path / "traj.csv"
    assert main(["export", "--checkpoint", str(checkpoint), "--episodes", "2",
                 "--out", str(traj)]) == 0
    assert traj.exists()

    plots = tmp_path / "plots"
    assert main(["plot", "--metrics", str(metrics), "--trajectories", str(traj),
                 "--out", str(plots)]) == 0
    assert (plots / "returns.svg").exists()


def test_train_seed_override_changes_outputs(tmp_path):
    cfg = write_tiny_config(tmp_path, tmp_path / "a")
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg), "--seed", "99",
                 "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a != b


def test_train_multi_seed_replicas(tmp_path):
    cfg = write_tiny_config(tmp_path, tmp_path / "multi")
    assert main(["train", "--config", str(cfg), "--seeds", "1,2"]) == 0
    for seed in (1, 2):
        assert (tmp_path / "multi" / f"seed{seed}" / "metrics.csv").exists()


def test_eval_missing_checkpoint_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["eval", "--checkpoint", str(missing), "--episodes", "1"]) != 0
    err = capsys.readouterr().err
    assert "nope.json" in err


def test_plot_malformed_csv_fails_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,metrics,file\n1,2,3,4\n")
    assert main(["plot", "--metrics", str(bad), "--out", str(tmp_path / "p")]) != 0
    err = capsys.readouterr().err
    assert "bad.csv:1" in err


def test_bad_config_value_fails(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("priors = [[0.0, 0.6, 0.4]]\ngamma = 2.0\n")
    assert main(["train", "--config", str(cfg)]) != 0
    assert "gamma" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--nonsense"])
    assert exc.value.code != 0


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--cases", "10", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "OK" in out
    assert "actor_loss" in out
