import json
from pathlib import Path

import pytest
import yaml

from wecmarl.cli import EXIT_INVALID, EXIT_OK, main
from wecmarl.config import config_from_dict, load_config, packaged
from wecmarl.marl.schedule import load_schedule
from wecmarl.wec.geometry import ConfigError

TINY_SCHEDULE = {
    "name": "tiny",
    "eta": {"front": -0.6, "back": 0.8},
    "detector": {"window": 2, "epsilon": 0.01},
    "stages": [
        {"kind": "hybrid", "trainable": "front", "steps": 300, "eval_every": 300},
        {"kind": "hybrid", "trainable": "back", "steps": 300, "eval_every": 300},
        {"kind": "align", "steps": 300, "eval_every": 300},
        {"kind": "ping_pong", "agents": ["front", "back"], "rounds": 1, "steps": 300, "eval_every": 300},
    ],
}

TINY_CONFIG = {
    "seed": 4,
    "workers": 1,
    "sea": {"periods": [9, 12], "duration": 30},
    "agent": {"hidden": [16, 16], "init_log_std": -1.0},
    "a3c": {"optimizer": "adam", "lr": 1.0e-3, "t_max": 40, "reward_scale": 1.0e-5},
    "train_eval": {"episodes": 1, "periods": [10], "duration": 20, "warmup": 0},
    "protocol": {"episodes": 2, "periods": [9, 12], "duration": 30, "warmup": 5},
    "schedule": "tiny_schedule.yaml",
}


@pytest.fixture
def tiny(tmp_path):
    (tmp_path / "tiny_schedule.yaml").write_text(yaml.safe_dump(TINY_SCHEDULE))
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG))
    return path


def files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --- generate-waves --------------------------------------------------------------------

def test_waves_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["generate-waves", "--out", str(tmp_path / d), "--seed", "3", "--duration", "50"]) == EXIT_OK
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and list(a) == ["waves/episode_0000.csv"]


def test_waves_summary_hs(tmp_path, capsys):
    assert main(["generate-waves", "--out", str(tmp_path), "--count", "100", "--hs", "2", "--tp", "10"]) == EXIT_OK
    line = [x for x in capsys.readouterr().out.splitlines() if x.startswith("empirical Hs")][0]
    assert abs(float(line.split()[2]) - 2.0) < 0.05 * 2.0


def test_waves_invalid_period(tmp_path, capsys):
    assert main(["generate-waves", "--out", str(tmp_path / "o"), "--tp", "0"]) != EXIT_OK
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("WECMARL_OUTPUT_ROOT", str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert main(["generate-waves", "--duration", "20"]) == EXIT_OK
    assert (tmp_path / "env" / "waves" / "episode_0000.csv").exists()
    assert {p.name for p in tmp_path.iterdir()} == {"env"}


# --- train / evaluate ------------------------------------------------------------------

def test_dry_run(tiny, tmp_path, capsys):
    assert main(["train", "--config", str(tiny), "--out", str(tmp_path / "o"), "--dry-run"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "hybrid" in out and "skip-back-r1" in out
    assert not (tmp_path / "o").exists()


def test_packaged_dry_run(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--dry-run"]) == EXIT_OK
    assert "align" in capsys.readouterr().out


def test_invalid_schedule_reported_before_training(tiny, tmp_path, capsys):
    bad = dict(TINY_SCHEDULE, stages=[{"kind": "skip", "trainable": "front", "steps": 300, "eval_every": 300}])
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(bad))
    code = main(["train", "--config", str(tiny), "--schedule", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "o")])
    assert code == EXIT_INVALID
    assert not (tmp_path / "o" / "train").exists()


def test_train_evaluate_deterministic(tiny, tmp_path):
    for d in ("a", "b"):
        out = str(tmp_path / d)
        assert main(["train", "--config", str(tiny), "--out", out]) == EXIT_OK
        assert main(["evaluate", "--config", str(tiny), "--out", out, "--controller", f"{out}/train/best"]) == EXIT_OK
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert any(k.endswith(".ckpt") for k in a) and "eval/evaluation.csv" in a
    assert a.keys() == b.keys()
    for k in a:
        if k.endswith(".json") and "manifest" in k:
            continue  # the manifest names the output path
        assert a[k] == b[k], k
    ma = json.loads(a["eval/manifest.json"])
    mb = json.loads(b["eval/manifest.json"])
    assert ma["checkpoint_hashes"] == mb["checkpoint_hashes"] and ma["seeds"] == mb["seeds"]


def test_sd_against_sd(tiny, tmp_path):
    out = tmp_path / "o"
    assert main(["gain-table", "--config", str(tiny), "--out", str(out), "--controller", "sd", "--plot-data"]) == 0
    rows = (out / "gain" / "gain_table.csv").read_text().strip().split("\n")
    assert [float(r.split(",")[-1]) for r in rows[1:]] == [0.0, 0.0, 0.0]
    plot = (out / "gain" / "plot_data.csv").read_text().strip().split("\n")
    assert plot[0] == "controller,period,gain_percent" and len(plot) == 3


def test_missing_checkpoint(tiny, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "best"
    code = main(["evaluate", "--config", str(tiny), "--out", str(tmp_path), "--controller", str(missing)])
    assert code != EXIT_OK
    assert str(missing) in capsys.readouterr().err


# --- check -----------------------------------------------------------------------------

def test_check_json(capsys):
    assert main(["check", "--json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["passed"] is True
    names = {c["name"] for c in data["checks"]}
    assert {"parseval", "gradient", "energy", "mirror", "freeze"} <= names


def test_check_coarse_step_fails(capsys):
    assert main(["check", "--only", "energy", "--dt-sim", "0.5"]) == EXIT_INVALID
    line = capsys.readouterr().out
    assert "FAIL" in line and "1e-03" in line


def test_check_unknown(capsys):
    assert main(["check", "--only", "nope"]) == EXIT_INVALID


def test_hypersearch_synthetic(tmp_path, capsys):
    assert main(["hypersearch", "--out", str(tmp_path), "--budget", "8", "--seed", "1"]) == EXIT_OK
    rows = (tmp_path / "search" / "history.csv").read_text().strip().split("\n")
    assert len(rows) == 9 and "best trial" in capsys.readouterr().out


# --- config ----------------------------------------------------------------------------

def test_packaged_config_loads():
    cfg = load_config()
    assert cfg.tier == "coupled" and cfg.workers == 1
    assert cfg.schedule().name == "canonical"
    assert load_schedule(packaged("canonical_schedule.yaml")).min_rounds == 2


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"a3c": {"learning_rate": 1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"layout": {"preset": "step9"}})


def test_config_missing_schedule(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"schedule": "absent.yaml"}, tmp_path)
