import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "geoflow.harness.cli"]


def run_cli(args, cwd):
    return subprocess.run(CLI + args, cwd=cwd, capture_output=True, text=True)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("cli")
    (ws / "cfg.toml").write_text("""
[data]
seed = 31
train = 8
val = 4

[scene]
resolution = 32

[train]
variant = "core_predictor"
dataset = "data/train"
blocks = 1
hidden = 8
time_dim = 4
batch_size = 4
steps = 40
learning_rate = 3e-3
log_every = 0
out_dir = "runs/core"
""")
    out = run_cli(["gen-data", "--config", "cfg.toml", "--out", "data"], ws)
    assert out.returncode == 0, out.stderr
    return ws


def test_full_cli_pipeline(workspace):
    ws = workspace
    out = run_cli(["train", "--config", "cfg.toml"], ws)
    assert out.returncode == 0, out.stderr
    assert (ws / "runs/core/checkpoint.ckpt").exists()

    out = run_cli(["train-sharpener", "--config", "cfg.toml",
                   "--core", "runs/core/checkpoint.ckpt",
                   "--out", "runs/sharp", "--steps", "20"], ws)
    assert out.returncode == 0, out.stderr
    assert (ws / "runs/sharp/coarse_pairs.bin").exists()

    out = run_cli(["infer", "--core", "runs/core/checkpoint.ckpt",
                   "--sharpener", "runs/sharp/checkpoint.ckpt",
                   "--image", "data/val", "--out", "preds"], ws)
    assert out.returncode == 0, out.stderr
    assert len(list((ws / "preds").glob("*.pgm16"))) == 4

    out = run_cli(["eval", "--pred", "preds", "--gt", "data/val",
                   "--task", "depth", "--out", "reports/eval"], ws)
    assert out.returncode == 0, out.stderr
    for suffix in (".csv", ".json", ".png"):
        assert (ws / f"reports/eval{suffix}").exists()

    out = run_cli(["spectrum", "--core", "preds", "--sharpened", "preds",
                   "--gt", "data/val", "--out", "reports/spec"], ws)
    assert out.returncode == 0, out.stderr
    assert (ws / "reports/spec.csv").exists()
    assert (ws / "reports/spec.png").exists()


def test_cli_single_image_and_overrides(workspace):
    ws = workspace
    out = run_cli(["train", "--config", "cfg.toml", "--out", "runs/alt",
                   "--seed", "9", "--steps", "5"], ws)
    assert out.returncode == 0, out.stderr
    log = (ws / "runs/alt/training_log.csv").read_text().strip().splitlines()
    assert len(log) == 6  # header + 5 steps

    sample = sorted((ws / "data/val").iterdir())[0]
    out = run_cli(["infer", "--core", "runs/alt/checkpoint.ckpt",
                   "--image", str(sample / "image.ppm"), "--out", "preds_one"], ws)
    assert out.returncode == 0, out.stderr
    pred = ws / "preds_one" / f"{sample.name}.pgm16"
    assert pred.exists()
    meta = json.loads(pred.with_suffix(".json").read_text())
    assert meta["task"] == "depth" and len(meta["content_hash"]) == 64


def test_cli_small_ablation(workspace):
    ws = workspace
    out = run_cli(["ablate", "--config", "cfg.toml", "--out", "ablate",
                   "--steps", "10", "--seeds", "0", "--sweep-t", "",
                   "--arms", "+Clean-Data,+LCM"], ws)
    assert out.returncode == 0, out.stderr
    table = (ws / "ablate/ablation.csv").read_text().strip().splitlines()
    assert table[1].startswith("+Clean-Data,") and table[2].startswith("+LCM,")
    assert (ws / "ablate/ablation.png").exists()
    assert (ws / "ablate/report.json").exists()


def test_cli_error_json(workspace):
    out = run_cli(["eval", "--pred", "nowhere", "--gt", "data/val",
                   "--task", "depth", "--out", "reports/bad"], workspace)
    assert out.returncode == 1
    payload = json.loads(out.stderr.strip().splitlines()[-1])
    assert payload["error"] and payload["message"]

    out = run_cli(["train", "--config", "missing.toml"], workspace)
    assert out.returncode == 1
    payload = json.loads(out.stderr.strip().splitlines()[-1])
    assert payload["error"] == "ConfigError"


def test_cli_unknown_arm_rejected(workspace):
    out = run_cli(["ablate", "--config", "cfg.toml", "--out", "ab2",
                   "--arms", "NotAnArm", "--seeds", "0", "--sweep-t", ""], workspace)
    assert out.returncode == 1
    assert "NotAnArm" in out.stderr
