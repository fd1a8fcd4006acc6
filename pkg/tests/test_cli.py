import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from anatomik.cli import run
from anatomik.io import load_sequence
from anatomik.pose import default_skeleton

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


@pytest.fixture
def noisy(tmp_path, capsys):
    path = tmp_path / "noisy.jsonl"
    code, summary, _ = call(capsys, "synth", "--out", path, "--frames", 60, "--jitter", 15, "--flip-prob", 0.1, "--seed", 1)
    assert code == 0
    return path


def test_synth_summary(noisy, capsys):
    seq = load_sequence(noisy)
    assert len(seq) == 60
    assert seq.ground_truth is not None


def test_metrics_identical_files(noisy, capsys):
    code, summary, _ = call(capsys, "metrics", "--pred", noisy, "--gt", noisy)
    assert code == 0
    assert summary["mpjpe_mm"] == 0.0
    assert summary["pck150"] == 1.0


def test_metrics_writes_report(noisy, tmp_path, capsys):
    out = tmp_path / "m.json"
    code, summary, _ = call(capsys, "metrics", "--pred", noisy, "--out", out)
    assert code == 0
    assert json.loads(out.read_text())["mpjpe_mm"] == summary["mpjpe_mm"] > 0


def test_surface_default_rows(tmp_path, capsys):
    out = tmp_path / "surface.csv"
    code, summary, _ = call(capsys, "surface", "--out", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,z,loc2d,sym,angle,total_weak,full3d"
    assert len(lines) - 1 == 64 * 64 == summary["rows"]


def test_lift_and_trajectory(noisy, tmp_path, capsys):
    out, traj = tmp_path / "lifted.jsonl", tmp_path / "traj.csv"
    code, summary, _ = call(capsys, "lift", "--input", noisy, "--out", out, "--max-iters", 5, "--trajectory", traj)
    assert code == 0
    lifted = load_sequence(out)
    np.testing.assert_array_equal(lifted.frames[..., :2], load_sequence(noisy).frames[..., :2])
    header, *rows = traj.read_text().splitlines()
    assert header == "frame,iteration,total,angle,symmetry,geometry"
    assert len(rows) <= 60 * 6


def test_fit_uses_canonical_lengths(noisy, tmp_path, capsys):
    out = tmp_path / "fitted.jsonl"
    code, summary, _ = call(capsys, "fit", "--input", noisy, "--out", out)
    assert code == 0
    assert summary["validity"]["mean_bone_length_std_mm"] < 1e-9


def test_pipeline_refines(tmp_path, capsys):
    train, test = tmp_path / "train.jsonl", tmp_path / "test.jsonl"
    params, refined = tmp_path / "net.npz", tmp_path / "refined.jsonl"
    assert call(capsys, "synth", "--out", train, "--config", CONFIGS / "synth_train.json", "--seed", 1)[0] == 0
    assert call(capsys, "synth", "--out", test, "--frames", 200, "--jitter", 15, "--flip-prob", 0.05, "--seed", 11)[0] == 0
    code, summary, _ = call(capsys, "tpnet-train", "--train", train, "--out", params, "--config", CONFIGS / "tpnet_desk.json")
    assert code == 0
    assert len(summary["epoch_mse"]) == 30
    assert call(capsys, "tpnet-refine", "--params", params, "--input", test, "--out", refined)[0] == 0
    before = call(capsys, "metrics", "--pred", test)[1]["mpjpe_mm"]
    after = call(capsys, "metrics", "--pred", refined)[1]["mpjpe_mm"]
    assert after < before
    code, summary, _ = call(capsys, "sensitivity", "--params", params, "--input", test, "--out", tmp_path / "s.csv")
    assert code == 0
    assert len(summary["mean_by_offset"]) == 20


def test_config_file_sets_defaults(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"frames": 12, "elbow_mean": 60.0}))
    code, summary, _ = call(capsys, "synth", "--out", tmp_path / "a.jsonl", "--config", cfg)
    assert summary["frames"] == 12
    assert summary["motion"]["elbow_mean"] == 60.0
    code, summary, _ = call(capsys, "synth", "--out", tmp_path / "a.jsonl", "--config", cfg, "--frames", 7)
    assert summary["frames"] == 7


def test_skeleton_flag(tmp_path, capsys):
    d = default_skeleton().to_dict()
    d["canonical_lengths"] = {k: 0.5 * v for k, v in d["canonical_lengths"].items()}
    path = tmp_path / "half.json"
    path.write_text(json.dumps(d))
    out = tmp_path / "a.jsonl"
    assert call(capsys, "synth", "--out", out, "--frames", 3, "--skeleton", path)[0] == 0
    frames = load_sequence(out).frames
    assert np.linalg.norm(frames[0, 9] - frames[0, 8]) == pytest.approx(90.0)


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_inputs_are_not_modified(noisy, tmp_path, capsys):
    before = _digest(noisy)
    call(capsys, "fit", "--input", noisy, "--out", tmp_path / "f.jsonl")
    call(capsys, "lift", "--input", noisy, "--out", tmp_path / "l.jsonl", "--max-iters", 2)
    assert _digest(noisy) == before


def test_usage_errors_exit_2(capsys):
    assert run(["bogus"]) == 2
    assert run(["synth", "--out", "x.jsonl", "--no-such-flag"]) == 2
    assert run(["synth"]) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, _, err = call(capsys, "metrics", "--pred", tmp_path / "missing.jsonl")
    assert code == 1
    assert "missing.jsonl" in err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"t": 0, "joints": [[0, 0, 0]]}\n')
    code, _, err = call(capsys, "fit", "--input", bad, "--out", tmp_path / "o.jsonl")
    assert code == 1
    assert "expected 16 joints" in err
    code, _, err = call(capsys, "lift", "--input", bad, "--out", tmp_path / "o.jsonl")
    assert code == 1
