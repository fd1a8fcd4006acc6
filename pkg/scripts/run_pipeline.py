"""End-to-end demo through the command line: synthesise, train, refine, fit, score.

Usage: python3 scripts/run_pipeline.py [workdir]
"""

import json
import sys
from pathlib import Path

from anatomik.cli import run

ROOT = Path(__file__).resolve().parents[1]


def step(argv):
    print("$ anatomik " + " ".join(argv), flush=True)
    code = run(argv)
    if code:
        raise SystemExit(code)


def main(workdir="pipeline_out"):
    d = Path(workdir)
    d.mkdir(exist_ok=True)
    configs = ROOT / "configs"
    step(["synth", "--out", str(d / "train.jsonl"), "--config", str(configs / "synth_train.json"), "--seed", "1"])
    step(["synth", "--out", str(d / "test.jsonl"), "--frames", "500", "--jitter", "15", "--flip-prob", "0.05", "--seed", "11"])
    step(["metrics", "--pred", str(d / "test.jsonl"), "--out", str(d / "metrics_corrupted.json")])
    step(["tpnet-train", "--train", str(d / "train.jsonl"), "--out", str(d / "net.npz"), "--config", str(configs / "tpnet_desk.json")])
    step(["tpnet-refine", "--params", str(d / "net.npz"), "--input", str(d / "test.jsonl"), "--out", str(d / "refined.jsonl")])
    step(["metrics", "--pred", str(d / "refined.jsonl"), "--out", str(d / "metrics_refined.json")])
    step(["fit", "--input", str(d / "refined.jsonl"), "--out", str(d / "fitted.jsonl")])
    step(["metrics", "--pred", str(d / "fitted.jsonl"), "--out", str(d / "metrics_fitted.json")])
    step(["sensitivity", "--params", str(d / "net.npz"), "--input", str(d / "test.jsonl"), "--out", str(d / "sensitivity.csv")])
    step(["surface", "--out", str(d / "surface.csv")])
    for name in ("corrupted", "refined", "fitted"):
        m = json.loads((d / f"metrics_{name}.json").read_text())
        print(f"{name:>9}: MPJPE {m['mpjpe_mm']:.2f} mm, PA-MPJPE {m['pa_mpjpe_mm']:.2f} mm")


if __name__ == "__main__":
    main(*sys.argv[1:])
