"""Command-line entry point: ``anatomik <command> [options]``.

Every command prints a JSON summary on stdout; logs go to stderr. Option
values come from flags, then ``--config FILE`` (a flat JSON object keyed by
option name with dashes replaced by underscores), then built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys

import numpy as np

from . import analysis, metrics, synth, temporal
from .fit import fit_skeleton
from .io import load_sequence, read_json, save_sequence, write_json
from .lifter import LiftConfig, lift
from .losses import LossWeights
from .pose import PoseSequence, load_skeleton

log = logging.getLogger("anatomik")

COMMANDS = ("synth", "lift", "tpnet-train", "tpnet-refine", "fit", "metrics", "surface", "sensitivity")


def _common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skeleton", default=None, help="skeleton JSON (default: $ANATOMIK_SKELETON or the shipped one)")
    p.add_argument("--out", required=out_required, default=None)
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def _weights(p):
    d = LossWeights()
    p.add_argument("--lambda-a", type=float, default=d.lambda_a)
    p.add_argument("--lambda-s", type=float, default=d.lambda_s)
    p.add_argument("--lambda-g", type=float, default=d.lambda_g)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anatomik", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a legal motion sequence, optionally corrupted")
    _common(p)
    p.add_argument("--frames", type=int, default=synth.MotionSpec.frames)
    p.add_argument("--fps", type=float, default=synth.MotionSpec.fps)
    p.add_argument("--jitter", type=float, default=0.0, help="Gaussian jitter sigma in mm")
    p.add_argument("--flip-prob", type=float, default=0.0, help="per-frame probability of a depth flip")

    p = sub.add_parser("lift", help="recover depths from the xy of each frame")
    _common(p)
    _weights(p)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("weak", "supervised"), default="weak")
    p.add_argument("--init", choices=("zeros", "random", "perturbed"), default="zeros")
    p.add_argument("--sigma", type=float, default=50.0, help="init noise (random / perturbed) in mm")
    p.add_argument("--step-size", type=float, default=LiftConfig.step_size)
    p.add_argument("--max-iters", type=int, default=LiftConfig.max_iters)
    p.add_argument("--tol", type=float, default=LiftConfig.tol)
    p.add_argument("--trajectory", default=None, help="CSV of per-iteration losses")

    tc = temporal.TrainConfig()
    p = sub.add_parser("tpnet-train", help="train the temporal network on a sequence with ground truth")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--mode", choices=("online", "semi_online"), default="online")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--epochs", type=int, default=tc.epochs)
    p.add_argument("--lr", type=float, default=tc.learning_rate)
    p.add_argument("--batch-size", type=int, default=tc.batch_size)
    p.add_argument("--augment", choices=("rotation", "none"), default=tc.augment)
    p.add_argument("--schedule", choices=("constant", "cosine"), default=tc.schedule)
    p.add_argument("--weight-decay", type=float, default=tc.weight_decay)
    p.add_argument("--init", choices=temporal.INIT_SCHEMES, default=tc.init)

    p = sub.add_parser("tpnet-refine", help="refine a sequence with a trained network")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("fit", help="rescale bones to known lengths, keeping directions")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--targets", default=None, help="JSON {bone: mm}; default: skeleton canonical lengths")

    p = sub.add_parser("metrics", help="MPJPE, PA-MPJPE, PCK/AUC and validity report")
    _common(p, out_required=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", default=None, help="ground-truth sequence (default: the 'gt' field of --pred)")
    p.add_argument("--no-scale", action="store_true", help="rigid instead of similarity alignment")

    g = analysis.GridSpec()
    p = sub.add_parser("surface", help="loss surface over one joint's coordinates (CSV)")
    _common(p)
    _weights(p)
    p.add_argument("--pose", default=None, help="JSONL whose first frame is the ground truth (default: built-in elbow pose)")
    p.add_argument("--joint", default=g.joint)
    p.add_argument("--axes", default="".join(g.axes))
    p.add_argument("--center", type=float, nargs=2, default=None)
    p.add_argument("--half-extent", type=float, default=g.half_extent)
    p.add_argument("--resolution", type=int, default=g.resolution)

    p = sub.add_parser("sensitivity", help="temporal-network sensitivity map (CSV)")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--frame", type=int, default=None, help="refined frame (default: middle of the sequence)")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=8)
    return parser


# commands ----------------------------------------------------------------


def _weights_from(args) -> LossWeights:
    return LossWeights(args.lambda_a, args.lambda_s, args.lambda_g)


def cmd_synth(args, skeleton):
    fields = {f.name for f in dataclasses.fields(synth.MotionSpec)}
    extra = {k: v for k, v in vars(args).items() if k in fields}
    spec = synth.MotionSpec(**{**extra, "frames": args.frames, "fps": args.fps, "seed": args.seed})
    seq = synth.generate_sequence(skeleton, spec)
    if args.jitter > 0 or args.flip_prob > 0:
        seq = synth.corrupt_sequence(seq, synth.NoiseSpec(args.jitter, args.flip_prob, args.seed + 1), skeleton)
    save_sequence(seq, args.out)
    return {
        "frames": len(seq),
        "fps": seq.fps,
        "mpjpe_vs_gt_mm": metrics.mpjpe(seq.frames, seq.ground_truth),
        "motion": dataclasses.asdict(spec),
    }


def cmd_lift(args, skeleton):
    seq = load_sequence(args.input)
    gt = seq.ground_truth
    if args.mode == "supervised" and gt is None:
        raise ValueError("supervised lifting needs ground truth in the input")
    if args.init == "perturbed" and gt is None:
        raise ValueError("--init perturbed needs ground truth in the input")
    weights = _weights_from(args)
    rng = np.random.default_rng(args.seed)
    out = np.empty_like(seq.frames)
    rows, finals, converged, iters = [], [], 0, []
    for t, frame in enumerate(seq.frames):
        kw = dict(mode=args.mode, step_size=args.step_size, max_iters=args.max_iters, tol=args.tol)
        if args.init == "zeros":
            cfg = LiftConfig(init="zeros", **kw)
        else:
            base = gt[t, :, 2] if args.init == "perturbed" else np.zeros(16)
            cfg = LiftConfig(init="provided", init_z=base + rng.normal(0.0, args.sigma, 16), **kw)
        cfg.record_trajectory = args.trajectory is not None
        res = lift(frame[:, :2], skeleton, weights, cfg, gt_z=None if gt is None else gt[t, :, 2])
        out[t] = res.pose
        finals.append(float(res.final_loss.total))
        converged += res.converged
        iters.append(res.iterations)
        rows.extend((t,) + r for r in res.trajectory)
    save_sequence(PoseSequence(out, seq.fps, gt), args.out)
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "iteration", "total", "angle", "symmetry", "geometry"])
            for r in rows:
                w.writerow([r[0], r[1]] + [repr(x) for x in r[2:]])
    summary = {
        "frames": len(seq),
        "mode": args.mode,
        "mean_final_loss": float(np.mean(finals)),
        "converged": int(converged),
        "mean_iterations": float(np.mean(iters)),
    }
    if gt is not None:
        rms = np.sqrt(np.mean((out[..., 2] - gt[..., 2]) ** 2, axis=1))
        rms_reflected = np.sqrt(np.mean((out[..., 2] + gt[..., 2]) ** 2, axis=1))
        summary["depth_rms_mm"] = float(np.mean(rms))
        summary["depth_rms_up_to_reflection_mm"] = float(np.mean(np.minimum(rms, rms_reflected)))
        summary["mpjpe_mm"] = metrics.mpjpe(out, gt)
    return summary


def cmd_tpnet_train(args, skeleton):
    seq = load_sequence(args.train)
    net = temporal.TPNetConfig(window=args.window, mode=args.mode, hidden=args.hidden)
    cfg = temporal.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        augment=args.augment,
        schedule=args.schedule,
        weight_decay=args.weight_decay,
        init=args.init,
    )
    history = []
    params = temporal.tpnet_train(temporal.make_dataset(seq, net), cfg, net, history=history)
    temporal.save_params(params, args.out, net, cfg)
    refined = temporal.tpnet_refine_sequence(params, seq, net)
    return {
        "epochs": cfg.epochs,
        "epoch_mse": history,
        "train_mpjpe_input_mm": metrics.mpjpe(seq.frames, seq.ground_truth),
        "train_mpjpe_refined_mm": metrics.mpjpe(refined.frames, seq.ground_truth),
        "net": dataclasses.asdict(net),
    }


def _load_net(path):
    params, net, _ = temporal.load_params(path)
    if net is None:
        net = temporal.TPNetConfig(window=params.window, hidden=params.hidden)
    return params, net


def cmd_tpnet_refine(args, skeleton):
    params, net = _load_net(args.params)
    seq = load_sequence(args.input)
    refined = temporal.tpnet_refine_sequence(params, seq, net)
    save_sequence(refined, args.out)
    summary = {"frames": len(refined), "net": dataclasses.asdict(net)}
    if seq.ground_truth is not None:
        summary["mpjpe_input_mm"] = metrics.mpjpe(seq.frames, seq.ground_truth)
        summary["mpjpe_refined_mm"] = metrics.mpjpe(refined.frames, seq.ground_truth)
    return summary


def cmd_fit(args, skeleton):
    seq = load_sequence(args.input)
    targets = read_json(args.targets) if args.targets else skeleton.canonical_lengths
    fitted = fit_skeleton(seq.frames, targets, skeleton)
    save_sequence(PoseSequence(fitted, seq.fps, seq.ground_truth), args.out)
    summary = {"frames": len(seq), "validity": metrics.validity_report(fitted, skeleton).to_dict()}
    if seq.ground_truth is not None:
        summary["mpjpe_mm"] = metrics.mpjpe(fitted, seq.ground_truth)
    return summary


def cmd_metrics(args, skeleton):
    pred = load_sequence(args.pred)
    if args.gt:
        gt = load_sequence(args.gt).frames
    elif pred.ground_truth is not None:
        gt = pred.ground_truth
    else:
        raise ValueError("no ground truth: pass --gt or include 'gt' in --pred")
    report = metrics.evaluate(pred.frames, gt, skeleton, scale=not args.no_scale)
    if args.out:
        write_json(report, args.out)
    return report


def cmd_surface(args, skeleton):
    if args.pose:
        gt = load_sequence(args.pose).frames[0]
    else:
        gt, _ = analysis.elbow_demo_poses(skeleton)
    spec = analysis.GridSpec(
        joint=args.joint,
        axes=tuple(args.axes),
        center=None if args.center is None else tuple(args.center),
        half_extent=args.half_extent,
        resolution=args.resolution,
    )
    surf = analysis.loss_surface_grid(gt, gt, spec, skeleton, _weights_from(args), workers=args.threads)
    surf.to_csv(args.out)
    return {
        "rows": spec.resolution**2,
        "joint": spec.joint,
        "axes": list(spec.axes),
        "min": {k: float(v.min()) for k, v in surf.layers.items()},
    }


def cmd_sensitivity(args, skeleton):
    params, net = _load_net(args.params)
    seq = load_sequence(args.input)
    frame = len(seq) // 2 if args.frame is None else args.frame
    if not 0 <= frame < len(seq):
        raise ValueError(f"--frame {frame} outside sequence of length {len(seq)}")
    window = temporal.make_windows(seq.frames, net)[frame]
    offsets, S = analysis.sensitivity_map(params, net, window, args.epsilon, args.trials, args.seed)
    analysis.write_sensitivity_csv(args.out, offsets, S)
    per_offset = S.mean(axis=(1, 2))
    return {"frame": frame, "mean_by_offset": {int(o): float(v) for o, v in zip(offsets, per_offset)}}


HANDLERS = {
    "synth": cmd_synth,
    "lift": cmd_lift,
    "tpnet-train": cmd_tpnet_train,
    "tpnet-refine": cmd_tpnet_refine,
    "fit": cmd_fit,
    "metrics": cmd_metrics,
    "surface": cmd_surface,
    "sensitivity": cmd_sensitivity,
}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        # re-parse with the config file's values installed as defaults
        config = read_json(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def run(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        skeleton = load_skeleton(args.skeleton)
        summary = HANDLERS[args.command](args, skeleton)
    except (ValueError, OSError, KeyError) as e:
        print(f"anatomik {args.command}: error: {e}", file=sys.stderr)
        return 1
    summary = {"command": args.command, "seed": args.seed, **summary}
    if getattr(args, "out", None):
        summary["out"] = args.out
    print(json.dumps(summary, sort_keys=True))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
