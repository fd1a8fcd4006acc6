"""JSON Lines pose sequences and small JSON helpers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pose import NUM_JOINTS, PoseSequence


class SequenceFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _joints(value, path, line, key):
    arr = np.asarray(value, dtype=float) if isinstance(value, list) else None
    if arr is None or arr.ndim != 2:
        raise SequenceFormatError(path, line, f"{key!r} must be a list of [x, y, z] triples")
    if arr.shape[0] != NUM_JOINTS:
        raise SequenceFormatError(path, line, f"expected {NUM_JOINTS} joints in {key!r}, got {arr.shape[0]}")
    if arr.shape[1] != 3:
        raise SequenceFormatError(path, line, f"expected 3 coordinates per joint in {key!r}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise SequenceFormatError(path, line, f"non-finite coordinate in {key!r}")
    return arr


def load_sequence(path, fps: float | None = None) -> PoseSequence:
    """Read one frame per line: ``{"t": int, "joints": [[x,y,z]*16], "gt": optional}``.

    A frame may also carry ``"fps"``; the first one seen is used unless
    ``fps`` is given. Ground truth must be present on all frames or none.
    """
    frames, gts, file_fps = [], [], None
    with open(path) as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise SequenceFormatError(path, n, f"malformed JSON ({e.msg})") from None
            if not isinstance(obj, dict) or "joints" not in obj:
                raise SequenceFormatError(path, n, "missing required key 'joints'")
            if "t" in obj and not isinstance(obj["t"], int):
                raise SequenceFormatError(path, n, "'t' must be an integer")
            frames.append(_joints(obj["joints"], path, n, "joints"))
            gts.append(_joints(obj["gt"], path, n, "gt") if obj.get("gt") is not None else None)
            if file_fps is None and "fps" in obj:
                file_fps = float(obj["fps"])
    if not frames:
        raise SequenceFormatError(path, 0, "no frames")
    have = [g is not None for g in gts]
    if any(have) and not all(have):
        raise SequenceFormatError(path, have.index(False) + 1 if have[0] else have.index(True) + 1, "'gt' must be on every frame or none")
    gt = np.stack(gts) if all(have) else None
    return PoseSequence(np.stack(frames), fps=fps or file_fps or 50.0, ground_truth=gt)


def _fmt(a: np.ndarray) -> list:
    # repr of a Python float round-trips exactly (17 significant digits when needed)
    return [[float(x) for x in row] for row in a]


def save_sequence(seq: PoseSequence, path) -> None:
    with open(path, "w") as fh:
        for t, frame in enumerate(seq.frames):
            obj = {"t": t, "fps": seq.fps, "joints": _fmt(frame)}
            if seq.ground_truth is not None:
                obj["gt"] = _fmt(seq.ground_truth[t])
            fh.write(json.dumps(obj) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
