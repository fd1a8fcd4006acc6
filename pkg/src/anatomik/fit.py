"""Skeleton fitting: impose known bone lengths while keeping bone directions."""

from __future__ import annotations

import numpy as np

from .losses import LEN_EPS, DegeneratePoseError
from .pose import ROOT, Skeleton


def _target_array(target_lengths, skeleton: Skeleton) -> np.ndarray:
    if isinstance(target_lengths, dict):
        missing = [b.name for b in skeleton.bones if b.name not in target_lengths]
        if missing:
            raise KeyError(f"target lengths missing for bones: {missing}")
        out = np.array([float(target_lengths[b.name]) for b in skeleton.bones])
    else:
        out = np.asarray(target_lengths, dtype=float)
        if out.shape[-1] != len(skeleton.bones):
            raise ValueError(f"expected {len(skeleton.bones)} target lengths")
    if np.any(out <= 0):
        raise ValueError("target lengths must be positive")
    return out


def fit_skeleton(pose, target_lengths, skeleton: Skeleton) -> np.ndarray:
    """Rebuild ``pose`` from the root outward with each bone rescaled to its target length.

    Works on a single pose or a batch ``(..., 16, 3)``. The root is placed at
    the origin. Raises :class:`DegeneratePoseError` if a bone is too short to
    have a direction.
    """
    P = np.asarray(pose, dtype=float)
    targets = _target_array(target_lengths, skeleton)
    out = np.zeros_like(P)
    out[..., ROOT, :] = 0.0
    # bones are ordered parent-before-child, so each parent is already placed
    for i, b in enumerate(skeleton.bones):
        v = P[..., b.child, :] - P[..., b.parent, :]
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(n < LEN_EPS):
            raise DegeneratePoseError(f"bone {b.name!r} has no direction (length < {LEN_EPS} mm)")
        out[..., b.child, :] = out[..., b.parent, :] + targets[..., i, None] * (v / n)
    return out
