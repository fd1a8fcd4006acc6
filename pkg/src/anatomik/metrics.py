"""Pose accuracy and structural-validity metrics (all distances in mm)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import illegality
from .pose import PoseSequence, Skeleton, bone_lengths


class DegenerateAlignmentError(ValueError):
    pass


@dataclass
class SimilarityTransform:
    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation


@dataclass
class ValidityReport:
    lr_l1: dict[str, float]
    bone_std: dict[str, float]
    illegal_rate: float

    def to_dict(self) -> dict:
        return {
            "left_right_l1_mm": self.lr_l1,
            "mean_left_right_l1_mm": float(np.mean(list(self.lr_l1.values()))) if self.lr_l1 else 0.0,
            "bone_length_std_mm": self.bone_std,
            "mean_bone_length_std_mm": float(np.mean(list(self.bone_std.values()))) if self.bone_std else 0.0,
            "illegal_angle_rate": self.illegal_rate,
        }


def joint_errors(pred, gt) -> np.ndarray:
    return np.linalg.norm(np.asarray(pred, dtype=float) - np.asarray(gt, dtype=float), axis=-1)


def mpjpe(pred, gt) -> float:
    """Mean per-joint Euclidean error, averaged over joints (and frames, if batched)."""
    return float(np.mean(joint_errors(pred, gt)))


def procrustes_align(P, Q, scale: bool = True) -> SimilarityTransform:
    """Least-squares similarity (or rigid, with ``scale=False``) transform taking P onto Q."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    mu_p, mu_q = P.mean(axis=0), Q.mean(axis=0)
    X, Y = P - mu_p, Q - mu_q
    if np.linalg.matrix_rank(X, tol=1e-9 * max(1.0, np.abs(X).max())) < 2:
        raise DegenerateAlignmentError("source points are collinear or coincident")
    U, S, Vt = np.linalg.svd(Y.T @ X)
    D = np.ones(3)
    D[2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = (U * D) @ Vt
    s = float(np.sum(S * D) / np.sum(X * X)) if scale else 1.0
    t = mu_q - s * R @ mu_p
    return SimilarityTransform(R, s, t)


def pampjpe(pred, gt, scale: bool = True) -> float:
    """MPJPE after Procrustes alignment of ``pred`` onto ``gt`` (per frame if batched)."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.ndim == 2:
        return mpjpe(procrustes_align(pred, gt, scale).apply(pred), gt)
    return float(np.mean([pampjpe(p, g, scale) for p, g in zip(pred, gt)]))


def pck_auc(preds, gts, threshold: float = 150.0, auc_thresholds=None):
    """Fraction of joints within ``threshold`` mm, and the mean of that fraction over a sweep.

    The sweep defaults to 0, 5, ..., 150 mm.
    """
    preds = np.asarray(getattr(preds, "frames", preds), dtype=float)
    gts = np.asarray(getattr(gts, "frames", gts), dtype=float)
    if preds.shape != gts.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {gts.shape}")
    if auc_thresholds is None:
        auc_thresholds = np.arange(0.0, 150.0 + 1e-9, 5.0)
    d = joint_errors(preds, gts).ravel()
    pck = float(np.mean(d <= threshold))
    auc = float(np.mean([np.mean(d <= t) for t in auc_thresholds]))
    return pck, auc


def validity_report(seq, skeleton: Skeleton) -> ValidityReport:
    """Left/right length asymmetry, per-bone length spread and illegal hinge rate."""
    frames = np.asarray(getattr(seq, "frames", seq), dtype=float)
    if frames.ndim == 2:
        frames = frames[None]
    if len(frames) == 0:
        raise ValueError("empty sequence")
    L = bone_lengths(frames, skeleton)
    names = [b.name for b in skeleton.bones]
    lr = {f"{names[i]}/{names[j]}": float(np.mean(np.abs(L[:, i] - L[:, j]))) for i, j in skeleton.bone_pairs}
    # shifting by the first frame makes constant lengths give exactly zero spread
    spread = np.std(L - L[:1], axis=0)
    std = {name: float(spread[k]) for k, name in enumerate(names)}
    rate = float(np.mean(illegality(frames, skeleton) > 0))
    return ValidityReport(lr, std, rate)


def evaluate(pred: PoseSequence | np.ndarray, gt, skeleton: Skeleton, scale: bool = True) -> dict:
    """All metrics in one JSON-ready dict."""
    p = np.asarray(getattr(pred, "frames", pred), dtype=float)
    g = np.asarray(getattr(gt, "frames", gt), dtype=float)
    pck, auc = pck_auc(p, g)
    return {
        "frames": int(len(p)),
        "mpjpe_mm": mpjpe(p, g),
        "pa_mpjpe_mm": pampjpe(p, g, scale),
        "pck150": pck,
        "auc": auc,
        "validity": validity_report(p, skeleton).to_dict(),
    }
