"""Anatomical pose losses with analytic gradients.

Every function accepts a single pose ``(16, 3)`` or a batch ``(..., 16, 3)``
and returns ``(value, grad)`` with ``value`` of the batch shape and ``grad``
shaped like the pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose import Skeleton, bone_vectors, scatter_bone_grad

LEN_EPS = 1e-6
PLANE_EPS = 1e-8


class DegeneratePoseError(ValueError):
    """A loss is undefined for the given pose (e.g. a zero-length bone)."""


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 0.03
    lambda_s: float = 0.05
    lambda_g: float = 0.03

    def __post_init__(self):
        if min(self.lambda_a, self.lambda_s, self.lambda_g) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    total: np.ndarray | float
    angle: np.ndarray | float
    symmetry: np.ndarray | float
    geometry: np.ndarray | float
    grad: np.ndarray


def _unit(v, lengths):
    safe = np.where(lengths > 0, lengths, 1.0)
    return np.where(lengths[..., None] > 0, v / safe[..., None], 0.0)


def _dot(a, b):
    return np.einsum("...k,...k->...", a, b)


def angle_projection(pose, skeleton: Skeleton, raw_dot: bool = False):
    """Signed limb projection onto the hinge-plane normal, one column per angle joint.

    Returns ``(d, valid)``; ``valid`` is False where the hinge plane is
    undefined (collinear plane bones or a zero-length limb).
    """
    V = bone_vectors(pose, skeleton)
    ds, valids = [], []
    for spec in skeleton.angle_joints:
        a = V[..., skeleton.bone_index(spec.plane_bones[0]), :]
        b = V[..., skeleton.bone_index(spec.plane_bones[1]), :]
        c = V[..., skeleton.bone_index(spec.limb_bone), :]
        n = np.cross(a, b)
        nn = np.linalg.norm(n, axis=-1)
        cn = np.linalg.norm(c, axis=-1)
        scale = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
        valid = (nn > PLANE_EPS * scale) & (cn > 0)
        if raw_dot:
            d = _dot(n, c)
        else:
            d = _dot(n, c) / np.where(valid, nn * cn, 1.0)
        ds.append(np.where(valid, d, 0.0))
        valids.append(valid)
    return np.stack(ds, axis=-1), np.stack(valids, axis=-1)


def illegality(pose, skeleton: Skeleton, raw_dot: bool = False) -> np.ndarray:
    """Per-joint illegality magnitude ``m >= 0`` (zero exactly when legal)."""
    d, _ = angle_projection(pose, skeleton, raw_dot)
    signs = np.array([s.legal_sign for s in skeleton.angle_joints], dtype=float)
    return np.maximum(0.0, -signs * d)


def illegal_angle_loss(pose, skeleton: Skeleton, raw_dot: bool = False):
    """Penalty ``sum m * exp(m)`` over the elbows and knees.

    With ``raw_dot=False`` the plane normal and limb are normalised first, so
    ``m`` lies in [0, 1]. ``raw_dot=True`` uses the unnormalised dot product
    and is only sensible for unit-scale poses.
    """
    V = bone_vectors(pose, skeleton)
    gV = np.zeros_like(V)
    value = np.zeros(V.shape[:-2])
    for spec in skeleton.angle_joints:
        ia = skeleton.bone_index(spec.plane_bones[0])
        ib = skeleton.bone_index(spec.plane_bones[1])
        ic = skeleton.bone_index(spec.limb_bone)
        a, b, c = V[..., ia, :], V[..., ib, :], V[..., ic, :]
        n = np.cross(a, b)
        nn = np.linalg.norm(n, axis=-1)
        cn = np.linalg.norm(c, axis=-1)
        valid = (nn > PLANE_EPS * np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)) & (cn > 0)

        if raw_dot:
            d = _dot(n, c)
            dd_dn, dd_dc = c, n
        else:
            nn_s = np.where(valid, nn, 1.0)[..., None]
            cn_s = np.where(valid, cn, 1.0)[..., None]
            nh, ch = n / nn_s, c / cn_s
            d = _dot(nh, ch)
            dd_dn = (ch - d[..., None] * nh) / nn_s
            dd_dc = (nh - d[..., None] * ch) / cn_s

        m = np.where(valid, np.maximum(0.0, -spec.legal_sign * d), 0.0)
        em = np.exp(m)
        value = value + m * em
        # d(term)/dd; zero on the legal side, including the kink at m = 0
        coef = np.where(m > 0, -spec.legal_sign * (1.0 + m) * em, 0.0)[..., None]
        g_n = coef * dd_dn
        gV[..., ia, :] += np.cross(b, g_n)
        gV[..., ib, :] += np.cross(g_n, a)
        gV[..., ic, :] += coef * dd_dc
    return value, scatter_bone_grad(gV, skeleton)


def symmetry_loss(pose, skeleton: Skeleton):
    """Sum of absolute left/right length differences over the symmetry set."""
    V = bone_vectors(pose, skeleton)
    L = np.linalg.norm(V, axis=-1)
    U = _unit(V, L)
    gV = np.zeros_like(V)
    value = np.zeros(V.shape[:-2])
    counterpart = skeleton.counterpart
    for name in skeleton.symmetry_set:
        i = skeleton.bone_index(name)
        j = skeleton.bone_index(counterpart[name])
        diff = L[..., i] - L[..., j]
        value = value + np.abs(diff)
        s = np.sign(diff)[..., None]
        gV[..., i, :] += s * U[..., i, :]
        gV[..., j, :] -= s * U[..., j, :]
    return value, scatter_bone_grad(gV, skeleton)


def geometry_loss(pose, skeleton: Skeleton):
    """Squared deviation of bone-length ratios from the skeleton's priors."""
    if not skeleton.ratio_priors:
        raise ValueError("skeleton has no ratio priors")
    V = bone_vectors(pose, skeleton)
    L = np.linalg.norm(V, axis=-1)
    U = _unit(V, L)
    gV = np.zeros_like(V)
    value = np.zeros(V.shape[:-2])
    for a, b, r in skeleton.ratio_priors:
        i, j = skeleton.bone_index(a), skeleton.bone_index(b)
        Lb = L[..., j]
        if np.any(Lb < LEN_EPS):
            raise DegeneratePoseError(f"bone {b!r} is shorter than {LEN_EPS} mm; ratio {a}/{b} undefined")
        e = L[..., i] / Lb - r
        value = value + e * e
        gV[..., i, :] += (2.0 * e / Lb)[..., None] * U[..., i, :]
        gV[..., j, :] -= (2.0 * e * L[..., i] / (Lb * Lb))[..., None] * U[..., j, :]
    return value, scatter_bone_grad(gV, skeleton)


def structure_loss(pose, skeleton: Skeleton, weights: LossWeights = LossWeights(), raw_dot: bool = False):
    """Weighted sum of the three terms with the full ``(..., 16, 3)`` gradient."""
    a, ga = illegal_angle_loss(pose, skeleton, raw_dot)
    s, gs = symmetry_loss(pose, skeleton)
    g, gg = geometry_loss(pose, skeleton)
    total = weights.lambda_a * a + weights.lambda_s * s + weights.lambda_g * g
    grad = weights.lambda_a * ga + weights.lambda_s * gs + weights.lambda_g * gg
    return LossBreakdown(total, a, s, g, grad)


def hybrid_pose(xy, z) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    z = np.asarray(z, dtype=float)[..., None]
    shape = np.broadcast_shapes(xy.shape[:-1], z.shape[:-1])
    return np.concatenate([np.broadcast_to(xy, shape + (2,)), np.broadcast_to(z, shape + (1,))], axis=-1)


def structure_aware_loss(xy, z, skeleton: Skeleton, weights: LossWeights = LossWeights(), raw_dot: bool = False):
    """Weakly supervised loss: ``xy`` is fixed, only the depths ``z`` vary.

    The returned ``grad`` holds the derivative w.r.t. the 16 depths.
    """
    out = structure_loss(hybrid_pose(xy, z), skeleton, weights, raw_dot)
    out.grad = out.grad[..., 2].copy()
    return out


def supervised_depth_loss(z, z_gt):
    r = np.asarray(z, dtype=float) - np.asarray(z_gt, dtype=float)
    return np.sum(r * r, axis=-1), 2.0 * r
