"""Loss-surface grids over one joint's coordinates and temporal-network sensitivity maps."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .losses import LossWeights, geometry_loss, illegal_angle_loss, symmetry_loss
from .pose import Skeleton
from .synth import forward_kinematics
from .temporal import TPNetConfig, TPNetParams

AXES = {"x": 0, "y": 1, "z": 2}
LAYERS = ("loc2d", "sym", "angle", "total_weak", "full3d")


@dataclass
class GridSpec:
    joint: str = "l_elbow"
    axes: tuple[str, str] = ("x", "z")
    center: tuple[float, float] | None = None  # defaults to the ground-truth joint
    half_extent: float = 300.0
    resolution: int = 64

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")
        if len(self.axes) != 2 or self.axes[0] == self.axes[1] or any(a not in AXES for a in self.axes):
            raise ValueError(f"axes must be two distinct names from x, y, z; got {self.axes}")


@dataclass
class LossSurface:
    """Cumulative loss layers on a ``resolution x resolution`` grid.

    ``layers["sym"]`` is the 2D-location loss plus the weighted symmetry term,
    ``layers["angle"]`` adds the weighted illegal-angle term, and
    ``layers["total_weak"]`` adds the weighted ratio term. ``full3d`` is the
    squared 3D distance to ground truth. Arrays are indexed ``[i, j]`` with
    ``i`` along the first axis.
    """

    axes: tuple[str, str]
    u: np.ndarray
    v: np.ndarray
    layers: dict[str, np.ndarray] = field(default_factory=dict)

    def rows(self):
        for i, a in enumerate(self.u):
            for j, b in enumerate(self.v):
                yield (a, b) + tuple(self.layers[k][i, j] for k in LAYERS)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.axes) + list(LAYERS))
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])


def loss_layers(poses, gt_pose, joint: int, skeleton: Skeleton, weights: LossWeights) -> dict[str, np.ndarray]:
    """Evaluate every surface layer for a batch of poses that differ from ``gt_pose`` at ``joint``."""
    poses = np.asarray(poses, dtype=float)
    gt = np.asarray(gt_pose, dtype=float)
    d = poses[..., joint, :] - gt[joint]
    loc2d = np.sum(d[..., :2] ** 2, axis=-1)
    sym = loc2d + weights.lambda_s * symmetry_loss(poses, skeleton)[0]
    ang = sym + weights.lambda_a * illegal_angle_loss(poses, skeleton)[0]
    total = ang + weights.lambda_g * geometry_loss(poses, skeleton)[0]
    full3d = np.sum(d**2, axis=-1)
    return {"loc2d": loc2d, "sym": sym, "angle": ang, "total_weak": total, "full3d": full3d}


def loss_surface_grid(
    base_pose,
    gt_pose,
    spec: GridSpec,
    skeleton: Skeleton,
    weights: LossWeights = LossWeights(),
    workers: int = 1,
) -> LossSurface:
    """Slide one joint over a 2D grid with every other joint held fixed."""
    base = np.asarray(base_pose, dtype=float)
    gt = np.asarray(gt_pose, dtype=float)
    j = skeleton.joint_index(spec.joint)
    if skeleton.parents[j] < 0:
        raise ValueError("the root joint cannot be moved")
    a0, a1 = AXES[spec.axes[0]], AXES[spec.axes[1]]
    c = (gt[j, a0], gt[j, a1]) if spec.center is None else spec.center
    u = np.linspace(c[0] - spec.half_extent, c[0] + spec.half_extent, spec.resolution)
    v = np.linspace(c[1] - spec.half_extent, c[1] + spec.half_extent, spec.resolution)
    U, V = np.meshgrid(u, v, indexing="ij")
    poses = np.broadcast_to(base, U.shape + base.shape).copy()
    poses[..., j, a0] = U
    poses[..., j, a1] = V

    rows = np.array_split(np.arange(spec.resolution), max(1, workers))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        parts = list(ex.map(lambda r: loss_layers(poses[r], gt, j, skeleton, weights), rows))
    layers = {k: np.concatenate([p[k] for p in parts], axis=0) for k in LAYERS}
    return LossSurface(tuple(spec.axes), u, v, layers)


def elbow_demo_poses(skeleton: Skeleton, side: str = "l", shoulder_flex_deg: float = -30.0, abduction_deg: float = 15.0):
    """Left/right symmetric pose whose wrist sits at the shoulder's depth, plus its elbow-reflected twin.

    Reflecting the elbow depth through the shoulder depth keeps both arm bone
    lengths (so the 2D and symmetry terms cannot tell the two apart) but
    bends the elbow backwards. Returns ``(legal_gt, reflected)``.
    """
    flex = np.deg2rad(shoulder_flex_deg)
    abd = np.deg2rad(abduction_deg)

    def pose_for(theta):
        angles = {"yaw": np.zeros(1)}
        for s in ("r", "l"):
            angles.update(
                {
                    f"{s}_shoulder_flex": np.array([flex]),
                    f"{s}_shoulder_abd": np.array([abd]),
                    f"{s}_elbow": np.array([theta]),
                    f"{s}_hip_flex": np.zeros(1),
                    f"{s}_hip_abd": np.array([np.deg2rad(5.0)]),
                    f"{s}_knee": np.array([np.deg2rad(20.0)]),
                }
            )
        return forward_kinematics(skeleton, angles)[0]

    S = skeleton.joint_index(f"{side}_shoulder")
    E = skeleton.joint_index(f"{side}_elbow")
    W = skeleton.joint_index(f"{side}_wrist")

    def gap(theta):
        p = pose_for(theta)
        return p[W, 2] - p[S, 2]

    theta = brentq(gap, 1e-3, np.pi / 2, xtol=1e-14)
    gt = pose_for(theta)
    gt[W, 2] = gt[S, 2]
    reflected = gt.copy()
    reflected[E, 2] = 2.0 * gt[S, 2] - gt[E, 2]
    return gt, reflected


def sensitivity_map(
    params: TPNetParams,
    net: TPNetConfig,
    base_window,
    epsilon: float = 1.0,
    trials: int = 8,
    seed: int = 0,
    offsets=None,
):
    """Mean output displacement per unit input perturbation.

    Returns ``(offsets, S)`` with ``S[t, j_in, j_out]`` the average over
    ``trials`` random unit directions of ``|delta out_{j_out}| / epsilon`` when
    input joint ``j_in`` at time offset ``offsets[t]`` (relative to the refined
    frame) moves by ``epsilon``. Offsets outside the window give zeros.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    base = np.asarray(base_window, dtype=float)
    N, J = net.window, base.shape[1]
    if offsets is None:
        offsets = -np.arange(N) if net.mode == "online" else np.arange(N) - net.current_index
    offsets = np.asarray(offsets, dtype=int)

    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(N, J, trials, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)

    # propagate each perturbation through the shared pre-activation so that
    # inputs the network ignores give an output change of exactly zero
    pre = params.W1 @ (base.reshape(-1) * params.scale) + params.b1
    h0 = np.maximum(pre, 0.0)
    S = np.zeros((len(offsets), J, J))
    for t, off in enumerate(offsets):
        pos = net.current_index + off
        if not 0 <= pos < N:
            continue
        for j in range(J):
            col = (pos * J + j) * 3
            dpre = (params.W1[:, col : col + 3] @ (epsilon * params.scale * dirs[pos, j].T)).T  # (trials, hidden)
            dout = (np.maximum(pre + dpre, 0.0) - h0) @ params.W2.T / params.scale
            S[t, j] = np.linalg.norm(dout.reshape(trials, J, 3), axis=-1).mean(axis=0) / epsilon
    return offsets, S


def sensitivity_rows(offsets, S):
    for t, off in enumerate(offsets):
        for j_in in range(S.shape[1]):
            for j_out in range(S.shape[2]):
                yield int(off), j_in, j_out, float(S[t, j_in, j_out])


def write_sensitivity_csv(path, offsets, S):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "j_in", "j_out", "value"])
        for row in sensitivity_rows(offsets, S):
            w.writerow([row[0], row[1], row[2], repr(row[3])])
