"""Synthetic legal motion, a single-frame predictor noise model, and projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose import JOINT_INDEX, ROOT, PoseSequence, Skeleton, project_2d

__all__ = [
    "MotionSpec",
    "NoiseSpec",
    "forward_kinematics",
    "generate_sequence",
    "corrupt_sequence",
    "project_2d",
    "NON_TORSO_JOINTS",
]

NON_TORSO_JOINTS = ("r_knee", "r_ankle", "l_knee", "l_ankle", "l_elbow", "l_wrist", "r_elbow", "r_wrist")

UP = np.array([0.0, 1.0, 0.0])
DOWN = -UP
FORWARD = np.array([0.0, 0.0, 1.0])
LEFT = np.array([1.0, 0.0, 0.0])


@dataclass
class MotionSpec:
    """Sinusoidal joint-angle motion. Angles in degrees, frequencies in Hz.

    Each trajectory is ``mean + amplitude * sin(2 pi f t + phase)`` with ``f``
    and ``phase`` drawn per trajectory from ``seed``. Hinge (elbow/knee) angles
    are flexion from straight; 0..180 is the legal range.
    """

    frames: int = 500
    fps: float = 50.0
    seed: int = 0
    elbow_mean: float = 45.0
    elbow_amplitude: float = 35.0
    knee_mean: float = 30.0
    knee_amplitude: float = 25.0
    shoulder_flex_amplitude: float = 35.0
    shoulder_abduction_mean: float = 15.0
    shoulder_abduction_amplitude: float = 10.0
    hip_flex_amplitude: float = 25.0
    hip_abduction_mean: float = 5.0
    hip_abduction_amplitude: float = 5.0
    freq_min: float = 0.4
    freq_max: float = 1.2
    yaw0: float = 0.0
    yaw_rate: float = 10.0

    def validate(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        for name in ("elbow", "knee"):
            mean = getattr(self, f"{name}_mean")
            amp = abs(getattr(self, f"{name}_amplitude"))
            if mean - amp < 0.0 or mean + amp > 180.0:
                raise ValueError(f"{name} angle range [{mean - amp}, {mean + amp}] leaves the legal range [0, 180]")
        for name in ("shoulder", "hip"):
            mean = getattr(self, f"{name}_abduction_mean")
            amp = abs(getattr(self, f"{name}_abduction_amplitude"))
            # abduction of 90 deg makes the limb collinear with the collar/hip bone
            if mean - amp <= -90.0 or mean + amp >= 90.0:
                raise ValueError(f"{name} abduction must stay inside (-90, 90) degrees")
        if not 0 < self.freq_min <= self.freq_max:
            raise ValueError("need 0 < freq_min <= freq_max")


@dataclass
class NoiseSpec:
    jitter_sigma: float = 15.0
    depth_flip_prob: float = 0.05
    seed: int = 0

    def validate(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if not 0.0 <= self.depth_flip_prob <= 1.0:
            raise ValueError("depth_flip_prob must be in [0, 1]")


def _unit_limb(flex, abduction, lateral):
    """Direction hanging down, swung forward by ``flex`` and out by ``abduction``."""
    cb = np.cos(abduction)[..., None]
    return (
        cb * np.cos(flex)[..., None] * DOWN
        + cb * np.sin(flex)[..., None] * FORWARD
        + np.sin(abduction)[..., None] * lateral
    )


def _hinge(upper, proximal, flexion, legal_sign):
    """Rotate ``upper`` by ``flexion`` toward the legal side of the hinge plane."""
    n = np.cross(proximal, upper)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return np.cos(flexion)[..., None] * upper + legal_sign * np.sin(flexion)[..., None] * n


def _yaw_matrix(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.zeros(yaw.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 1, 1] = 1.0
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def forward_kinematics(skeleton: Skeleton, angles: dict[str, np.ndarray], lengths=None) -> np.ndarray:
    """Build poses from joint angles (radians), shape ``(T, 16, 3)``.

    ``angles`` holds arrays of equal length for ``yaw`` and, per side ``s`` in
    ``{r, l}``: ``s_shoulder_flex``, ``s_shoulder_abd``, ``s_elbow``,
    ``s_hip_flex``, ``s_hip_abd``, ``s_knee``.
    """
    L = skeleton.canonical_lengths if lengths is None else lengths
    J = skeleton.joint_index
    legal = {a.joint: a.legal_sign for a in skeleton.angle_joints}
    T = len(angles["yaw"])
    P = np.zeros((T, len(skeleton.joint_names), 3))

    def put(child, parent, length, direction):
        P[:, J(child)] = P[:, J(parent)] + length * direction

    put("spine", "pelvis", L["lower_spine"], UP)
    put("neck", "spine", L["upper_spine"], UP)
    put("head", "neck", L["neck_head"], UP)
    for side, lateral in (("r", -LEFT), ("l", LEFT)):
        lat = np.broadcast_to(lateral, (T, 3))
        put(f"{side}_hip", "pelvis", L[f"{side}_hip_bone"], lat)
        thigh = _unit_limb(angles[f"{side}_hip_flex"], angles[f"{side}_hip_abd"], lateral)
        put(f"{side}_knee", f"{side}_hip", L[f"{side}_upper_leg"], thigh)
        shin = _hinge(thigh, lat, angles[f"{side}_knee"], legal[f"{side}_knee"])
        put(f"{side}_ankle", f"{side}_knee", L[f"{side}_lower_leg"], shin)

        put(f"{side}_shoulder", "neck", L[f"{side}_collar"], lat)
        upper = _unit_limb(angles[f"{side}_shoulder_flex"], angles[f"{side}_shoulder_abd"], lateral)
        put(f"{side}_elbow", f"{side}_shoulder", L[f"{side}_upper_arm"], upper)
        fore = _hinge(upper, lat, angles[f"{side}_elbow"], legal[f"{side}_elbow"])
        put(f"{side}_wrist", f"{side}_elbow", L[f"{side}_lower_arm"], fore)

    R = _yaw_matrix(np.asarray(angles["yaw"], dtype=float))
    return np.einsum("tij,tkj->tki", R, P)


def _trajectories(spec: MotionSpec) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.frames) / spec.fps
    out = {}
    table = [
        ("shoulder_flex", 0.0, spec.shoulder_flex_amplitude),
        ("shoulder_abd", spec.shoulder_abduction_mean, spec.shoulder_abduction_amplitude),
        ("elbow", spec.elbow_mean, spec.elbow_amplitude),
        ("hip_flex", 0.0, spec.hip_flex_amplitude),
        ("hip_abd", spec.hip_abduction_mean, spec.hip_abduction_amplitude),
        ("knee", spec.knee_mean, spec.knee_amplitude),
    ]
    for side in ("r", "l"):
        for name, mean, amp in table:
            f = rng.uniform(spec.freq_min, spec.freq_max)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            deg = mean + amp * np.sin(2.0 * np.pi * f * t + phase)
            out[f"{side}_{name}"] = np.deg2rad(deg)
    out["yaw"] = np.deg2rad(spec.yaw0 + spec.yaw_rate * t)
    return out


def generate_sequence(skeleton: Skeleton, spec: MotionSpec) -> PoseSequence:
    """Legal, left-right symmetric motion built by forward kinematics.

    The returned sequence carries itself as ground truth.
    """
    spec.validate()
    frames = forward_kinematics(skeleton, _trajectories(spec))
    return PoseSequence(frames, fps=spec.fps, ground_truth=frames.copy())


def rest_pose(skeleton: Skeleton) -> np.ndarray:
    """The pose a zero-amplitude default motion holds."""
    spec = MotionSpec(
        frames=1,
        shoulder_flex_amplitude=0.0,
        shoulder_abduction_amplitude=0.0,
        elbow_amplitude=0.0,
        hip_flex_amplitude=0.0,
        hip_abduction_amplitude=0.0,
        knee_amplitude=0.0,
        yaw_rate=0.0,
    )
    return generate_sequence(skeleton, spec).frames[0]


def corrupt_sequence(seq: PoseSequence, noise: NoiseSpec, skeleton: Skeleton | None = None) -> PoseSequence:
    """Add per-joint Gaussian jitter and sporadic single-joint depth flips.

    Jitter is applied to every joint, the root included, without re-centring.
    A flip negates the (root-relative) depth of one random limb joint.
    """
    noise.validate()
    rng = np.random.default_rng(noise.seed)
    clean = seq.frames
    out = clean + rng.normal(0.0, noise.jitter_sigma, size=clean.shape) if noise.jitter_sigma > 0 else clean.copy()
    if noise.depth_flip_prob > 0:
        index = skeleton.joint_index if skeleton is not None else JOINT_INDEX.__getitem__
        idx = np.array([index(n) for n in NON_TORSO_JOINTS])
        flip = rng.random(len(clean)) < noise.depth_flip_prob
        which = idx[rng.integers(0, len(idx), size=len(clean))]
        for t in np.flatnonzero(flip):
            j = which[t]
            out[t, j, 2] = 2.0 * out[t, ROOT, 2] - out[t, j, 2]
    gt = seq.ground_truth if seq.ground_truth is not None else seq.frames
    return PoseSequence(out, fps=seq.fps, ground_truth=gt.copy())
