"""Pose and skeleton data model for the 16-joint root-relative body.

Coordinates are millimetres. The body frame used by the shipped skeleton is
right-handed with x toward the subject's left, y up and z forward; every loss
in the package is invariant to proper rigid motions, so callers may use any
rotated version of that frame.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

NUM_JOINTS = 16

JOINT_NAMES = (
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
ROOT = 0

SKELETON_ENV = "ANATOMIK_SKELETON"


@dataclass(frozen=True)
class Bone:
    parent: int
    child: int
    name: str

    def __post_init__(self):
        if self.parent == self.child:
            raise ValueError(f"bone {self.name!r} has parent == child")


@dataclass(frozen=True)
class AngleJointSpec:
    """A limited hinge joint (elbow or knee).

    The plane normal is ``plane_bones[0] x plane_bones[1]``. The joint is legal
    when ``legal_sign * (n . limb) >= 0``.
    """

    joint: str
    plane_bones: tuple[str, str]
    limb_bone: str
    legal_sign: int


# Right elbow: lower arm must point along collar x upper-arm. Mirroring flips
# the cross product, so the left elbow is the opposite case; knees bend the
# other way from elbows.
DEFAULT_ANGLE_JOINTS = (
    AngleJointSpec("r_elbow", ("r_collar", "r_upper_arm"), "r_lower_arm", +1),
    AngleJointSpec("l_elbow", ("l_collar", "l_upper_arm"), "l_lower_arm", -1),
    AngleJointSpec("r_knee", ("r_hip_bone", "r_upper_leg"), "r_lower_leg", -1),
    AngleJointSpec("l_knee", ("l_hip_bone", "l_upper_leg"), "l_lower_leg", +1),
)


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Joint tree with left/right pairing, angle limits and length priors.

    Bones are indexed by position in ``bones``; ``bones`` is ordered so that
    every parent bone precedes its children.
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    bones: tuple[Bone, ...]
    lr_pairs: tuple[tuple[int, int], ...]
    symmetry_set: tuple[str, ...]
    canonical_lengths: dict[str, float]
    ratio_priors: tuple[tuple[str, str, float], ...]
    angle_joints: tuple[AngleJointSpec, ...] = DEFAULT_ANGLE_JOINTS
    rest_pose: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.joint_names)
        if len(self.parents) != n:
            raise ValueError("parents and joints differ in length")
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if roots != [ROOT]:
            raise ValueError(f"expected a single root at index {ROOT}, got {roots}")
        for j in range(n):
            seen = set()
            k = j
            while k != ROOT:
                if k in seen:
                    raise ValueError(f"cycle through joint {self.joint_names[j]}")
                seen.add(k)
                k = self.parents[k]
        if len(self.bones) != n - 1:
            raise ValueError(f"expected {n - 1} bones, got {len(self.bones)}")
        position = {b.child: i for i, b in enumerate(self.bones)}
        for b in self.bones:
            if b.parent != ROOT and position[b.parent] > position[b.child]:
                raise ValueError("bones must be listed parent-before-child")
        counterparts = self.counterpart
        for name in self.symmetry_set:
            if name not in counterparts:
                raise ValueError(f"symmetry bone {name!r} has no left/right counterpart")
        for name, length in self.canonical_lengths.items():
            if not length > 0:
                raise ValueError(f"canonical length of {name!r} must be positive")
        for a, b, r in self.ratio_priors:
            if not r > 0:
                raise ValueError(f"ratio prior {a}/{b} must be positive")
            self.bone_index(a), self.bone_index(b)

    # lookups -------------------------------------------------------------

    def bone_index(self, name: str) -> int:
        for i, b in enumerate(self.bones):
            if b.name == name:
                return i
        raise KeyError(f"unknown bone {name!r}")

    def bone(self, name: str) -> Bone:
        return self.bones[self.bone_index(name)]

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    @cached_property
    def bone_parent_idx(self) -> np.ndarray:
        return np.array([b.parent for b in self.bones])

    @cached_property
    def bone_child_idx(self) -> np.ndarray:
        return np.array([b.child for b in self.bones])

    @cached_property
    def incidence(self) -> np.ndarray:
        """Joint-by-bone matrix with +1 at each bone's child and -1 at its parent."""
        a = np.zeros((len(self.joint_names), len(self.bones)))
        for i, b in enumerate(self.bones):
            a[b.child, i] = 1.0
            a[b.parent, i] = -1.0
        return a

    @property
    def counterpart(self) -> dict[str, str]:
        """Map from each paired bone name to its mirror bone (both directions)."""
        by_child = {b.child: b.name for b in self.bones}
        out = {}
        for r, l in self.lr_pairs:
            out[by_child[r]] = by_child[l]
            out[by_child[l]] = by_child[r]
        return out

    @property
    def bone_pairs(self) -> list[tuple[int, int]]:
        """(right bone index, left bone index) for every lr pair."""
        child_to_bone = {b.child: i for i, b in enumerate(self.bones)}
        return [(child_to_bone[r], child_to_bone[l]) for r, l in self.lr_pairs]

    @property
    def mirror_permutation(self) -> np.ndarray:
        """Joint permutation that swaps left and right labels."""
        perm = np.arange(len(self.joint_names))
        for r, l in self.lr_pairs:
            perm[r], perm[l] = l, r
        return perm

    def canonical_length_array(self) -> np.ndarray:
        return np.array([self.canonical_lengths[b.name] for b in self.bones])

    def with_ratio_priors(self, priors) -> "Skeleton":
        return Skeleton(
            self.joint_names,
            self.parents,
            self.bones,
            self.lr_pairs,
            self.symmetry_set,
            dict(self.canonical_lengths),
            tuple((a, b, float(r)) for a, b, r in priors),
            self.angle_joints,
            self.rest_pose,
        )

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "joints": list(self.joint_names),
            "parents": list(self.parents),
            "bone_names": [b.name for b in self.bones],
            "lr_pairs": [list(p) for p in self.lr_pairs],
            "symmetry_set": list(self.symmetry_set),
            "canonical_lengths": dict(self.canonical_lengths),
            "ratio_priors": [[a, b, r] for a, b, r in self.ratio_priors],
        }
        if self.rest_pose is not None:
            d["rest_pose"] = self.rest_pose.tolist()
        return d


def canonical_ratio_priors(lengths: dict[str, float], reference: str = "upper_spine"):
    """Every other bone's length relative to ``reference``."""
    ref = lengths[reference]
    return tuple((name, reference, length / ref) for name, length in lengths.items() if name != reference)


def skeleton_from_dict(d: dict) -> Skeleton:
    joints = tuple(d["joints"])
    parents = tuple(int(p) for p in d["parents"])
    if not all(p < j for j, p in enumerate(parents) if p >= 0):
        raise ValueError("joints must be listed parent-before-child")
    children = [j for j in range(len(joints)) if parents[j] >= 0]
    names = d.get("bone_names") or [f"{joints[parents[j]]}-{joints[j]}" for j in children]
    bones = tuple(Bone(parents[j], j, name) for j, name in zip(children, names))
    lengths = {k: float(v) for k, v in d["canonical_lengths"].items()}
    priors = d.get("ratio_priors", "canonical")
    if priors == "canonical":
        priors = canonical_ratio_priors(lengths)
    rest = d.get("rest_pose")
    return Skeleton(
        joint_names=joints,
        parents=parents,
        bones=bones,
        lr_pairs=tuple((int(a), int(b)) for a, b in d["lr_pairs"]),
        symmetry_set=tuple(d["symmetry_set"]),
        canonical_lengths=lengths,
        ratio_priors=tuple((a, b, float(r)) for a, b, r in priors),
        rest_pose=None if rest is None else np.asarray(rest, dtype=float),
    )


def load_skeleton(path: str | os.PathLike | None = None) -> Skeleton:
    """Load a skeleton JSON file.

    With no path, ``$ANATOMIK_SKELETON`` is used if set, else the shipped
    16-joint skeleton.
    """
    if path is None:
        path = os.environ.get(SKELETON_ENV)
    if path is None:
        text = resources.files("anatomik.data").joinpath("skeleton16.json").read_text()
    else:
        text = Path(path).read_text()
    return skeleton_from_dict(json.loads(text))


_DEFAULT: Skeleton | None = None


def default_skeleton() -> Skeleton:
    """The shipped skeleton, cached (ignores the environment variable)."""
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("anatomik.data").joinpath("skeleton16.json").read_text()
        _DEFAULT = skeleton_from_dict(json.loads(text))
    return _DEFAULT


# kinematic accessors ------------------------------------------------------


def as_pose(pose) -> np.ndarray:
    p = np.asarray(pose, dtype=float)
    if p.shape[-2:] != (NUM_JOINTS, 3):
        raise ValueError(f"expected {NUM_JOINTS} joints x 3, got shape {p.shape}")
    return p


def bone_vector(pose, bone: Bone) -> np.ndarray:
    p = np.asarray(pose, dtype=float)
    return p[..., bone.child, :] - p[..., bone.parent, :]


def bone_length(pose, bone: Bone) -> float:
    return np.linalg.norm(bone_vector(pose, bone), axis=-1)


def bone_vectors(pose, skeleton: Skeleton) -> np.ndarray:
    """All bone vectors, shape ``(..., n_bones, 3)``."""
    p = np.asarray(pose, dtype=float)
    return p[..., skeleton.bone_child_idx, :] - p[..., skeleton.bone_parent_idx, :]


def bone_lengths(pose, skeleton: Skeleton) -> np.ndarray:
    return np.linalg.norm(bone_vectors(pose, skeleton), axis=-1)


def root_center(pose) -> np.ndarray:
    p = np.asarray(pose, dtype=float)
    return p - p[..., ROOT : ROOT + 1, :]


def scatter_bone_grad(grad_bones: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Pull a gradient w.r.t. bone vectors back to joint coordinates."""
    return np.einsum("jb,...bk->...jk", skeleton.incidence, grad_bones)


def mirror_pose(pose, skeleton: Skeleton, axis: int = 0) -> np.ndarray:
    """Reflect through the plane ``axis = 0`` and swap left/right joint labels."""
    p = np.array(pose, dtype=float)
    p[..., axis] = -p[..., axis]
    return p[..., skeleton.mirror_permutation, :]


def project_2d(pose) -> np.ndarray:
    """Orthographic projection: drop depth."""
    return np.asarray(pose, dtype=float)[..., :2].copy()


@dataclass
class PoseSequence:
    """Time-ordered root-relative poses, shape ``(T, 16, 3)``."""

    frames: np.ndarray
    fps: float = 50.0
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (NUM_JOINTS, 3):
            raise ValueError(f"frames must be (T, {NUM_JOINTS}, 3), got {self.frames.shape}")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=float)
            if self.ground_truth.shape != self.frames.shape:
                raise ValueError("ground_truth length/shape does not match frames")

    def __len__(self):
        return len(self.frames)
