import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anatomik.analysis import elbow_demo_poses
from anatomik.losses import (
    DegeneratePoseError,
    LossWeights,
    angle_projection,
    geometry_loss,
    illegal_angle_loss,
    illegality,
    structure_aware_loss,
    structure_loss,
    supervised_depth_loss,
    symmetry_loss,
)
from anatomik.pose import JOINT_INDEX, bone_length, mirror_pose
from anatomik.synth import rest_pose
from tests.helpers import batched_central_difference, legal_poses, random_poses, random_rotation, rel_err

SCALE = 250.0
H = 1e-6 * SCALE
seeds = st.integers(0, 2**32 - 1)


def _far_from_kinks(pose, skeleton):
    d, valid = angle_projection(pose, skeleton)
    L = {b.name: bone_length(pose, b) for b in skeleton.bones}
    sym_gaps = [abs(L[n] - L[skeleton.counterpart[n]]) for n in skeleton.symmetry_set]
    return valid.all() and np.min(np.abs(d)) > 1e-4 and min(sym_gaps) > 1e-4


@pytest.fixture(scope="module")
def fd_poses(skeleton):
    rng = np.random.default_rng(20240101)
    out = [p for p in random_poses(rng, 120, SCALE) if _far_from_kinks(p, skeleton)]
    assert len(out) >= 100
    return out[:100]


@pytest.mark.parametrize("loss", [illegal_angle_loss, symmetry_loss, geometry_loss])
def test_gradient_matches_finite_differences(skeleton, fd_poses, loss):
    worst = 0.0
    for p in fd_poses:
        value, grad = loss(p, skeleton)
        fd = batched_central_difference(lambda q: loss(q, skeleton)[0], p, H)
        worst = max(worst, rel_err(grad, fd))
    assert worst < 1e-5


def test_weak_gradient_matches_finite_differences(skeleton, fd_poses):
    w = LossWeights()
    worst = 0.0
    for p in fd_poses:
        xy, z = p[:, :2], p[:, 2]
        out = structure_aware_loss(xy, z, skeleton, w)
        assert out.grad.shape == (16,)
        fd = batched_central_difference(lambda zz: structure_aware_loss(xy, zz, skeleton, w).total, z, H)
        worst = max(worst, rel_err(out.grad, fd))
    assert worst < 1e-5


def test_raw_dot_gradient(skeleton):
    rng = np.random.default_rng(5)
    for p in random_poses(rng, 10, 1.0):
        value, grad = illegal_angle_loss(p, skeleton, raw_dot=True)
        fd = batched_central_difference(lambda q: illegal_angle_loss(q, skeleton, raw_dot=True)[0], p, 1e-6)
        assert rel_err(grad, fd) < 1e-6


def test_raw_dot_is_literal_triple_product(skeleton):
    p = random_poses(np.random.default_rng(6), 1, 1.0)[0]
    d, _ = angle_projection(p, skeleton, raw_dot=True)
    for k, spec in enumerate(skeleton.angle_joints):
        a, b, c = (p[skeleton.bone(n).child] - p[skeleton.bone(n).parent] for n in (*spec.plane_bones, spec.limb_bone))
        assert d[k] == pytest.approx(np.dot(np.cross(a, b), c), rel=1e-12)
    m = np.maximum(0.0, -np.array([s.legal_sign for s in skeleton.angle_joints]) * d)
    assert illegal_angle_loss(p, skeleton, raw_dot=True)[0] == pytest.approx(np.sum(m * np.exp(m)), rel=1e-12)


def test_legal_poses_have_zero_angle_loss(skeleton):
    P = legal_poses(skeleton, 200, seed=3)
    value, grad = illegal_angle_loss(P, skeleton)
    assert np.all(value == 0.0)
    assert np.all(grad == 0.0)
    assert illegal_angle_loss(rest_pose(skeleton), skeleton)[0] == 0.0


def _right_elbow_with_projection(skeleton, d_target):
    """Rest pose with the right lower arm set to unit-normal projection ``d_target``."""
    p = rest_pose(skeleton)
    j = JOINT_INDEX
    a = p[j["r_shoulder"]] - p[j["neck"]]
    b = p[j["r_elbow"]] - p[j["r_shoulder"]]
    n = np.cross(a, b)
    n /= np.linalg.norm(n)
    inplane = b / np.linalg.norm(b)
    v = d_target * n + np.sqrt(1.0 - d_target**2) * inplane
    p[j["r_wrist"]] = p[j["r_elbow"]] + 250.0 * v
    return p


def test_known_illegality_value(skeleton):
    # right elbow: legal side is along +n, so d = -0.5 means m = 0.5
    p = _right_elbow_with_projection(skeleton, -0.5)
    m = illegality(p, skeleton)
    k = [s.joint for s in skeleton.angle_joints].index("r_elbow")
    assert m[k] == pytest.approx(0.5, abs=1e-12)
    assert illegal_angle_loss(p, skeleton)[0] == pytest.approx(0.5 * np.exp(0.5), abs=1e-12)
    assert illegal_angle_loss(p, skeleton)[0] == pytest.approx(0.8244, abs=1e-4)
    assert illegal_angle_loss(_right_elbow_with_projection(skeleton, 0.5), skeleton)[0] == 0.0


def test_backward_elbow_is_penalised(skeleton):
    legal, backward = elbow_demo_poses(skeleton)
    assert illegal_angle_loss(legal, skeleton)[0] == 0.0
    assert illegal_angle_loss(backward, skeleton)[0] > 0.0


def test_degenerate_hinge_plane_is_ignored(skeleton):
    p = rest_pose(skeleton)
    j = JOINT_INDEX
    # upper arm along the collar direction: the hinge plane is undefined
    collar = p[j["r_shoulder"]] - p[j["neck"]]
    p[j["r_elbow"]] = p[j["r_shoulder"]] + 280.0 * collar / np.linalg.norm(collar)
    p[j["r_wrist"]] = p[j["r_elbow"]] + np.array([0.0, 0.0, -250.0])
    d, valid = angle_projection(p, skeleton)
    k = [s.joint for s in skeleton.angle_joints].index("r_elbow")
    assert not valid[k]
    value, grad = illegal_angle_loss(p, skeleton)
    assert value == 0.0
    assert np.all(np.isfinite(grad))


def test_symmetry_examples(skeleton):
    p = rest_pose(skeleton)
    assert symmetry_loss(p, skeleton)[0] == pytest.approx(0.0, abs=1e-9)
    j = JOINT_INDEX
    # left lower arm 280, right 250
    u = p[j["l_wrist"]] - p[j["l_elbow"]]
    p[j["l_wrist"]] = p[j["l_elbow"]] + 280.0 * u / np.linalg.norm(u)
    assert symmetry_loss(p, skeleton)[0] == pytest.approx(30.0, abs=1e-9)


def test_symmetry_subgradient_at_equal_lengths(skeleton):
    p = rest_pose(skeleton)
    p[JOINT_INDEX["l_knee"]] += [5.0, 0.0, 0.0]  # break only the upper/lower leg pairs
    g = symmetry_loss(p, skeleton)[1]
    # arm pairs are equal: their joints get no gradient
    for name in ("r_wrist", "l_wrist", "r_elbow", "l_elbow"):
        assert np.all(g[JOINT_INDEX[name]] == 0.0)


@settings(max_examples=50)
@given(seeds)
def test_symmetry_and_geometry_match_brute_force(skeleton, seed):
    p = random_poses(np.random.default_rng(seed), 1)[0]
    L = {b.name: bone_length(p, b) for b in skeleton.bones}
    sym = sum(abs(L[n] - L[skeleton.counterpart[n]]) for n in skeleton.symmetry_set)
    geo = sum((L[a] / L[b] - r) ** 2 for a, b, r in skeleton.ratio_priors)
    assert symmetry_loss(p, skeleton)[0] == pytest.approx(sym, rel=1e-12)
    assert geometry_loss(p, skeleton)[0] == pytest.approx(geo, rel=1e-12)


def test_geometry_examples(skeleton):
    assert geometry_loss(rest_pose(skeleton), skeleton)[0] < 1e-20
    one = skeleton.with_ratio_priors([("r_upper_arm", "l_upper_arm", 1.0)])
    p = rest_pose(skeleton)
    j = JOINT_INDEX
    for side, length in (("r", 110.0), ("l", 100.0)):
        u = p[j[f"{side}_elbow"]] - p[j[f"{side}_shoulder"]]
        p[j[f"{side}_elbow"]] = p[j[f"{side}_shoulder"]] + length * u / np.linalg.norm(u)
    assert geometry_loss(p, one)[0] == pytest.approx(0.01, abs=1e-12)


def test_geometry_degenerate_denominator(skeleton):
    p = rest_pose(skeleton)
    p[JOINT_INDEX["neck"]] = p[JOINT_INDEX["spine"]]
    with pytest.raises(DegeneratePoseError, match="upper_spine"):
        geometry_loss(p, skeleton)


def test_geometry_needs_priors(skeleton):
    with pytest.raises(ValueError):
        geometry_loss(rest_pose(skeleton), skeleton.with_ratio_priors([]))


@settings(max_examples=50)
@given(seeds)
def test_rigid_invariance(skeleton, seed):
    rng = np.random.default_rng(seed)
    p = random_poses(rng, 1)[0]
    q = p @ random_rotation(rng).T + rng.normal(0, 1000, 3)
    for loss in (illegal_angle_loss, symmetry_loss, geometry_loss):
        assert loss(q, skeleton)[0] == pytest.approx(loss(p, skeleton)[0], rel=1e-9, abs=1e-12)


@settings(max_examples=50)
@given(seeds, st.sampled_from([0, 1, 2]))
def test_mirror_with_label_swap_invariance(skeleton, seed, axis):
    p = random_poses(np.random.default_rng(seed), 1)[0]
    m = mirror_pose(p, skeleton, axis)
    for loss in (illegal_angle_loss, symmetry_loss, geometry_loss):
        assert loss(m, skeleton)[0] == pytest.approx(loss(p, skeleton)[0], rel=1e-9, abs=1e-12)


@settings(max_examples=50)
@given(seeds)
def test_depth_negation(skeleton, seed):
    p = random_poses(np.random.default_rng(seed), 1)[0]
    q = p * [1.0, 1.0, -1.0]
    for loss in (symmetry_loss, geometry_loss):
        assert loss(q, skeleton)[0] == pytest.approx(loss(p, skeleton)[0], rel=1e-9, abs=1e-12)
    # a reflection reverses the hinge-plane normal, so hinge sides swap
    np.testing.assert_allclose(angle_projection(q, skeleton)[0], -angle_projection(p, skeleton)[0], atol=1e-12)


def test_depth_negation_makes_legal_poses_illegal(skeleton):
    P = legal_poses(skeleton, 50, seed=8)
    assert np.all(illegal_angle_loss(P * [1.0, 1.0, -1.0], skeleton)[0] > 0.0)


@settings(max_examples=50)
@given(seeds, st.floats(0.01, 100.0))
def test_scale_behaviour(skeleton, seed, s):
    p = random_poses(np.random.default_rng(seed), 1)[0]
    assert illegal_angle_loss(s * p, skeleton)[0] == pytest.approx(illegal_angle_loss(p, skeleton)[0], rel=1e-9)
    assert geometry_loss(s * p, skeleton)[0] == pytest.approx(geometry_loss(p, skeleton)[0], rel=1e-9)
    assert symmetry_loss(s * p, skeleton)[0] == pytest.approx(s * symmetry_loss(p, skeleton)[0], rel=1e-9)


@settings(max_examples=50)
@given(seeds, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_composition_is_exact(skeleton, seed, la, ls, lg):
    p = random_poses(np.random.default_rng(seed), 1)[0]
    w = LossWeights(la, ls, lg)
    out = structure_loss(p, skeleton, w)
    assert out.total == w.lambda_a * out.angle + w.lambda_s * out.symmetry + w.lambda_g * out.geometry
    assert out.angle == illegal_angle_loss(p, skeleton)[0]


def test_batched_matches_single(skeleton):
    P = random_poses(np.random.default_rng(9), 5)
    out = structure_loss(P, skeleton)
    for i, p in enumerate(P):
        single = structure_loss(p, skeleton)
        assert out.total[i] == pytest.approx(single.total, rel=1e-14)
        np.testing.assert_allclose(out.grad[i], single.grad, rtol=1e-12, atol=1e-15)


def test_weak_loss_examples(skeleton):
    p = rest_pose(skeleton)
    zero = structure_aware_loss(p[:, :2], p[:, 2], skeleton, LossWeights(0.0, 0.0, 0.0))
    assert zero.total == 0.0
    assert np.all(zero.grad == 0.0)
    out = structure_aware_loss(p[:, :2], p[:, 2], skeleton)
    assert out.total < 1e-20


def test_supervised_depth_loss():
    z = np.arange(16.0)
    assert supervised_depth_loss(z, z)[0] == 0.0
    off = z.copy()
    off[4] += 3.0
    value, grad = supervised_depth_loss(off, z)
    assert value == 9.0
    fd = batched_central_difference(lambda q: supervised_depth_loss(q, z)[0], off, 1e-4)
    np.testing.assert_allclose(grad, fd, rtol=1e-8)


def test_weights_must_be_non_negative():
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.0, 0.0)
