"""Depth lifting by gradient descent on the weak or supervised depth loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .losses import LossBreakdown, LossWeights, structure_aware_loss, supervised_depth_loss
from .pose import ROOT, Skeleton

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4


@dataclass
class LiftConfig:
    mode: str = "weak"  # "weak" | "supervised"
    step_size: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-8
    init: str = "zeros"  # "zeros" | "provided" | "random"
    init_z: np.ndarray | None = None
    seed: int = 0
    sigma: float = 50.0
    # the first trial step of each iteration is the last accepted step times this
    step_growth: float = 2.0
    max_halvings: int = 60
    record_trajectory: bool = False

    def __post_init__(self):
        if self.mode not in ("weak", "supervised"):
            raise ValueError(f"unknown lift mode {self.mode!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init not in ("zeros", "provided", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class LiftResult:
    pose: np.ndarray
    final_loss: LossBreakdown
    iterations: int
    converged: bool
    initial_total: float
    trajectory: list[tuple[int, float, float, float, float]] = field(default_factory=list)


def initial_depths(config: LiftConfig) -> np.ndarray:
    if config.init == "zeros":
        z = np.zeros(16)
    elif config.init == "provided":
        if config.init_z is None:
            raise ValueError("init='provided' needs init_z")
        z = np.array(config.init_z, dtype=float)
    else:
        rng = np.random.default_rng(config.seed)
        z = rng.normal(0.0, config.sigma, 16)
    z[ROOT] = 0.0
    return z


def _objective(xy, skeleton, weights, mode, gt_z):
    if mode == "weak":

        def f(z):
            out = structure_aware_loss(xy, z, skeleton, weights)
            out.grad[ROOT] = 0.0
            return out

    else:

        def f(z):
            v, g = supervised_depth_loss(z, gt_z)
            g = g.copy()
            g[ROOT] = 0.0
            return LossBreakdown(v, 0.0, 0.0, 0.0, g)

    return f


def lift(xy, skeleton: Skeleton, weights: LossWeights = LossWeights(), config: LiftConfig = LiftConfig(), gt_z=None):
    """Recover 16 joint depths for fixed image-plane coordinates ``xy``.

    The root depth is held at 0. Steepest descent with Armijo backtracking
    (step halving); the objective never increases between accepted iterates.
    ``converged`` is True iff the gradient norm fell below ``config.tol``.
    """
    xy = np.asarray(xy, dtype=float)
    if config.mode == "supervised" and gt_z is None:
        raise ValueError("supervised lifting needs gt_z")
    f = _objective(xy, skeleton, weights, config.mode, gt_z)
    z = initial_depths(config)
    cur = f(z)
    initial_total = float(cur.total)
    traj = []

    def record(it, out):
        if config.record_trajectory:
            traj.append((it, float(out.total), float(out.angle), float(out.symmetry), float(out.geometry)))

    record(0, cur)
    step = config.step_size
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        g = cur.grad
        gnorm2 = float(g @ g)
        if np.sqrt(gnorm2) < config.tol:
            converged = True
            it -= 1
            break
        t = step * config.step_growth
        for _ in range(config.max_halvings):
            cand_z = z - t * g
            cand = f(cand_z)
            if cand.total <= cur.total - ARMIJO_C * t * gnorm2:
                break
            t *= 0.5
        else:
            log.debug("line search failed at iteration %d", it)
            it -= 1
            break
        z, cur, step = cand_z, cand, t
        record(it, cur)
    else:
        converged = float(np.linalg.norm(cur.grad)) < config.tol

    return LiftResult(
        pose=np.concatenate([xy, z[:, None]], axis=1),
        final_loss=cur,
        iterations=it,
        converged=converged,
        initial_total=initial_total,
        trajectory=traj,
    )
