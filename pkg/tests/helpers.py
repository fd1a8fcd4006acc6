"""Shared oracles and generators for the test suite."""

import numpy as np

from anatomik.synth import MotionSpec, generate_sequence


def random_poses(rng, n, spread=250.0):
    """Generic root-relative poses: every joint scattered independently.

    Such poses are almost surely non-degenerate (no collinear hinge planes, no
    equal left/right lengths, no zero-length bones).
    """
    p = rng.normal(0.0, spread, size=(n, 16, 3))
    p[:, 0] = 0.0
    return p


def legal_poses(skeleton, n, seed=0):
    """Poses from the motion generator, sampled sparsely so they differ."""
    seq = generate_sequence(skeleton, MotionSpec(frames=n * 7, seed=seed))
    return seq.frames[::7]


def central_difference(f, x, h):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def batched_central_difference(f, x, h):
    """Central differences of a batch-capable scalar function, all coordinates at once.

    ``f`` maps ``(..., *x.shape)`` to ``(...)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n).reshape((n,) + x.shape)
    fp = f(x[None] + h * eye)
    fm = f(x[None] - h * eye)
    return ((fp - fm) / (2.0 * h)).reshape(x.shape)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion, ok, detail):
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok
