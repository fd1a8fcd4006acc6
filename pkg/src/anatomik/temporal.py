"""Sliding-window temporal refinement network.

A two-layer fully connected ReLU network maps ``N`` consecutive root-relative
poses (flattened oldest first) to one refined pose. Forward and backward passes
and the Adam trainer are plain numpy.
"""

from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .pose import NUM_JOINTS, PoseSequence

log = logging.getLogger(__name__)

POSE_DIM = NUM_JOINTS * 3
INIT_SCHEMES = ("random", "moving_average")
# hidden-unit offset (normalised units, i.e. 2 m) that keeps pass-through units in the linear part of the ReLU
_PASS_BIAS = 2.0


@dataclass(frozen=True)
class TPNetConfig:
    window: int = 20
    mode: str = "online"  # "online" | "semi_online"
    hidden: int = 4096

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.mode not in ("online", "semi_online"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "semi_online" and self.window % 2:
            raise ValueError("semi_online needs an even window")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.window * POSE_DIM

    @property
    def output_dim(self) -> int:
        return POSE_DIM

    @property
    def current_index(self) -> int:
        """Position of the refined frame inside the window."""
        return self.window - 1 if self.mode == "online" else self.window // 2 - 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # "rotation": each minibatch sample (window and target together) gets a
    # fresh uniformly random 3D rotation; "none": train on the data as given
    augment: str = "none"
    # "constant" or "cosine" (anneal to zero over the run)
    schedule: str = "constant"
    # decoupled (AdamW-style) decay on W1 and W2
    weight_decay: float = 0.0
    # starting weights when no explicit init is passed, see TPNetParams.init
    init: str = "random"

    def __post_init__(self):
        if self.augment not in ("rotation", "none"):
            raise ValueError(f"unknown augmentation {self.augment!r}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init {self.init!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TPNetParams:
    """Weights in normalised units: inputs and outputs are ``mm * scale``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    scale: float = 1e-3

    def __post_init__(self):
        h, d_in = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape[1] != h or self.b2.shape != (self.W2.shape[0],):
            raise ValueError("inconsistent parameter shapes")
        if self.W2.shape[0] != POSE_DIM or d_in % POSE_DIM:
            raise ValueError(f"input must be a multiple of {POSE_DIM} and output exactly {POSE_DIM}")

    @property
    def window(self) -> int:
        return self.W1.shape[1] // POSE_DIM

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def arrays(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "TPNetParams":
        return TPNetParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), self.scale)

    @classmethod
    def zeros(cls, net: TPNetConfig, scale: float = 1e-3) -> "TPNetParams":
        return cls(
            np.zeros((net.hidden, net.input_dim)),
            np.zeros(net.hidden),
            np.zeros((net.output_dim, net.hidden)),
            np.zeros(net.output_dim),
            scale,
        )

    @classmethod
    def init(cls, net: TPNetConfig, seed: int = 0, scale: float = 1e-3, scheme: str = "random") -> "TPNetParams":
        """Starting weights.

        ``"random"``: He-normal first layer, fan-in scaled output layer, zero
        biases. ``"moving_average"``: the same random draw, then the first 48
        hidden units are overwritten so the network starts as the window mean
        of each coordinate (shifted by a bias so the ReLU stays open for
        coordinates above -2 m) and the remaining units start with zero output
        weight. Needs ``hidden >= 48``.
        """
        if scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init {scheme!r}")
        rng = np.random.default_rng(seed)
        W1 = rng.normal(0.0, np.sqrt(2.0 / net.input_dim), (net.hidden, net.input_dim))
        W2 = rng.normal(0.0, np.sqrt(1.0 / net.hidden), (net.output_dim, net.hidden))
        b1 = np.zeros(net.hidden)
        b2 = np.zeros(net.output_dim)
        if scheme == "moving_average":
            if net.hidden < POSE_DIM:
                raise ValueError(f"moving_average init needs hidden >= {POSE_DIM}")
            W1[:POSE_DIM] = np.tile(np.eye(POSE_DIM), net.window) / net.window
            b1[:POSE_DIM] = _PASS_BIAS
            W2[:] = 0.0
            W2[:, :POSE_DIM] = np.eye(POSE_DIM)
            b2[:] = -_PASS_BIAS
        return cls(W1, b1, W2, b2, scale)


def _flatten(window, params: TPNetParams) -> np.ndarray:
    w = np.asarray(window, dtype=float)
    n = params.window
    if w.shape[-3:] != (n, NUM_JOINTS, 3):
        raise ValueError(f"expected window of shape (..., {n}, {NUM_JOINTS}, 3), got {w.shape}")
    return w.reshape(w.shape[:-3] + (n * POSE_DIM,)) * params.scale


def tpnet_forward(params: TPNetParams, window) -> np.ndarray:
    """Refined pose(s) in mm, shape ``(..., 16, 3)``."""
    x = _flatten(window, params)
    h = np.maximum(x @ params.W1.T + params.b1, 0.0)
    y = h @ params.W2.T + params.b2
    return (y / params.scale).reshape(y.shape[:-1] + (NUM_JOINTS, 3))


def _loss_and_grads(params: TPNetParams, x, t, reduce_mean: bool):
    """Squared error and gradients for normalised inputs ``x`` (B, D) and targets ``t`` (B, 48)."""
    pre = x @ params.W1.T + params.b1
    h = np.maximum(pre, 0.0)
    y = h @ params.W2.T + params.b2
    r = y - t
    if reduce_mean:
        norm = 1.0 / r.size
    else:
        norm = 1.0
    loss = norm * float(np.sum(r * r))
    dy = 2.0 * norm * r
    dh = (dy @ params.W2) * (pre > 0)
    grads = {
        "W1": dh.T @ x,
        "b1": dh.sum(axis=0),
        "W2": dy.T @ h,
        "b2": dy.sum(axis=0),
    }
    return loss, grads


def tpnet_backward(params: TPNetParams, window, target):
    """Loss ``||out - target||^2`` (normalised units) and its parameter gradients.

    Returns ``(loss, grads)`` with ``grads`` keyed like ``params.arrays()``.
    """
    x = _flatten(window, params).reshape(1, -1)
    t = np.asarray(target, dtype=float)
    if t.shape != (NUM_JOINTS, 3):
        raise ValueError(f"target must be ({NUM_JOINTS}, 3), got {t.shape}")
    return _loss_and_grads(params, x, t.reshape(1, -1) * params.scale, reduce_mean=False)


def window_indices(length: int, net: TPNetConfig) -> np.ndarray:
    """Frame indices feeding each output frame, edge-padded, shape ``(length, N)``."""
    start = np.arange(length) - net.current_index
    idx = start[:, None] + np.arange(net.window)[None, :]
    return np.clip(idx, 0, length - 1)


def make_windows(frames, net: TPNetConfig) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    return frames[window_indices(len(frames), net)]


def make_dataset(seq: PoseSequence, net: TPNetConfig):
    """Windows of the (noisy) frames paired with ground-truth targets."""
    if seq.ground_truth is None:
        raise ValueError("training sequence needs ground truth")
    return make_windows(seq.frames, net), seq.ground_truth.copy()


def tpnet_train(
    dataset,
    config: TrainConfig = TrainConfig(),
    net: TPNetConfig = TPNetConfig(hidden=256),
    init: TPNetParams | None = None,
    history: list | None = None,
) -> TPNetParams:
    """Adam on mean squared error over shuffled minibatches.

    ``dataset`` is ``(windows, targets)`` arrays or a list of ``(window, target)``
    pairs. Fully deterministic given ``config.seed``.
    """
    if isinstance(dataset, tuple) and len(dataset) == 2 and np.ndim(dataset[0]) == 4:
        X, T = dataset
    else:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        X = np.stack([w for w, _ in dataset])
        T = np.stack([t for _, t in dataset])
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    if len(X) == 0:
        raise ValueError("empty dataset")
    if X.shape[1] != net.window:
        raise ValueError(f"windows have length {X.shape[1]}, network expects {net.window}")

    params = TPNetParams.init(net, config.seed, scheme=config.init) if init is None else init.copy()
    xs = X.reshape(len(X), -1) * params.scale
    ts = T.reshape(len(T), -1) * params.scale
    rng = np.random.default_rng(config.seed + 1)

    arrays = params.arrays()
    m = {k: np.zeros_like(v) for k, v in arrays.items()}
    v = {k: np.zeros_like(a) for k, a in arrays.items()}
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps
    step = 0
    total_steps = config.epochs * -(-len(xs) // config.batch_size)
    for epoch in range(config.epochs):
        order = rng.permutation(len(xs))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            xb, tb = xs[batch], ts[batch]
            if config.augment == "rotation":
                xb, tb = _rotate_batch(xb, tb, rng)
            loss, grads = _loss_and_grads(params, xb, tb, reduce_mean=True)
            if not np.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch}, step {step} (loss={loss})")
            step += 1
            if config.schedule == "cosine":
                lr = config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * (step - 1) / total_steps))
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for k, a in arrays.items():
                g = grads[k]
                m[k] = b1 * m[k] + (1.0 - b1) * g
                v[k] = b2 * v[k] + (1.0 - b2) * (g * g)
                if config.weight_decay and k in ("W1", "W2"):
                    a -= lr * config.weight_decay * a
                a -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
            total += loss * len(batch)
        epoch_loss = total / len(xs)
        log.info("epoch %d/%d  mse %.6g", epoch + 1, config.epochs, epoch_loss)
        if history is not None:
            history.append(epoch_loss)
    return params


def _rotate_batch(x, t, rng):
    R = Rotation.random(len(x), random_state=rng).as_matrix()
    xr = np.einsum("bij,bpj->bpi", R, x.reshape(len(x), -1, 3)).reshape(x.shape)
    tr = np.einsum("bij,bpj->bpi", R, t.reshape(len(t), -1, 3)).reshape(t.shape)
    return xr, tr


def tpnet_refine_sequence(params: TPNetParams, seq: PoseSequence, net: TPNetConfig, batch: int = 1024) -> PoseSequence:
    """Refine every frame from its edge-padded window; output length equals input length."""
    if len(seq) < 1:
        raise ValueError("empty sequence")
    if net.window != params.window:
        raise ValueError(f"network window {net.window} does not match params ({params.window})")
    idx = window_indices(len(seq), net)
    out = np.empty_like(seq.frames)
    for lo in range(0, len(seq), batch):
        out[lo : lo + batch] = tpnet_forward(params, seq.frames[idx[lo : lo + batch]])
    gt = None if seq.ground_truth is None else seq.ground_truth.copy()
    return PoseSequence(out, fps=seq.fps, ground_truth=gt)


# params file -------------------------------------------------------------


def save_params(params: TPNetParams, path, net: TPNetConfig | None = None, train: TrainConfig | None = None):
    """Write an ``.npz`` with the four tensors and a JSON header echoing the config."""
    header = {
        "format": "anatomik-tpnet/1",
        "shapes": {k: list(a.shape) for k, a in params.arrays().items()},
        "scale": params.scale,
        "net": None if net is None else asdict(net),
        "train": None if train is None else asdict(train),
    }
    entries = {"header": np.array(json.dumps(header, sort_keys=True))}
    entries.update(params.arrays())
    # fixed timestamps keep the archive byte-for-byte reproducible
    with zipfile.ZipFile(Path(path), "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in entries.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)


def load_params(path):
    """Returns ``(params, net_config_or_None, header)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        arrays = {k: data[k].astype(float) for k in ("W1", "b1", "W2", "b2")}
    for k, shape in header["shapes"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"{path}: tensor {k} has shape {arrays[k].shape}, header says {shape}")
    params = TPNetParams(scale=header["scale"], **arrays)
    net = None if header.get("net") is None else TPNetConfig(**header["net"])
    return params, net, header
