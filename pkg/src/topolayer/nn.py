"""From-scratch numpy convolutional classifier with Adam training.

Architecture (28x28 single-channel input):
conv 1->32 (3x3, valid) -> ReLU -> conv 32->64 (3x3, valid) -> ReLU ->
max-pool 2x2 -> dropout 0.25 -> flatten (64*12*12 = 9216) ->
fc 9216->128 -> ReLU -> dropout 0.5 -> fc 128->10 -> log-softmax.

Convolutions run as im2col matrix products; max-pool picks the first
maximum in each window (deterministic under ties); dropout uses inverted
scaling so evaluation needs no rescale. Parameters default to single
precision; pass dtype=np.float64 for finite-difference work.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Dataset
from .topologize import TopologizeConfig, topologize_batch

PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
               "fc1_w", "fc1_b", "fc2_w", "fc2_b")
PARAM_SHAPES = {
    "conv1_w": (32, 1, 3, 3), "conv1_b": (32,),
    "conv2_w": (64, 32, 3, 3), "conv2_b": (64,),
    "fc1_w": (9216, 128), "fc1_b": (128,),
    "fc2_w": (128, 10), "fc2_b": (10,),
}
DROP1, DROP2 = 0.25, 0.5
CHECKPOINT_MAGIC = b"TPLC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings (Adam throughout)."""

    batch_size: int = 100
    epochs: int = 9
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.learning_rate <= 0.0 or self.eps <= 0.0:
            raise ValueError("learning_rate and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    test_accuracy: float


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, C, H, W) -> (B*OH*OW, C*k*k) patch matrix, (C, ki, kj) order."""
    b, c, h, w = x.shape
    oh, ow = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, OH, OW, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * k * k)


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...], k: int) -> np.ndarray:
    """Scatter-add the im2col gradient back to input shape."""
    b, c, h, w = x_shape
    oh, ow = h - k + 1, w - k + 1
    d6 = dcols.reshape(b, oh, ow, c, k, k)
    out = np.zeros(x_shape, dtype=dcols.dtype)
    for di in range(k):
        for dj in range(k):
            out[:, :, di:di + oh, dj:dj + ow] += d6[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return out


class ClassifierModel:
    """Parameter container plus forward/backward and Adam state."""

    def __init__(self, seed: int = 0, dtype: type | np.dtype = np.float32):
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        fan_in = {"conv1": 1 * 9, "conv2": 32 * 9, "fc1": 9216, "fc2": 128}
        self.params: dict[str, np.ndarray] = {}
        for name in PARAM_ORDER:
            bound = 1.0 / np.sqrt(fan_in[name.rsplit("_", 1)[0]])
            self.params[name] = rng.uniform(
                -bound, bound, PARAM_SHAPES[name]).astype(self.dtype)
        self.adam_m = {k: np.zeros(PARAM_SHAPES[k], dtype=self.dtype) for k in PARAM_ORDER}
        self.adam_v = {k: np.zeros(PARAM_SHAPES[k], dtype=self.dtype) for k in PARAM_ORDER}
        self.adam_t = 0

    # --- forward/backward -----------------------------------------------

    def _prep_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[:, None, :, :]
        if x.ndim != 4 or x.shape[1:] != (1, 28, 28):
            raise ValueError(
                f"conv1 expected input of shape (B, 1, 28, 28), got {x.shape}")
        return x

    def _forward(self, x: np.ndarray, rng: np.random.Generator | None):
        p = self.params
        b = x.shape[0]
        cols1 = _im2col(x, 3)                                   # (B*676, 9)
        z1 = cols1 @ p["conv1_w"].reshape(32, 9).T + p["conv1_b"]
        z1 = z1.reshape(b, 26, 26, 32).transpose(0, 3, 1, 2)
        a1 = np.maximum(z1, 0)
        cols2 = _im2col(a1, 3)                                  # (B*576, 288)
        z2 = cols2 @ p["conv2_w"].reshape(64, 288).T + p["conv2_b"]
        z2 = z2.reshape(b, 24, 24, 64).transpose(0, 3, 1, 2)
        a2 = np.maximum(z2, 0)
        win = a2.reshape(b, 64, 12, 2, 12, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(b, 64, 12, 12, 4)
        pool_idx = win.argmax(axis=4)
        pooled = np.take_along_axis(win, pool_idx[..., None], axis=4)[..., 0]
        if rng is not None:
            mask1 = rng.random(pooled.shape) >= DROP1
            h1 = pooled * mask1 / (1.0 - DROP1)
        else:
            mask1 = None
            h1 = pooled
        flat = h1.reshape(b, 9216)
        if flat.shape[1] != self.params["fc1_w"].shape[0]:
            raise ValueError(
                f"fc1 expected {self.params['fc1_w'].shape[0]} features, got {flat.shape[1]}")
        z3 = flat @ p["fc1_w"] + p["fc1_b"]
        a3 = np.maximum(z3, 0)
        if rng is not None:
            mask2 = rng.random(a3.shape) >= DROP2
            h2 = a3 * mask2 / (1.0 - DROP2)
        else:
            mask2 = None
            h2 = a3
        z4 = h2 @ p["fc2_w"] + p["fc2_b"]
        zmax = z4.max(axis=1, keepdims=True)
        logp = z4 - zmax - np.log(np.exp(z4 - zmax).sum(axis=1, keepdims=True))
        cache = (x, cols1, z1, a1, cols2, z2, pool_idx, mask1, flat, z3, mask2, h2)
        return logp, cache

    def forward(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Log-probabilities, shape (B, 10). Pass rng to enable dropout."""
        logp, _ = self._forward(self._prep_input(x), rng)
        return logp

    def loss_and_grads(
        self, x: np.ndarray, labels: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean NLL over the batch and gradients for every parameter."""
        x = self._prep_input(x)
        y = np.asarray(labels, dtype=np.int64)
        if y.shape != (x.shape[0],):
            raise ValueError(f"labels must be ({x.shape[0]},), got {y.shape}")
        p = self.params
        b = x.shape[0]
        logp, cache = self._forward(x, rng)
        (x, cols1, z1, a1, cols2, z2, pool_idx, mask1, flat, z3, mask2, h2) = cache
        loss = float(-logp[np.arange(b), y].mean())

        dz4 = np.exp(logp)
        dz4[np.arange(b), y] -= 1.0
        dz4 /= b                                                # (B, 10)
        grads = {
            "fc2_w": h2.T @ dz4,
            "fc2_b": dz4.sum(axis=0),
        }
        dh2 = dz4 @ p["fc2_w"].T
        da3 = dh2 * mask2 / (1.0 - DROP2) if mask2 is not None else dh2
        dz3 = da3 * (z3 > 0)
        grads["fc1_w"] = flat.T @ dz3
        grads["fc1_b"] = dz3.sum(axis=0)
        dflat = dz3 @ p["fc1_w"].T
        dh1 = dflat.reshape(b, 64, 12, 12)
        dpooled = dh1 * mask1 / (1.0 - DROP1) if mask1 is not None else dh1
        dwin = np.zeros((b, 64, 12, 12, 4), dtype=self.dtype)
        np.put_along_axis(dwin, pool_idx[..., None], dpooled[..., None], axis=4)
        da2 = dwin.reshape(b, 64, 12, 12, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        da2 = da2.reshape(b, 64, 24, 24)
        dz2 = da2 * (z2 > 0)
        dz2_cols = dz2.transpose(0, 2, 3, 1).reshape(b * 576, 64)
        grads["conv2_w"] = (dz2_cols.T @ cols2).reshape(64, 32, 3, 3)
        grads["conv2_b"] = dz2_cols.sum(axis=0)
        dcols2 = dz2_cols @ p["conv2_w"].reshape(64, 288)
        da1 = _col2im(dcols2, (b, 32, 26, 26), 3)
        dz1 = da1 * (z1 > 0)
        dz1_cols = dz1.transpose(0, 2, 3, 1).reshape(b * 676, 32)
        grads["conv1_w"] = (dz1_cols.T @ cols1).reshape(32, 1, 3, 3)
        grads["conv1_b"] = dz1_cols.sum(axis=0)
        return loss, grads

    def adam_step(self, grads: dict[str, np.ndarray], cfg: TrainConfig) -> None:
        self.adam_t += 1
        b1c = 1.0 - cfg.beta1 ** self.adam_t
        b2c = 1.0 - cfg.beta2 ** self.adam_t
        for name in PARAM_ORDER:
            g = grads[name]
            m = self.adam_m[name]
            v = self.adam_v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            self.params[name] -= (
                cfg.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)
            ).astype(self.dtype)


def evaluate(model: ClassifierModel, ds: Dataset, batch_size: int = 200) -> float:
    """Fraction of argmax matches over the dataset; dropout disabled."""
    if len(ds) == 0:
        return 0.0
    hits = 0
    for start in range(0, len(ds), batch_size):
        xb = ds.pixels[start:start + batch_size]
        logp = model.forward(xb, rng=None)
        hits += int((logp.argmax(axis=1) == ds.labels[start:start + batch_size]).sum())
    return hits / len(ds)


def train(
    model: ClassifierModel,
    train_ds: Dataset,
    cfg: TrainConfig,
    preprocess: TopologizeConfig | None = None,
    test_ds: Dataset | None = None,
    threshold: float = 0.5,
    workers: int | None = None,
) -> tuple[EpochMetrics, ...]:
    """Adam training loop, optionally behind a topologization layer.

    With `preprocess` set, every image passes through the same
    topologization once before epoch 1 — training and test images alike, as
    with any preprocessing layer ahead of the classifier. Returns one
    EpochMetrics per epoch (test_accuracy is NaN when no test set is
    supplied). Deterministic in (model seed, cfg.seed, inputs).
    """
    if len(train_ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    pixels = train_ds.pixels
    if preprocess is not None:
        pixels, _ = topologize_batch(pixels, preprocess, threshold=threshold,
                                     workers=workers, frame=train_ds.frame)
        if test_ds is not None:
            tpix, _ = topologize_batch(test_ds.pixels, preprocess,
                                       threshold=threshold, workers=workers,
                                       frame=test_ds.frame)
            test_ds = Dataset(tpix, test_ds.labels, f"{test_ds.name}-topologized")
    labels = train_ds.labels
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(train_ds))
        losses = []
        for start in range(0, len(train_ds), cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(pixels[sel], labels[sel], rng)
            model.adam_step(grads, cfg)
            losses.append(loss)
        acc = evaluate(model, test_ds) if test_ds is not None else float("nan")
        history.append(EpochMetrics(epoch, float(np.mean(losses)), acc))
    return tuple(history)


# --- checkpoints ---------------------------------------------------------

def save_checkpoint(model: ClassifierModel, path: str | Path) -> None:
    """Flat binary: magic, version, count, per-array (ndim, dims), f32 LE data."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(PARAM_ORDER)))
        for name in PARAM_ORDER:
            shape = model.params[name].shape
            fh.write(struct.pack("<I", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
        for name in PARAM_ORDER:
            fh.write(np.ascontiguousarray(
                model.params[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path, dtype: type | np.dtype = np.float32) -> ClassifierModel:
    """Rebuild a model from save_checkpoint output (Adam state reset)."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a model checkpoint (bad magic)")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version} in {path}")
        if count != len(PARAM_ORDER):
            raise ValueError(
                f"checkpoint {path} has {count} arrays, expected {len(PARAM_ORDER)}")
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
        model = ClassifierModel(seed=0, dtype=dtype)
        for name, shape in zip(PARAM_ORDER, shapes):
            if shape != PARAM_SHAPES[name]:
                raise ValueError(
                    f"checkpoint {path}: array {name} has shape {shape}, "
                    f"expected {PARAM_SHAPES[name]}")
            raw = fh.read(4 * int(np.prod(shape)))
            if len(raw) != 4 * int(np.prod(shape)):
                raise ValueError(f"checkpoint {path} is truncated in array {name}")
            model.params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(model.dtype)
    return model
