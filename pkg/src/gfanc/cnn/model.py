"""Sequential 1D CNN container, loss, preprocessing and weight files."""

from __future__ import annotations

import io as _io
import json
import zipfile
from pathlib import Path

import numpy as np

from gfanc.adaptive import binarize
from gfanc.cnn.layers import (
    LAYER_TYPES,
    BatchNorm1d,
    Conv1d,
    Dense,
    GlobalAvgPool,
    Layer,
    MaxPool1d,
    ReLU,
    ResBlock,
)
from gfanc.errors import InvalidArgument

WEIGHTS_FORMAT_VERSION = 1
BCE_CLAMP = 1e-7
N_OUT = 15
FRAME_LEN = 16000


class CnnModel:
    def __init__(self, layers: list[Layer], input_len: int = FRAME_LEN):
        self.layers = list(layers)
        self.input_len = int(input_len)
        if self.layers and isinstance(self.layers[0], Conv1d):
            self.layers[0].need_input_grad = False  # raw input needs no gradient

    # parameters -------------------------------------------------------
    def leaves(self) -> list[Layer]:
        return [leaf for layer in self.layers for leaf in layer.sublayers()]

    def named_params(self):
        for i, leaf in enumerate(self.leaves()):
            for name, value in leaf.params.items():
                yield f"{i}.{name}", leaf, name, value

    def named_buffers(self):
        for i, leaf in enumerate(self.leaves()):
            for name, value in leaf.buffers.items():
                yield f"{i}.{name}", leaf, name, value

    @property
    def n_out(self) -> int:
        dense = [leaf for leaf in self.leaves() if isinstance(leaf, Dense)]
        return dense[-1].out_dim

    @property
    def dtype(self):
        return next(v for *_, v in self.named_params()).dtype

    # computation ------------------------------------------------------
    def logits(self, x, train=False) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_len:
            raise InvalidArgument(f"expected input of shape (batch, {self.input_len}), got {x.shape}")
        h = x.astype(self.dtype, copy=False)[:, :, None]
        for layer in self.layers:
            h = layer.forward(h, train)
        return h

    def forward(self, x, train=False) -> np.ndarray:
        return sigmoid(self.logits(x, train))

    def backward(self, dlogits) -> None:
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)

    def gradients(self) -> dict[str, np.ndarray]:
        return {key: leaf.grads[name] for key, leaf, name, _ in self.named_params()}

    # description ------------------------------------------------------
    def descriptor(self) -> dict:
        return {
            "format_version": WEIGHTS_FORMAT_VERSION,
            "input_len": self.input_len,
            "layers": [{"type": layer.kind, **layer.config()} for layer in self.layers],
            "tensors": {key: list(value.shape) for key, _, _, value in self.named_params()},
            "buffers": {key: list(value.shape) for key, _, _, value in self.named_buffers()},
        }


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(p, t) -> float:
    """Mean binary cross entropy per label, probabilities clamped to [1e-7, 1-1e-7]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = np.asarray(t, dtype=np.float64)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))


def bce_grad_logits(p, t) -> np.ndarray:
    """d(batch-mean BCE)/d(logits) for a batch; zero where the clamp is active."""
    p = np.asarray(p)
    grad = (p - t) / p.size
    clamped = (p < BCE_CLAMP) | (p > 1.0 - BCE_CLAMP)
    grad[clamped] = 0.0
    return grad.astype(p.dtype)


def preprocess_minmax(x) -> np.ndarray:
    """x / (max(x) - min(x)); a constant frame maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    span = x.max() - x.min()
    if span == 0.0:
        return np.zeros_like(x)
    return x / span


def preprocess_batch(X) -> np.ndarray:
    X = np.asarray(X)
    span = X.max(axis=1, keepdims=True) - X.min(axis=1, keepdims=True)
    safe = np.where(span == 0, 1, span)
    return np.where(span == 0, 0, X / safe).astype(X.dtype)


def forward(model: CnnModel, x_hat, mode: str = "eval") -> np.ndarray:
    if mode not in ("train", "eval"):
        raise InvalidArgument("mode must be 'train' or 'eval'")
    return model.forward(x_hat, train=mode == "train")


def backward(model: CnnModel, x_hat, t) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean BCE with respect to every parameter."""
    p = model.forward(x_hat, train=True)
    t = np.asarray(t, dtype=p.dtype).reshape(p.shape)
    model.backward(bce_grad_logits(p, t))
    return model.gradients()


def predict_proba(model: CnnModel, frames, batch: int = 64) -> np.ndarray:
    frames = np.atleast_2d(np.asarray(frames))
    out = [model.forward(preprocess_batch(frames[i : i + batch]), train=False) for i in range(0, len(frames), batch)]
    return np.concatenate(out, axis=0)


def predict_weights(model: CnnModel, frame) -> np.ndarray:
    x_hat = preprocess_minmax(np.asarray(getattr(frame, "samples", frame)))
    return binarize(model.forward(x_hat, train=False)[0])


def param_count(model: CnnModel) -> int:
    return int(sum(value.size for *_, value in model.named_params()))


def build_default(seed: int = 0, n_out: int = N_OUT, input_len: int = FRAME_LEN, dtype=np.float32) -> CnnModel:
    """Broad strided first convolution, two residual blocks, sigmoid head."""
    rng = np.random.default_rng(seed)
    return CnnModel(
        [
            Conv1d(1, 16, 31, stride=8, padding=15, rng=rng, dtype=dtype),
            BatchNorm1d(16, dtype),
            ReLU(),
            MaxPool1d(4),
            ResBlock(16, 32, 3, 2, rng, dtype),
            ResBlock(32, 64, 3, 2, rng, dtype),
            GlobalAvgPool(),
            Dense(64, n_out, rng, dtype),
        ],
        input_len,
    )


def _build_layer(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("type")
    if kind not in LAYER_TYPES:
        raise InvalidArgument(f"unknown layer type {kind!r}")
    return LAYER_TYPES[kind](**cfg)


def save_model(model: CnnModel, path) -> None:
    """Weight file: a zip container with ``descriptor.json`` and little-endian float32 tensors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"descriptor.json": np.frombuffer(json.dumps(model.descriptor(), sort_keys=True).encode(), dtype=np.uint8)}
    for key, _, _, value in model.named_params():
        arrays[f"param/{key}"] = value.astype("<f4")
    for key, _, _, value in model.named_buffers():
        arrays[f"buffer/{key}"] = value.astype("<f4")
    # fixed timestamps keep the file byte-identical across runs
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = _io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_model(path) -> CnnModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"weights not found: {path}")
    with np.load(path) as data:
        desc = json.loads(data["descriptor.json"].tobytes().decode())
        if desc.get("format_version") != WEIGHTS_FORMAT_VERSION:
            raise InvalidArgument(f"unsupported weights format {desc.get('format_version')}")
        model = CnnModel([_build_layer(c) for c in desc["layers"]], desc["input_len"])
        for key, leaf, name, value in model.named_params():
            stored = data[f"param/{key}"]
            if stored.shape != value.shape:
                raise InvalidArgument(f"tensor {key} has shape {stored.shape}, expected {value.shape}")
            leaf.params[name] = stored.astype(np.float32)
        for key, leaf, name, value in model.named_buffers():
            leaf.buffers[name] = data[f"buffer/{key}"].astype(np.float32)
    return model
