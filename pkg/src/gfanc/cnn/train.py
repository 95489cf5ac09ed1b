"""Mini-batch Adam training with best-validation snapshots."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from gfanc.cnn.model import CnnModel, bce_grad_logits, bce_loss, predict_proba, preprocess_batch
from gfanc.dataset import load_split
from gfanc.errors import GfancError, InvalidArgument

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgument("lr must be positive")
        if self.batch < 1:
            raise InvalidArgument("batch must be >= 1")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_bit_accuracy: float
    val_exact_match: float


class Adam:
    def __init__(self, model: CnnModel, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {key: np.zeros_like(v) for key, _, _, v in model.named_params()}
        self.v = {key: np.zeros_like(v) for key, _, _, v in model.named_params()}
        self.t = 0

    def step(self, model: CnnModel) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for key, leaf, name, value in model.named_params():
            g = leaf.grads[name]
            m, v = self.m[key], self.v[key]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            value -= (c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)).astype(value.dtype)


def evaluate(model: CnnModel, X, T, threshold: float = 0.5) -> tuple[float, float, float]:
    """(BCE loss, per-label accuracy, exact-match rate) on preprocessed-on-the-fly frames."""
    p = predict_proba(model, X)
    pred = p >= threshold
    truth = T >= 0.5
    return bce_loss(p, T), float(np.mean(pred == truth)), float(np.mean(np.all(pred == truth, axis=1)))


def fit(model: CnnModel, X, T, Xv, Tv, cfg: TrainConfig = TrainConfig(), on_epoch=None):
    """Train in place; returns (best-by-validation model copy, per-epoch metrics)."""
    X = preprocess_batch(np.asarray(X, dtype=np.float32))
    T = np.asarray(T, dtype=np.float32)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model, cfg)
    history: list[EpochMetrics] = []
    best, best_key = copy.deepcopy(model), None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(X))
        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch):
            idx = order[start : start + cfg.batch]
            p = model.forward(X[idx], train=True)
            loss = bce_loss(p, T[idx])
            if not np.isfinite(loss):
                raise GfancError(f"non-finite loss at epoch {epoch}, batch starting {start}; lr={cfg.lr}")
            model.backward(bce_grad_logits(p, T[idx]))
            opt.step(model)
            total += loss * len(idx)
            seen += len(idx)
        val_loss, bit_acc, exact = evaluate(model, Xv, Tv, cfg.threshold) if len(Xv) else (float("nan"), 0.0, 0.0)
        m = EpochMetrics(epoch, total / seen, val_loss, bit_acc, exact)
        history.append(m)
        log.info("epoch %d loss %.4f val_acc %.4f exact %.4f", epoch, m.train_loss, bit_acc, exact)
        if on_epoch is not None:
            on_epoch(m)
        key = (bit_acc, exact, -val_loss)
        if best_key is None or key > best_key:
            best, best_key = copy.deepcopy(model), key
    return best, history


def train(model: CnnModel, manifest: dict, cfg: TrainConfig = TrainConfig(), on_epoch=None):
    X, T = load_split(manifest, "train")
    Xv, Tv = load_split(manifest, "val")
    if len(X) == 0:
        raise InvalidArgument("manifest has no training tracks")
    return fit(model, X, T, Xv, Tv, cfg, on_epoch)
