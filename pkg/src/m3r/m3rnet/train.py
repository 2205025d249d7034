"""AdamW training with linear warmup and cosine annealing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..aligner import HALF_WINDOW, DatasetSplit, EventSequence, dequantize
from ..errors import EmptyDataset, ShapeMismatch
from ..stationproc import VARIABLES
from .config import ModelConfig
from .model import Batch, ModelParams, backward, forward, forward_train, init_params

log = logging.getLogger(__name__)


@dataclass
class Hyper:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    warmup_epochs: int = 20
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, sequences: list[EventSequence], t_in: int = HALF_WINDOW) -> "Standardizer":
        rows = np.concatenate([np.asarray(s.pws_rows[:t_in], dtype=np.float64) for s in sequences])
        mean = np.nanmean(rows, axis=0)
        std = np.nanstd(rows, axis=0)
        mean = np.where(np.isfinite(mean), mean, 0.0)
        std = np.where(np.isfinite(std) & (std > 0), std, 1.0)
        return cls(mean.astype(np.float32), std.astype(np.float32))

    @classmethod
    def identity(cls, d: int = len(VARIABLES)) -> "Standardizer":
        return cls(np.zeros(d, np.float32), np.ones(d, np.float32))

    def apply(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.std
        return np.where(np.isnan(z), 0.0, z)

    def invert(self, z: np.ndarray, column: int) -> np.ndarray:
        return z * self.std[column] + self.mean[column]


def make_batch(sequences: list[EventSequence], stats: Standardizer, t_in: int = HALF_WINDOW, dtype=np.float32) -> Batch:
    """First ``t_in`` frames/rows as inputs, the following ``t_in`` targets as labels."""
    if not sequences:
        raise EmptyDataset("no sequences to batch")
    if 2 * t_in > len(sequences[0].target):
        raise ShapeMismatch(f"sequences have {len(sequences[0].target)} frames, need {2 * t_in}")
    codes = np.stack([s.frames[:t_in] for s in sequences])
    radar, _ = dequantize(codes)
    met = stats.apply(np.stack([np.asarray(s.pws_rows[:t_in], np.float64) for s in sequences]))
    target = np.stack([np.asarray(s.target[t_in : 2 * t_in], np.float64) for s in sequences])
    return Batch(radar[..., None].astype(dtype), met.astype(dtype), target.astype(dtype))


def lr_at(epoch: float, hyper: Hyper) -> float:
    """Learning rate at a (fractional) epoch: linear warmup, then cosine down to 0 at ``hyper.epochs``."""
    if epoch < hyper.warmup_epochs:
        return hyper.lr * epoch / hyper.warmup_epochs
    span = hyper.epochs - hyper.warmup_epochs
    if span <= 0:
        return hyper.lr
    frac = min(1.0, (epoch - hyper.warmup_epochs) / span)
    return hyper.lr * 0.5 * (1.0 + math.cos(math.pi * frac))


class AdamW:
    def __init__(self, params: ModelParams, hyper: Hyper):
        self.params = params
        self.h = hyper
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        h = self.h
        self.t += 1
        bc1 = 1.0 - h.beta1**self.t
        bc2 = 1.0 - h.beta2**self.t
        for k, p in self.params.arrays.items():
            g = self.params.grads[k]
            m, v = self.m[k], self.v[k]
            m *= h.beta1
            m += (1.0 - h.beta1) * g
            v *= h.beta2
            v += (1.0 - h.beta2) * g * g
            p *= 1.0 - lr * h.weight_decay
            p -= (lr / bc1) * m / (np.sqrt(v / bc2) + h.eps)


@dataclass
class TrainResult:
    params: ModelParams
    stats: Standardizer
    history: list[float] = field(default_factory=list)


def train(
    dataset: DatasetSplit | list[EventSequence],
    config: ModelConfig,
    hyper: Hyper | None = None,
    dtype=np.float32,
) -> TrainResult:
    hyper = hyper or Hyper()
    seqs = dataset.train if isinstance(dataset, DatasetSplit) else list(dataset)
    if not seqs:
        raise EmptyDataset("training split is empty")
    stats = Standardizer.fit(seqs, config.T_in)
    data = make_batch(seqs, stats, config.T_in, dtype)
    params = init_params(config, hyper.seed, dtype)
    # start the head at the mean target so early steps fit shape, not offset
    params.arrays["b_out"][0] = np.mean(data.target)
    opt = AdamW(params, hyper)
    rng = np.random.default_rng(hyper.seed)
    n = len(data)
    n_batches = math.ceil(n / hyper.batch_size)
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b in range(n_batches):
            idx = order[b * hyper.batch_size : (b + 1) * hyper.batch_size]
            batch = data.subset(idx)
            pred, cache = forward_train(batch, params)
            e = pred - batch.target
            total += float(np.sum(e.astype(np.float64) ** 2))
            backward(cache, params)
            opt.step(lr_at(epoch + (b + 1) / n_batches, hyper))
        history.append(total / (n * config.horizon))
        log.info("epoch %d/%d loss %.5f", epoch + 1, hyper.epochs, history[-1])
    return TrainResult(params, stats, history)


def predict(params: ModelParams, sequences: list[EventSequence], stats: Standardizer, chunk: int = 256) -> np.ndarray:
    batch = make_batch(sequences, stats, params.config.T_in, params.dtype)
    return np.concatenate([forward(batch.subset(slice(i, i + chunk)), params) for i in range(0, len(batch), chunk)])
