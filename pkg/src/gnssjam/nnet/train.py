"""Mini-batch SGD with a multi-step learning-rate schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import CLASSIFICATION, REGRESSION, MissingLabel, calibrate_scales, init_params, loss_outputs_and_grad

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.0005
    epochs: int = 30
    lr_milestones: list | None = None  # None -> [epochs // 2, 3 * epochs // 4]
    lr_gamma: float = 0.1
    batch_size: int = 32
    seed: int = 0
    dtype: str = "float32"
    warmup_size: int = 64

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")
        ms = self.milestones()
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("lr milestones must be strictly increasing")

    def milestones(self):
        if self.lr_milestones is None:
            ms = [self.epochs // 2, (3 * self.epochs) // 4]
            # tiny runs can collapse both milestones onto one epoch
            return sorted(set(ms))
        return list(self.lr_milestones)

    def to_dict(self):
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "lr_milestones": self.lr_milestones,
            "lr_gamma": self.lr_gamma,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "dtype": self.dtype,
            "warmup_size": self.warmup_size,
        }


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    drops = sum(1 for m in cfg.milestones() if epoch >= m)
    return cfg.lr * cfg.lr_gamma ** drops


@dataclass
class TrainTrace:
    loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)  # first classification head, % on the training pass


def _target_stats(heads, labels):
    stats = {}
    for h in heads:
        if h.kind != REGRESSION:
            continue
        t = np.asarray(labels[h.task_id], dtype=np.float64)
        t = t[~np.isnan(t)]
        if t.size == 0:
            stats[h.task_id] = (0.0, 1.0)
            continue
        sd = float(t.std())
        stats[h.task_id] = (float(t.mean()), sd if sd > 0 else 1.0)
    return stats


def train(data, labels, heads, cfg: TrainConfig, init_seed=None, arch=None, verbose=False):
    """Train a fresh network.

    ``data`` is an ``(n, 1024, n_t)`` array of normalised spectrograms and
    ``labels`` maps each head's task id to a length-``n`` target array.
    Parameters are initialised from ``init_seed`` (default ``cfg.seed``);
    the mini-batch order always comes from ``cfg.seed``.
    """
    x = np.asarray(data)
    n = len(x)
    if n == 0:
        raise EmptyDataset("training set is empty")
    for h in heads:
        if h.task_id not in labels:
            raise MissingLabel(h.task_id)
        if len(labels[h.task_id]) != n:
            raise ValueError(f"label length mismatch for {h.task_id}")
    dtype = np.dtype(cfg.dtype)
    x = x.astype(dtype, copy=False)
    labels = {k: np.asarray(v) for k, v in labels.items()}
    params = init_params(heads, arch=arch, seed=cfg.seed if init_seed is None else init_seed, dtype=dtype)
    params.target_stats = _target_stats(heads, labels)

    order_rng = np.random.default_rng(cfg.seed)
    warm = order_rng.permutation(n)[: cfg.warmup_size]
    calibrate_scales(params, x[np.sort(warm)])

    first_cls = next((h.task_id for h in heads if h.kind == CLASSIFICATION), None)
    trace = TrainTrace()
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        perm = order_rng.permutation(n)
        total, correct, counted = 0.0, 0, 0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(perm[start:start + cfg.batch_size])
            batch_labels = {k: v[idx] for k, v in labels.items()}
            breakdown, outputs, grads = loss_outputs_and_grad(params, x[idx], batch_labels)
            for k, w in params.weights.items():
                g = grads[k]
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * w
                w -= (lr * g).astype(dtype, copy=False)
            total += breakdown.total * len(idx)
            if first_cls is not None:
                t = batch_labels[first_cls]
                correct += int((outputs[first_cls].argmax(axis=1) == t).sum())  # masked -1 never matches
                counted += int((t >= 0).sum())
        trace.loss.append(total / n)
        trace.lr.append(lr)
        trace.accuracy.append(100.0 * correct / counted if counted else float("nan"))
        if verbose:
            log.info("epoch %d lr %.4g loss %.4f acc %.2f", epoch, lr, trace.loss[-1], trace.accuracy[-1])
    return params, trace
