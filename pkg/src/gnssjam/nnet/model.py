"""Compact residual CNN with a shared encoder and one linear head per task."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import layers as L


class ShapeMismatch(ValueError):
    pass


class MissingLabel(KeyError):
    pass


CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class TaskHead:
    task_id: str
    kind: str
    n_c: int = 1
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.kind == CLASSIFICATION and self.n_c < 2:
            raise ValueError("classification heads need n_c >= 2")
        if self.kind == REGRESSION and self.n_c != 1:
            raise ValueError("regression heads have n_c = 1")
        # weight 0 marks an inactive head (kept in the graph, contributes no loss)
        if not self.weight >= 0:
            raise ValueError("head weight must be >= 0")


DEFAULT_ARCH = {
    "widths": [16, 32, 64],
    "block_strides": [[1, 1], [2, 2], [2, 2]],
    "input_pool": 4,
    "stem_stride": [2, 1],
    "stem_pool": 2,
    "in_channels": 1,
    "time_diff": True,
    "freq_diff": True,
}


@dataclass
class NetworkParams:
    arch: dict
    weights: dict  # name -> trainable array
    scales: dict  # conv name -> frozen per-channel output scale
    heads: list
    target_stats: dict = field(default_factory=dict)  # regression task -> (mean, std)

    @property
    def embedding_dim(self) -> int:
        return int(self.arch["widths"][-1])

    def head(self, task_id):
        for h in self.heads:
            if h.task_id == task_id:
                return h
        raise KeyError(task_id)

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            arch=dict(self.arch),
            weights={k: v.astype(dtype) for k, v in self.weights.items()},
            scales={k: v.astype(dtype) for k, v in self.scales.items()},
            heads=list(self.heads),
            target_stats=dict(self.target_stats),
        )

    def n_parameters(self) -> int:
        return sum(v.size for v in self.weights.values())


def stem_channels(arch):
    """Channels seen by the stem: the input plus optional difference maps."""
    return arch["in_channels"] * (1 + bool(arch.get("time_diff")) + bool(arch.get("freq_diff")))


def conv_layout(arch):
    """Ordered ``(name, kernel, cin, cout, stride)`` for every convolution."""
    convs = []
    cin = stem_channels(arch)
    widths = arch["widths"]
    convs.append(("stem", 3, cin, widths[0], tuple(arch["stem_stride"])))
    cin = widths[0]
    for i, (w, s) in enumerate(zip(widths, arch["block_strides"])):
        s = tuple(s)
        convs.append((f"b{i}.conv1", 3, cin, w, s))
        convs.append((f"b{i}.conv2", 3, w, w, (1, 1)))
        if cin != w or s != (1, 1):
            convs.append((f"b{i}.proj", 1, cin, w, s))
        cin = w
    return convs


def init_params(heads, arch=None, seed=0, dtype=np.float64) -> NetworkParams:
    """He fan-in initialisation; head weights start at zero."""
    arch = dict(DEFAULT_ARCH if arch is None else arch)
    ids = [h.task_id for h in heads]
    if len(set(ids)) != len(ids):
        raise ValueError("heads must reference disjoint task ids")
    rng = np.random.default_rng(seed)
    weights, scales = {}, {}
    for name, k, cin, cout, _ in conv_layout(arch):
        std = math.sqrt(2.0 / (k * k * cin))
        weights[name + ".w"] = (rng.standard_normal((k, k, cin, cout)) * std).astype(dtype)
        weights[name + ".b"] = np.zeros(cout, dtype=dtype)
        scales[name] = np.ones(cout, dtype=dtype)
    scales["in.shift"] = np.zeros(stem_channels(arch), dtype=dtype)
    scales["in.scale"] = np.ones(stem_channels(arch), dtype=dtype)
    emb = int(arch["widths"][-1])
    scales["emb.shift"] = np.zeros(emb, dtype=dtype)
    scales["emb.scale"] = np.ones(emb, dtype=dtype)
    for h in heads:
        weights[f"head.{h.task_id}.w"] = np.zeros((emb, h.n_c), dtype=dtype)
        weights[f"head.{h.task_id}.b"] = np.zeros(h.n_c, dtype=dtype)
    return NetworkParams(arch=arch, weights=weights, scales=scales, heads=list(heads))


def _as_batch(batch, dtype):
    x = np.asarray(batch, dtype=dtype)
    if x.ndim == 2:
        x = x[None]
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (batch, freq, time) input, got shape {x.shape}")
    return x


def _conv(params, name, x, stride, caches, calibrate):
    w = params.weights[name + ".w"]
    b = params.weights[name + ".b"]
    if calibrate:
        # frozen per-channel standardisation from this warmup batch
        raw, _ = L.conv2d_forward(x, w, np.zeros_like(b), np.ones_like(b), stride)
        mu = raw.mean(axis=(0, 1, 2))
        sd = raw.std(axis=(0, 1, 2))
        sd = np.where(sd > 1e-8, sd, 1.0)
        w /= sd.astype(w.dtype)
        params.scales[name] = np.ones_like(b)
        params.weights[name + ".b"] = (-mu / sd).astype(w.dtype)
        b = params.weights[name + ".b"]
    out, cache = L.conv2d_forward(x, w, b, params.scales[name], stride)
    if caches is not None:
        caches[name] = cache
    return out


def encode(params, batch, caches=None, calibrate=False):
    """Shared encoder: returns the ``(batch, embedding_dim)`` embedding."""
    arch = params.arch
    x = _as_batch(batch, params.weights["stem.w"].dtype)
    if x.shape[-1] != arch["in_channels"]:
        if arch["in_channels"] == 3 and x.shape[-1] == 1:
            x = np.repeat(x, 3, axis=-1)
        else:
            raise ShapeMismatch(f"expected {arch['in_channels']} input channels, got {x.shape[-1]}")
    keep = caches is not None
    maps = [x]
    if arch.get("time_diff"):
        # column-to-column change (circular in time); zero for stationary columns
        maps.append(np.abs(x - np.roll(x, 1, axis=2)))
    if arch.get("freq_diff"):
        # bin-to-bin roughness along frequency
        maps.append(np.abs(np.diff(x, axis=1, prepend=x[:, :1])))
    if len(maps) > 1:
        x = np.concatenate(maps, axis=-1)
    x, c = L.avgpool_freq_forward(x, arch["input_pool"])
    if keep:
        caches["input_pool"] = c
    if calibrate:
        sd = x.reshape(-1, x.shape[-1]).std(axis=0)
        params.scales["in.shift"] = x.reshape(-1, x.shape[-1]).mean(axis=0).astype(x.dtype)
        params.scales["in.scale"] = np.where(sd > 1e-8, 1.0 / np.maximum(sd, 1e-8), 1.0).astype(x.dtype)
    # frozen per-channel standardisation of the input keeps the stem step size data independent
    x = (x - params.scales["in.shift"]) * params.scales["in.scale"]
    x = _conv(params, "stem", x, tuple(arch["stem_stride"]), caches, calibrate)
    x, m = L.relu_forward(x)
    if keep:
        caches["stem.relu"] = m
    x, c = L.avgpool_freq_forward(x, arch["stem_pool"])
    if keep:
        caches["stem_pool"] = c
    cin = arch["widths"][0]
    for i, (w, s) in enumerate(zip(arch["widths"], arch["block_strides"])):
        s = tuple(s)
        h = _conv(params, f"b{i}.conv1", x, s, caches, calibrate)
        h, m1 = L.relu_forward(h)
        h = _conv(params, f"b{i}.conv2", h, (1, 1), caches, calibrate)
        if cin != w or s != (1, 1):
            skip = _conv(params, f"b{i}.proj", x, s, caches, calibrate)
        else:
            skip = x
        x, m2 = L.relu_forward(h + skip)
        if keep:
            caches[f"b{i}.relu1"] = m1
            caches[f"b{i}.relu2"] = m2
        cin = w
    emb, shape = L.global_avgpool_forward(x)
    if keep:
        caches["gap"] = shape
    if calibrate:
        sd = emb.std(axis=0)
        params.scales["emb.shift"] = emb.mean(axis=0).astype(emb.dtype)
        params.scales["emb.scale"] = (1.0 / np.where(sd > 1e-8, sd, 1.0)).astype(emb.dtype)
    # frozen standardisation of the pooled features
    return (emb - params.scales["emb.shift"]) * params.scales["emb.scale"]


def forward(params, batch, caches=None, calibrate=False):
    """Per-head raw outputs: logits ``(n, n_c)`` or standardised scalars ``(n,)``."""
    emb = encode(params, batch, caches, calibrate)
    if caches is not None:
        caches["emb"] = emb
    out = {}
    for h in params.heads:
        z = emb @ params.weights[f"head.{h.task_id}.w"] + params.weights[f"head.{h.task_id}.b"]
        out[h.task_id] = z if h.kind == CLASSIFICATION else z[:, 0]
    return out


def calibrate_scales(params, batch):
    """Warmup statistics pass that fixes every conv's per-channel scale and bias."""
    encode(params, batch, calibrate=True)
    return params


@dataclass
class LossBreakdown:
    total: float
    per_head: dict  # task -> unweighted loss


def loss(params, outputs, labels):
    """Weighted sum of per-head cross-entropy / RMSE terms.

    Classification targets of -1 and regression targets of NaN are masked
    out of their head's average.
    """
    total = 0.0
    per_head = {}
    for h in params.heads:
        if h.task_id not in labels:
            raise MissingLabel(h.task_id)
        value, _ = _head_loss(h, outputs[h.task_id], labels[h.task_id], params)
        per_head[h.task_id] = value
        total += h.weight * value
    return LossBreakdown(total=total, per_head=per_head)


def _standardise(params, h, target):
    mean, std = params.target_stats.get(h.task_id, (0.0, 1.0))
    return (np.asarray(target, dtype=np.float64) - mean) / std


def _head_loss(h, out, target, params):
    """Returns (loss, d loss / d out)."""
    if h.kind == CLASSIFICATION:
        t = np.asarray(target, dtype=np.int64)
        valid = t >= 0
        nv = int(valid.sum())
        grad = np.zeros_like(out)
        if nv == 0:
            return 0.0, grad
        logp = L.log_softmax(out[valid])
        tv = t[valid]
        value = float(-logp[np.arange(nv), tv].mean())
        g = np.exp(logp)
        g[np.arange(nv), tv] -= 1.0
        grad[valid] = g / nv
        return value, grad
    t = _standardise(params, h, target)
    valid = ~np.isnan(t)
    nv = int(valid.sum())
    grad = np.zeros_like(out)
    if nv == 0:
        return 0.0, grad
    diff = out[valid] - t[valid]
    rmse = math.sqrt(float(np.mean(diff * diff)))
    if rmse > 0:
        grad[valid] = diff / (nv * rmse)
    return rmse, grad


def loss_and_grad(params, batch, labels):
    """Exact gradient of the weighted total loss w.r.t. every trainable array."""
    breakdown, _, grads = loss_outputs_and_grad(params, batch, labels)
    return breakdown, grads


def loss_outputs_and_grad(params, batch, labels):
    caches = {}
    outputs = forward(params, batch, caches)
    grads = {k: np.zeros_like(v) for k, v in params.weights.items()}
    emb = caches["emb"]
    demb = np.zeros_like(emb)
    total = 0.0
    per_head = {}
    for h in params.heads:
        if h.task_id not in labels:
            raise MissingLabel(h.task_id)
        value, dout = _head_loss(h, outputs[h.task_id], labels[h.task_id], params)
        per_head[h.task_id] = value
        total += h.weight * value
        dout = (h.weight * dout).astype(emb.dtype)
        if h.kind == REGRESSION:
            dout = dout[:, None]
        w = params.weights[f"head.{h.task_id}.w"]
        de, dw, db = L.linear_backward(dout, emb, w)
        grads[f"head.{h.task_id}.w"] = dw
        grads[f"head.{h.task_id}.b"] = db
        demb += de
    _encoder_backward(params, caches, demb, grads)
    return LossBreakdown(total=total, per_head=per_head), outputs, grads


def _conv_back(caches, grads, name, dout, need_dx=True):
    dx, dw, db = L.conv2d_backward(dout, caches[name], need_dx)
    grads[name + ".w"] = dw
    grads[name + ".b"] = db
    return dx


def _encoder_backward(params, caches, demb, grads):
    arch = params.arch
    dx = L.global_avgpool_backward(demb * params.scales["emb.scale"], caches["gap"])
    n_blocks = len(arch["widths"])
    for i in reversed(range(n_blocks)):
        dsum = L.relu_backward(dx, caches[f"b{i}.relu2"])
        dh = _conv_back(caches, grads, f"b{i}.conv2", dsum)
        dh = L.relu_backward(dh, caches[f"b{i}.relu1"])
        dx = _conv_back(caches, grads, f"b{i}.conv1", dh)
        if f"b{i}.proj" in caches:
            dx = dx + _conv_back(caches, grads, f"b{i}.proj", dsum)
        else:
            dx = dx + dsum
    dx = L.avgpool_freq_backward(dx, caches["stem_pool"])
    dx = L.relu_backward(dx, caches["stem.relu"])
    _conv_back(caches, grads, "stem", dx, need_dx=False)


def backward(params, batch, labels):
    """Gradient dict of the total loss (see :func:`loss_and_grad`)."""
    return loss_and_grad(params, batch, labels)[1]


def predict(params, batch, batch_size=64):
    """Softmax probabilities for classification heads, physical-unit values for regression."""
    x = np.asarray(batch)
    if x.ndim == 2:
        x = x[None]
    chunks = [forward(params, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    result = {}
    for h in params.heads:
        raw = np.concatenate([c[h.task_id] for c in chunks]).astype(np.float64)
        if h.kind == CLASSIFICATION:
            result[h.task_id] = L.softmax(raw)
        else:
            mean, std = params.target_stats.get(h.task_id, (0.0, 1.0))
            result[h.task_id] = raw * std + mean
    return result
