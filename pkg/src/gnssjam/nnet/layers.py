"""Array kernels for the residual encoder.

Activations use NHWC layout: ``(batch, freq, time, channels)``. Every
``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes that cache.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad_amounts(size, k, stride):
    # "same"-style padding: output = ceil(size / stride)
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def _time_index(wd, pw0, pw1):
    # circular padding along time: padded column p reads column (p - pw0) mod wd
    return (np.arange(wd + pw0 + pw1) - pw0) % wd


def conv2d_forward(x, w, b, scale, stride=(1, 1)):
    """3x3 (or 1x1) convolution followed by a fixed per-channel scale.

    ``w`` has shape ``(kh, kw, cin, cout)``; ``y = scale * conv(x, w) + b``.
    Frequency edges are zero padded, the time axis wraps around, so an input
    that is constant in time stays constant in time.
    """
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    sh, sw = stride
    ho, ph0, ph1 = _pad_amounts(h, kh, sh)
    wo, pw0, pw1 = _pad_amounts(wd, kw, sw)
    xp = x[:, :, _time_index(wd, pw0, pw1)] if (pw0 or pw1) else x
    if ph0 or ph1:
        xp = np.pad(xp, ((0, 0), (ph0, ph1), (0, 0), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw][:, :ho, :wo]
    # win: (n, ho, wo, cin, kh, kw) -> cols (n*ho*wo, kh*kw*cin)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * cin)
    wmat = w.reshape(kh * kw * cin, cout)
    z = cols @ wmat
    out = (z * scale + b).reshape(n, ho, wo, cout)
    cache = (x.shape, xp.shape, (ph0, pw0), stride, cols, w, scale)
    return out, cache


def conv2d_backward(dout, cache, need_dx=True):
    xshape, xpshape, (ph0, pw0), (sh, sw), cols, w, scale = cache
    n, h, wd, cin = xshape
    kh, kw, _, cout = w.shape
    _, ho, wo, _ = dout.shape
    d2 = dout.reshape(-1, cout)
    db = d2.sum(axis=0)
    dz = d2 * scale
    dw = (cols.T @ dz).reshape(w.shape)
    if not need_dx:
        return None, dw, db
    if (sh, sw) == (1, 1) and kh % 2 and kw % 2:
        # stride-1 odd kernel: input gradient is a "same" convolution with the flipped kernel
        wt = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
        dx, _ = conv2d_forward(dz.reshape(n, ho, wo, cout), wt, 0.0, 1.0)
        return dx, dw, db
    dcols = (dz @ w.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros(xpshape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :] += dcols[:, :, :, i, j, :]
    dxp = dxp[:, ph0:ph0 + h]
    if dxp.shape[2] == wd:
        return dxp, dw, db
    dx = np.zeros(xshape, dtype=dout.dtype)
    np.add.at(dx, (slice(None), slice(None), _time_index(wd, pw0, dxp.shape[2] - wd - pw0)), dxp)
    return dx, dw, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def avgpool_freq_forward(x, factor):
    """Average-pool the frequency axis by an integer factor."""
    if factor == 1:
        return x, (x.shape, 1)
    n, h, wd, c = x.shape
    if h % factor:
        raise ValueError(f"frequency size {h} not divisible by pool factor {factor}")
    out = x.reshape(n, h // factor, factor, wd, c).mean(axis=2)
    return out, (x.shape, factor)


def avgpool_freq_backward(dout, cache):
    shape, factor = cache
    if factor == 1:
        return dout
    return np.repeat(dout, factor, axis=1) / factor


def global_avgpool_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def global_avgpool_backward(dout, shape):
    n, h, wd, c = shape
    return np.broadcast_to(dout[:, None, None, :] / (h * wd), shape).copy()


def linear_forward(x, w, b):
    return x @ w + b, x


def linear_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
