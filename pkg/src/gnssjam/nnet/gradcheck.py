"""Central finite-difference verification of :func:`loss_and_grad`."""

from dataclasses import dataclass

import numpy as np

from .model import forward, loss, loss_and_grad


@dataclass
class GradCheckResult:
    names: list
    indices: list
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    skipped_kinks: int

    @property
    def max_rel_error(self):
        return float(self.rel_error.max()) if self.rel_error.size else 0.0


def _loss_and_masks(params, batch, labels):
    caches = {}
    out = forward(params, batch, caches)
    masks = [v for k, v in caches.items() if k.endswith("relu") or ".relu" in k]
    return loss(params, out, labels).total, masks


def rel_error(a, b, floor=1e-7):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(params, batch, labels, n_params=200, h=1e-4, seed=0, max_tries=20):
    """Compare analytic gradients with central differences on sampled entries.

    Parameters are sampled evenly across every weight array so each layer
    type is covered, without repeating an entry. An entry whose +h / -h evaluations land on different
    ReLU activation patterns is not differentiable over the stencil; it is
    counted in ``skipped_kinks`` and replaced by a fresh sample.
    """
    params = params.astype(np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    _, grads = loss_and_grad(params, batch, labels)
    rng = np.random.default_rng(seed)
    keys = list(params.weights)
    names, idxs, an, nu = [], [], [], []
    skipped = 0
    per_key = -(-n_params // len(keys))
    orders = {k: list(rng.permutation(params.weights[k].size)[: per_key * max_tries]) for k in keys}

    def sample(key, quota):
        nonlocal skipped
        w = params.weights[key]
        got = 0
        while got < quota and orders[key]:
            i = tuple(int(v) for v in np.unravel_index(orders[key].pop(0), w.shape))
            old = w[i]
            w[i] = old + h
            lp, mp = _loss_and_masks(params, batch, labels)
            w[i] = old - h
            lm, mm = _loss_and_masks(params, batch, labels)
            w[i] = old
            if any(not np.array_equal(a, b) for a, b in zip(mp, mm)):
                skipped += 1
                continue
            names.append(key)
            idxs.append(i)
            an.append(grads[key][i])
            nu.append((lp - lm) / (2 * h))
            got += 1

    for key in keys:
        sample(key, per_key)
    # small arrays (biases) run out early; top up from the larger ones
    for key in sorted(keys, key=lambda k: -params.weights[k].size):
        if len(names) >= n_params:
            break
        sample(key, n_params - len(names))
    an = np.array(an)
    nu = np.array(nu)
    return GradCheckResult(names, idxs, an, nu, rel_error(an, nu), skipped)
