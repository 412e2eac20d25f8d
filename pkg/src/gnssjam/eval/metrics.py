"""Classification and regression scores."""

import numpy as np


class LengthMismatch(ValueError):
    pass


class Empty(ValueError):
    pass


def _check(preds, truths):
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    if preds.shape != truths.shape:
        raise LengthMismatch(f"{preds.shape} vs {truths.shape}")
    if preds.size == 0:
        raise Empty("no samples")
    return preds, truths


def accuracy(preds, truths) -> float:
    """Percentage of exact matches."""
    preds, truths = _check(preds, truths)
    return 100.0 * np.count_nonzero(preds == truths) / preds.size


def confusion_matrix(preds, truths, n_classes) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    preds, truths = _check(preds, truths)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truths.astype(np.int64), preds.astype(np.int64)), 1)
    return cm


def f_beta_per_class(preds, truths, n_classes, beta=2.0):
    cm = confusion_matrix(preds, truths, n_classes)
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, pred_pos, out=np.zeros_like(tp), where=pred_pos > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    b2 = beta * beta
    denom = b2 * precision + recall
    f = np.divide((1 + b2) * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return f, actual


def weighted_f2(preds, truths, n_classes) -> float:
    """Support-weighted one-vs-rest F2 = 5PR / (4P + R)."""
    f, support = f_beta_per_class(preds, truths, n_classes, beta=2.0)
    return float(np.dot(f, support) / support.sum())


def mae(preds, truths) -> float:
    preds, truths = _check(np.asarray(preds, dtype=np.float64), np.asarray(truths, dtype=np.float64))
    return float(np.mean(np.abs(preds - truths)))
