"""Deep ensembles and the softmax-variability uncertainty decomposition.

For member softmax vectors ``p_m`` with mean ``p``::

    aleatoric = mean_m(diag(p_m) - p_m p_m^T)
    epistemic = mean_m((p_m - p)(p_m - p)^T)

and the two sum to ``diag(p) - p p^T``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .nnet import CLASSIFICATION, TrainConfig, predict, train


class EmptyEnsemble(ValueError):
    pass


@dataclass
class EnsemblePrediction:
    probs: np.ndarray  # (M, C)
    member_seeds: list

    def __post_init__(self):
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        if self.probs.shape[0] == 0:
            raise EmptyEnsemble("ensemble has no members")
        if np.any(self.probs < 0) or np.any(self.probs > 1) or not np.allclose(self.probs.sum(axis=1), 1, atol=1e-9):
            raise ValueError("each member row must be a probability vector")

    @property
    def mean_probs(self):
        return self.probs.mean(axis=0)

    @property
    def prediction(self):
        # np.argmax returns the first maximum: ties go to the lowest class index
        return int(np.argmax(self.mean_probs))


@dataclass
class UncertaintyReport:
    mean_probs: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray

    @property
    def per_class_aleatoric(self):
        return np.diagonal(self.aleatoric, axis1=-2, axis2=-1)

    @property
    def per_class_epistemic(self):
        return np.diagonal(self.epistemic, axis1=-2, axis2=-1)

    @property
    def total(self):
        return self.aleatoric + self.epistemic


def decompose_probs(probs) -> UncertaintyReport:
    """Decomposition on ``(..., M, C)`` member probabilities (batched)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.shape[-2] == 0:
        raise EmptyEnsemble("ensemble has no members")
    m = p.shape[-2]
    mean = p.mean(axis=-2)
    outer = np.einsum("...mi,...mj->...ij", p, p) / m
    diag = np.einsum("...i,ij->...ij", p.mean(axis=-2), np.eye(p.shape[-1]))
    aleatoric = diag - outer
    dev = p - mean[..., None, :]
    epistemic = np.einsum("...mi,...mj->...ij", dev, dev) / m
    return UncertaintyReport(mean, aleatoric, epistemic)


def decompose(ens: EnsemblePrediction) -> UncertaintyReport:
    return decompose_probs(ens.probs)


# ---------------------------------------------------------------- ensembles

def member_seeds(base_seed: int, m: int):
    return [int(base_seed) + i for i in range(m)]


def _train_member(args):
    data, labels, heads, cfg, seed, arch = args
    return train(data, labels, heads, cfg, init_seed=seed, arch=arch)[0]


def train_ensemble(data, labels, heads, cfg: TrainConfig, m: int = 10, seeds=None, arch=None, jobs: int = 1):
    """Train ``m`` members that differ only in their initialisation seed.

    Every member sees the same mini-batch order (drawn from ``cfg.seed``);
    seeds default to ``cfg.seed, cfg.seed + 1, ...``. Members come back in
    seed order.
    """
    if m < 1:
        raise EmptyEnsemble("m must be >= 1")
    seeds = member_seeds(cfg.seed, m) if seeds is None else list(seeds)
    tasks = [(data, labels, heads, cfg, s, arch) for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_train_member, tasks))
    return [_train_member(t) for t in tasks]


@dataclass
class EnsembleBatch:
    probs: np.ndarray  # (N, M, C)
    member_seeds: list

    @property
    def mean_probs(self):
        return self.probs.mean(axis=1)

    @property
    def predictions(self):
        return np.argmax(self.mean_probs, axis=1)

    def sample(self, i) -> EnsemblePrediction:
        return EnsemblePrediction(self.probs[i], self.member_seeds)

    def report(self) -> UncertaintyReport:
        return decompose_probs(self.probs)


def ensemble_predict(members, batch, task_id, seeds=None) -> EnsembleBatch:
    if not members:
        raise EmptyEnsemble("no ensemble members")
    head = members[0].head(task_id)
    if head.kind != CLASSIFICATION:
        raise ValueError(f"{task_id} is not a classification head")
    probs = np.stack([predict(p, batch)[task_id] for p in members], axis=1)
    return EnsembleBatch(probs, list(seeds) if seeds is not None else list(range(len(members))))


def ensemble_regress(members, batch, task_id):
    """Across-member mean and (population) standard deviation; the spread is
    epistemic only, since no member predicts a variance."""
    vals = np.stack([predict(p, batch)[task_id] for p in members], axis=0)
    return vals.mean(axis=0), vals.std(axis=0)


def conditioned_maps(truth, pred, report: UncertaintyReport, n_classes: int):
    """Mean uncertainty of the samples in each (true, predicted) cell.

    Returns a dict of C x C maps: ``aleatoric_trace``/``epistemic_trace`` use
    the matrix trace per sample, ``aleatoric_diag``/``epistemic_diag`` the
    diagonal entry of the predicted class. Empty cells are NaN.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    ale = report.per_class_aleatoric
    epi = report.per_class_epistemic
    rows = np.arange(len(pred))
    per_sample = {
        "aleatoric_trace": ale.sum(axis=1),
        "epistemic_trace": epi.sum(axis=1),
        "aleatoric_diag": ale[rows, pred],
        "epistemic_diag": epi[rows, pred],
    }
    out = {}
    for name, v in per_sample.items():
        total = np.zeros((n_classes, n_classes))
        count = np.zeros((n_classes, n_classes))
        np.add.at(total, (truth, pred), v)
        np.add.at(count, (truth, pred), 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[name] = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return out


def write_uncertainty_csv(path, truth, pred, report: UncertaintyReport):
    ale = report.per_class_aleatoric
    epi = report.per_class_epistemic
    c = ale.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sample", "true", "pred"] + [f"aleatoric_{k}" for k in range(c)] + [f"epistemic_{k}" for k in range(c)])
        for i in range(len(pred)):
            w.writerow([i, int(truth[i]), int(pred[i])] + [repr(float(v)) for v in ale[i]] + [repr(float(v)) for v in epi[i]])
