"""Train/test split construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateSplit(ValueError):
    pass


class LeakageError(AssertionError):
    pass


@dataclass
class SplitSpec:
    mode: str = "dependent"  # dependent | independent | random
    holdout_key: str | None = None
    holdout_values: tuple = ()
    test_fraction: float = 0.2
    seed: int = 0
    stratify_key: str = "category"

    def __post_init__(self):
        if self.mode not in ("dependent", "independent", "random"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "independent" and (not self.holdout_key or not self.holdout_values):
            raise ValueError("independent splits need holdout_key and holdout_values")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")

    def to_dict(self):
        return {"mode": self.mode, "holdout_key": self.holdout_key, "holdout_values": list(self.holdout_values),
                "test_fraction": self.test_fraction, "seed": self.seed, "stratify_key": self.stratify_key}


def _in_values(col, values):
    col = np.asarray(col)
    if col.dtype.kind in "fc":
        return np.any(np.isclose(col[:, None], np.asarray(values, dtype=np.float64)[None, :]), axis=1)
    return np.isin(col.astype(str), [str(v) for v in values])


def stratified_indices(strata, test_fraction, seed):
    """Per-stratum shuffle; ``round(fraction * size)`` of each stratum goes to test."""
    rng = np.random.default_rng(seed)
    strata = np.asarray(strata).astype(str)
    test = []
    for value in sorted(set(strata.tolist())):
        idx = np.nonzero(strata == value)[0]
        idx = idx[rng.permutation(idx.size)]
        test.extend(idx[: int(round(test_fraction * idx.size))].tolist())
    test = np.sort(np.array(test, dtype=np.int64))
    train = np.setdiff1d(np.arange(strata.size), test)
    return train, test


def split_indices(ds, spec: SplitSpec):
    if len(ds) == 0:
        raise DegenerateSplit("empty dataset")
    if spec.mode == "independent":
        mask = _in_values(ds[spec.holdout_key], spec.holdout_values)
        missing = [v for v in spec.holdout_values if not _in_values(ds[spec.holdout_key], [v]).any()]
        if missing:
            raise DegenerateSplit(f"holdout values {missing} absent from the data")
        test = np.nonzero(mask)[0]
        train = np.nonzero(~mask)[0]
        check_no_leakage(ds, train, spec)
    else:
        train, test = stratified_indices(ds[spec.stratify_key], spec.test_fraction, spec.seed)
    if train.size == 0 or test.size == 0:
        raise DegenerateSplit("split leaves one side empty")
    return train, test


def check_no_leakage(ds, train_idx, spec: SplitSpec):
    if spec.mode != "independent":
        return
    leaked = _in_values(ds[spec.holdout_key][train_idx], spec.holdout_values)
    if leaked.any():
        raise LeakageError("held-out values present in the training set")


def make_split(ds, spec: SplitSpec):
    train, test = split_indices(ds, spec)
    return ds.subset(train), ds.subset(test)
