"""Prediction tasks: how each head reads its targets from a dataset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SCENARIOS
from .nnet import CLASSIFICATION, REGRESSION, TaskHead
from .siggen import Category

DEFAULT_POWER_LEVELS = (6.0, 8.0, 10.0)


@dataclass(frozen=True)
class Task:
    name: str
    kind: str
    classes: tuple = ()  # class values for classification tasks

    @property
    def n_c(self):
        return len(self.classes) if self.kind == CLASSIFICATION else 1

    def head(self, weight=1.0) -> TaskHead:
        return TaskHead(self.name, self.kind, self.n_c, weight)

    def targets(self, ds) -> np.ndarray:
        return TARGETS[self.name.split(":")[0]](self, ds)


def _type(task, ds):
    return ds["category"].astype(np.int64)


def _power_cls(task, ds):
    # class 0 = no interference, then one class per configured power level
    out = np.full(len(ds), -1, dtype=np.int64)
    none = ds["category"] == Category.NONE
    out[none] = 0
    for i, level in enumerate(task.classes[1:], start=1):
        out[~none & np.isclose(ds["power_dbm"], level)] = i
    return out


def _value_cls(field):
    def f(task, ds):
        out = np.full(len(ds), -1, dtype=np.int64)
        for i, v in enumerate(task.classes):
            out[np.isclose(ds[field], v)] = i
        return out
    return f


def _power_reg(task, ds):
    return ds["power_dbm"].astype(np.float64)  # NaN (no interference) is masked


def _bw_reg(task, ds):
    return ds["bandwidth_mhz"].astype(np.float64)


def _angle_reg(task, ds):
    return ds["angle_deg"].astype(np.float64)


def _area(task, ds):
    return ds["area_id"].astype(np.int64)


def _position(task, ds):
    lookup = {pid: i for i, pid in enumerate(task.classes)}
    return np.array([lookup.get(int(p), -1) for p in ds["position_id"]], dtype=np.int64)


def _scenario(task, ds):
    lookup = {s: i for i, s in enumerate(task.classes)}
    return np.array([lookup.get(str(s), -1) for s in ds["scenario"]], dtype=np.int64)


TARGETS = {
    "type": _type,
    "power": _power_cls,
    "bw": _value_cls("bandwidth_mhz"),
    "power_reg": _power_reg,
    "bw_reg": _bw_reg,
    "angle_reg": _angle_reg,
    "area": _area,
    "position": _position,
    "scenario": _scenario,
}


def make_task(name, power_levels=DEFAULT_POWER_LEVELS, bw_classes=None, positions="all") -> Task:
    if name == "type":
        return Task("type", CLASSIFICATION, tuple(range(7)))
    if name == "power":
        return Task("power", CLASSIFICATION, ("none",) + tuple(float(p) for p in power_levels))
    if name == "bw":
        if not bw_classes:
            raise ValueError("bw classification needs bw_classes")
        return Task("bw", CLASSIFICATION, tuple(float(b) for b in bw_classes))
    if name in ("power_reg", "bw_reg", "angle_reg"):
        return Task(name, REGRESSION)
    if name == "area":
        return Task("area", CLASSIFICATION, (0, 1, 2, 3))
    if name == "position":
        ids = {"hall": range(16), "gallery": range(16, 46), "all": range(46)}[positions]
        return Task("position", CLASSIFICATION, tuple(ids))
    if name == "scenario":
        return Task("scenario", CLASSIFICATION, tuple(SCENARIOS))
    raise KeyError(f"unknown task {name!r}")


def labels_for(tasks, ds) -> dict:
    return {t.name: t.targets(ds) for t in tasks}
