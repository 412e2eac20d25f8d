"""The eight experiment protocols and their result tables."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..channel import SCENARIOS
from ..nnet import CLASSIFICATION, TrainConfig, predict, train
from ..tasks import DEFAULT_POWER_LEVELS, Task, labels_for, make_task
from .metrics import accuracy, confusion_matrix, mae, weighted_f2
from .splits import SplitSpec, check_no_leakage, split_indices


class MissingLabels(ValueError):
    pass


class MissingScenario(ValueError):
    pass


@dataclass
class Settings:
    train: TrainConfig = field(default_factory=TrainConfig)
    reps: int = 10
    split: SplitSpec = field(default_factory=SplitSpec)
    power_levels: tuple = DEFAULT_POWER_LEVELS
    bw_classes: tuple = ()
    holdout_key: str = "power_dbm"
    holdout_values: tuple = (8.0,)
    position_sets: tuple = ("hall", "gallery", "all")
    lengths: tuple = (1, 5, 10, 34)
    sweep_mode: str = "retrain"  # retrain | truncate
    scenarios: tuple = tuple(SCENARIOS)
    arch: dict | None = None
    jobs: int = 1

    def rep_config(self, r):
        return replace(self.train, seed=self.train.seed + r)

    def to_dict(self):
        return {
            "train": self.train.to_dict(), "reps": self.reps, "split": self.split.to_dict(),
            "power_levels": list(self.power_levels), "bw_classes": list(self.bw_classes),
            "holdout_key": self.holdout_key, "holdout_values": list(self.holdout_values),
            "position_sets": list(self.position_sets), "lengths": list(self.lengths),
            "sweep_mode": self.sweep_mode, "scenarios": list(self.scenarios), "arch": self.arch,
        }


@dataclass
class ResultTable:
    """Long-format results: one row per (setting, task, metric)."""

    protocol: int
    rows: list = field(default_factory=list)
    confusion: dict = field(default_factory=dict)  # (setting, task) -> summed matrix
    meta: dict = field(default_factory=dict)

    def add(self, setting, task, metric, runs):
        runs = [float(v) for v in runs]
        self.rows.append({
            "setting": setting, "task": task, "metric": metric,
            "mean": float(np.mean(runs)), "std": float(np.std(runs)), "runs": runs,
        })

    def get(self, setting, task, metric):
        for r in self.rows:
            if r["setting"] == setting and r["task"] == task and r["metric"] == metric:
                return r
        raise KeyError((setting, task, metric))

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["protocol", "setting", "task", "metric", "mean", "std", "n_runs", "runs"])
            for r in self.rows:
                w.writerow([self.protocol, r["setting"], r["task"], r["metric"], repr(r["mean"]), repr(r["std"]),
                            len(r["runs"]), ";".join(repr(v) for v in r["runs"])])


# ---------------------------------------------------------------- core loop

def evaluate(params, ds, tasks):
    """Metrics of one trained model: accuracy/F2/confusion or MAE per task."""
    preds = predict(params, ds.grids)
    out = {}
    for t in tasks:
        y = t.targets(ds)
        if t.kind == CLASSIFICATION:
            keep = y >= 0
            p = preds[t.name].argmax(axis=1)[keep]
            y = y[keep]
            out[t.name] = {
                "accuracy": accuracy(p, y),
                "f2": weighted_f2(p, y, t.n_c),
                "confusion": confusion_matrix(p, y, t.n_c),
            }
        else:
            keep = ~np.isnan(y)
            out[t.name] = {"mae": mae(preds[t.name][keep], y[keep])}
    return out


def _check_labels(ds, tasks):
    for t in tasks:
        y = t.targets(ds)
        valid = (y >= 0) if t.kind == CLASSIFICATION else ~np.isnan(y)
        if not valid.any():
            raise MissingLabels(f"dataset has no labels for task {t.name!r}")


def _fit(args):
    train_ds, tasks, cfg, arch = args
    labels = labels_for(tasks, train_ds)
    return train(train_ds.grids, labels, [t.head() for t in tasks], cfg, arch=arch)[0]


def fit_reps(train_ds, tasks, settings: Settings):
    jobs = [(train_ds, tasks, settings.rep_config(r), settings.arch) for r in range(settings.reps)]
    if settings.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=settings.jobs) as ex:
            return list(ex.map(_fit, jobs))
    return [_fit(j) for j in jobs]


def add_runs(table, setting, tasks, runs):
    for t in tasks:
        if t.kind == CLASSIFICATION:
            table.add(setting, t.name, "accuracy", [r[t.name]["accuracy"] for r in runs])
            table.add(setting, t.name, "f2", [r[t.name]["f2"] for r in runs])
            table.confusion[(setting, t.name)] = sum(r[t.name]["confusion"] for r in runs)
        else:
            table.add(setting, t.name, "mae", [r[t.name]["mae"] for r in runs])


def run_split(ds, tasks, settings: Settings, split: SplitSpec, table, setting):
    tr, te = split_indices(ds, split)
    check_no_leakage(ds, tr, split)
    train_ds, test_ds = ds.subset(tr), ds.subset(te)
    models = fit_reps(train_ds, tasks, settings)
    add_runs(table, setting, tasks, [evaluate(m, test_ds, tasks) for m in models])
    return models


# ---------------------------------------------------------------- protocols

def protocol_tasks(pid, settings: Settings, ds=None):
    if pid == 1:
        return [make_task("type")]
    if pid == 2:
        return [make_task("type"), make_task("power", power_levels=settings.power_levels)]
    if pid == 3:
        extra = [make_task("bw", bw_classes=settings.bw_classes)] if settings.bw_classes else []
        return [make_task("type")] + extra + [make_task("bw_reg")]
    if pid == 4:
        if settings.holdout_key == "power_dbm":
            return [make_task("type"), make_task("power", power_levels=settings.power_levels)]
        return [make_task("type"), make_task("bw_reg")]
    if pid == 5:
        return [make_task("type"), make_task("area")]
    if pid in (7, 8):
        return [make_task("type")]
    raise ValueError(f"no fixed task list for protocol {pid}")


def run_protocol(pid: int, ds, settings: Settings, tasks=None) -> ResultTable:
    """Dispatch experiment ``pid`` (1..8); each setting is repeated ``settings.reps`` times."""
    if pid not in range(1, 9):
        raise ValueError("protocol id must be in 1..8")
    table = ResultTable(pid, meta={"settings": settings.to_dict()})
    if pid == 6:
        for which in settings.position_sets:
            ptasks = [make_task("type"), make_task("position", positions=which)]
            sub = ds.subset(ptasks[1].targets(ds) >= 0)
            if len(sub) == 0:
                raise MissingLabels(f"no samples at {which} positions")
            table.meta[f"classes_{which}"] = ptasks[1].n_c
            run_split(sub, ptasks, settings, settings.split, table, which)
        return table
    if pid == 7:
        tasks = tasks or protocol_tasks(7, settings)
        mean, std = cross_scenario_matrix(ds, tasks, settings)
        names = list(settings.scenarios)
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                table.rows.append({"setting": f"train={a};test={b}", "task": tasks[0].name, "metric": "accuracy",
                                   "mean": float(mean[i, j]), "std": float(std[i, j]), "runs": []})
        table.meta["matrix"] = mean
        table.meta["matrix_std"] = std
        return table
    if pid == 8:
        tasks = tasks or protocol_tasks(8, settings)
        return snapshot_length_sweep(ds, tasks, settings)
    tasks = tasks or protocol_tasks(pid, settings)
    _check_labels(ds, tasks)
    if pid == 4:
        run_split(ds, tasks, settings, settings.split, table, "dependent")
        indep = SplitSpec("independent", settings.holdout_key, tuple(settings.holdout_values), seed=settings.split.seed)
        run_split(ds, tasks, settings, indep, table, "independent")
        return table
    run_split(ds, tasks, settings, settings.split, table, settings.split.mode)
    return table


def cross_scenario_matrix(ds, tasks, settings: Settings, rows=None):
    """Accuracy of the first classification task, trained on row scenario and
    tested on column scenario. Every scenario is split once (same seed);
    models train on a row's training part and are scored on each column's
    test part, so the diagonal is a held-out score.

    ``rows`` restricts the training scenarios (default: all columns).
    """
    names = list(settings.scenarios)
    rows = names if rows is None else list(rows)
    scen = ds["scenario"].astype(str)
    parts = {}
    for s in names:
        sub = ds.subset(scen == s)
        if len(sub) == 0:
            raise MissingScenario(f"no samples for scenario {s}")
        tr, te = split_indices(sub, settings.split)
        parts[s] = (sub.subset(tr), sub.subset(te))
    key = next(t for t in tasks if t.kind == CLASSIFICATION).name
    runs = np.zeros((len(rows), len(names), settings.reps))
    for i, a in enumerate(rows):
        if a not in parts:
            raise MissingScenario(f"training scenario {a} is not a column")
        models = fit_reps(parts[a][0], tasks, settings)
        for j, b in enumerate(names):
            for r, m in enumerate(models):
                runs[i, j, r] = evaluate(m, parts[b][1], tasks)[key]["accuracy"]
    return runs.mean(axis=2), runs.std(axis=2)


def snapshot_length_sweep(ds, tasks, settings: Settings) -> ResultTable:
    """Metrics per snapshot length, in the order of ``settings.lengths``.

    ``retrain`` trains a fresh model on snapshots truncated to each length;
    ``truncate`` trains once at the stored length and truncates at test time.
    """
    table = ResultTable(8, meta={"settings": settings.to_dict(), "lengths": list(settings.lengths)})
    tr, te = split_indices(ds, settings.split)
    train_ds, test_ds = ds.subset(tr), ds.subset(te)
    if any(not 1 <= n <= ds.n_t for n in settings.lengths):
        raise ValueError(f"lengths must lie in 1..{ds.n_t}")
    if settings.sweep_mode == "truncate":
        models = fit_reps(train_ds, tasks, settings)
    for n in settings.lengths:
        if settings.sweep_mode == "retrain":
            models = fit_reps(train_ds.truncate(n), tasks, settings)
        add_runs(table, f"n_t={n}", tasks, [evaluate(m, test_ds.truncate(n), tasks) for m in models])
    return table
