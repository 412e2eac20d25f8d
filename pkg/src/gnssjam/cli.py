"""Command-line entry point: ``gnssjam {synth,train,eval,xscen,ablate,uncert}``.

Every command reads an optional JSON config (validated against
``data/config_schema.json``), lets flags override it, and writes a frozen
``config.json`` with the resolved config and a version stamp beside its
outputs. Exit codes: 0 success, 1 runtime failure, 2 invalid config,
3 missing data.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .channel import presets_hash
from .dataio import (
    PlanInvalid,
    desk_default_plan,
    open_dataset,
    parse_plan,
    synthesize_dataset,
    synthesize_in_memory,
)
from .eval import svgplot
from .eval.protocols import (
    MissingLabels,
    MissingScenario,
    ResultTable,
    Settings,
    add_runs,
    cross_scenario_matrix,
    evaluate,
    run_protocol,
    snapshot_length_sweep,
)
from .eval.metrics import accuracy, confusion_matrix, weighted_f2
from .eval.splits import DegenerateSplit, SplitSpec, make_split
from .nnet import CLASSIFICATION, TrainConfig, load_checkpoint, save_checkpoint, train
from .siggen import Category
from .tasks import DEFAULT_POWER_LEVELS, labels_for, make_task
from .uncert import conditioned_maps, ensemble_predict, member_seeds, write_uncertainty_csv

EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA = 1, 2, 3


class ConfigInvalid(Exception):
    pass


class DataMissing(Exception):
    pass


def load_schema():
    return json.loads(resources.files("gnssjam").joinpath("data/config_schema.json").read_text())


# ---------------------------------------------------------------- config

def resolve_config(args) -> dict:
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigInvalid(f"config file {path} not found")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    overrides = {
        "seed": args.seed, "out": args.out, "jobs": args.jobs, "data": args.data, "plan": args.plan,
        "protocol": getattr(args, "protocol", None), "reps": getattr(args, "reps", None),
        "ensemble": getattr(args, "members", None), "sweep_mode": getattr(args, "mode", None),
    }
    lengths = getattr(args, "lengths", None)
    if lengths:
        overrides["lengths"] = [int(v) for v in lengths.split(",")]
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    if getattr(args, "epochs", None) is not None:
        cfg.setdefault("train", {})["epochs"] = args.epochs
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigInvalid(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from exc
    if "seed" not in cfg:
        raise ConfigInvalid("seed is mandatory")
    return cfg


def version_stamp() -> dict:
    try:
        rev = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).parent, capture_output=True,
                             text=True, check=True).stdout.strip()
    except (OSError, subprocess.CalledProcessError):
        rev = None
    return {"package": "gnssjam", "version": __version__, "git_revision": rev,
            "channel_preset_hash": presets_hash()}


def _json_dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def freeze(out: Path, command: str, cfg: dict, resolved: dict):
    out.mkdir(parents=True, exist_ok=True)
    _json_dump(out / "config.json", {"command": command, "config": cfg, "resolved": resolved,
                                     "stamp": version_stamp()})


def _out_dir(cfg) -> Path:
    if "out" not in cfg:
        raise ConfigInvalid("an output directory is required (--out)")
    return Path(cfg["out"])


def train_config(cfg) -> TrainConfig:
    t = dict(cfg.get("train", {}))
    try:
        return TrainConfig(seed=int(cfg["seed"]), **t)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def split_spec(cfg) -> SplitSpec:
    s = dict(cfg.get("split", {}))
    s["holdout_values"] = tuple(s.get("holdout_values", ()))
    try:
        return SplitSpec(seed=int(cfg["seed"]), **s)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def settings(cfg) -> Settings:
    kw = {}
    for k in ("power_levels", "bw_classes", "holdout_values", "position_sets", "lengths", "scenarios"):
        if k in cfg:
            kw[k] = tuple(cfg[k])
    for k in ("holdout_key", "sweep_mode", "arch", "reps", "jobs"):
        if k in cfg:
            kw[k] = cfg[k]
    return Settings(train=train_config(cfg), split=split_spec(cfg), **kw)


def build_tasks(cfg, default=("type",)):
    names = cfg.get("tasks", list(default))
    try:
        return [make_task(n, power_levels=cfg.get("power_levels", DEFAULT_POWER_LEVELS),
                          bw_classes=cfg.get("bw_classes"), positions=cfg.get("positions", "all"))
                for n in names]
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc


def heads_for(cfg, tasks):
    weights = cfg.get("head_weights", {})
    return [t.head(float(weights.get(t.name, 1.0))) for t in tasks]


def load_plan(spec):
    if isinstance(spec, dict):
        return spec
    if spec == "desk_default":
        return desk_default_plan()
    path = Path(spec)
    if not path.exists():
        raise DataMissing(f"plan file {path} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"plan is not valid JSON: {exc}") from exc


def load_data(cfg):
    """Dataset from ``data`` (a synth output directory) or an in-memory ``plan``."""
    if "data" in cfg:
        path = Path(cfg["data"])
        if not (path / "manifest.json").exists() and not (path.is_file() and path.exists()):
            raise DataMissing(f"no dataset at {path}")
        return open_dataset(path)
    if "plan" in cfg:
        try:
            return synthesize_in_memory(load_plan(cfg["plan"]), int(cfg["seed"]), int(cfg.get("jobs", 1)))
        except PlanInvalid as exc:
            raise ConfigInvalid(str(exc)) from exc
    raise DataMissing("config names neither 'data' nor 'plan'")


def _write_matrix_csv(path, matrix, row_labels, col_labels, corner="train\\test"):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([corner] + list(col_labels))
        for lab, row in zip(row_labels, matrix):
            w.writerow([lab] + [repr(float(v)) for v in row])


def _class_labels(task):
    if task.name == "type":
        return [Category(c).label for c in task.classes]
    return [str(c) for c in task.classes]


# ---------------------------------------------------------------- commands

def cmd_synth(cfg):
    out = _out_dir(cfg)
    if "plan" not in cfg:
        raise ConfigInvalid("synth needs a plan (--plan)")
    plan_doc = load_plan(cfg["plan"])
    try:
        plan = parse_plan(plan_doc)
    except PlanInvalid as exc:
        raise ConfigInvalid(str(exc)) from exc
    manifest = synthesize_dataset(plan, int(cfg["seed"]), out, int(cfg.get("jobs", 1)))
    freeze(out, "synth", cfg, {"plan": plan.to_dict(), "record_sha256": manifest["record_sha256"]})
    return f"wrote {manifest['total']} records to {out}"


def _write_trace(path, trace):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "lr", "loss", "train_accuracy"])
        for e, (lr, lo, acc) in enumerate(zip(trace.lr, trace.loss, trace.accuracy)):
            w.writerow([e, repr(float(lr)), repr(float(lo)), "" if acc is None else repr(float(acc))])


def cmd_train(cfg):
    out = _out_dir(cfg)
    ds = load_data(cfg)
    tasks = build_tasks(cfg)
    tcfg = train_config(cfg)
    spec = split_spec(cfg)
    train_ds, test_ds = make_split(ds, spec)
    labels = labels_for(tasks, train_ds)
    m = int(cfg.get("ensemble", 1))
    seeds = member_seeds(tcfg.seed, m)
    out.mkdir(parents=True, exist_ok=True)
    table = ResultTable(0, meta={})
    runs = []
    for k, s in enumerate(seeds):
        params, trace = train(train_ds.grids, labels, heads_for(cfg, tasks), tcfg, init_seed=s, arch=cfg.get("arch"))
        save_checkpoint(out / f"member_{k}.gjnn", params)
        _write_trace(out / f"trace_{k}.csv", trace)
        runs.append(evaluate(params, test_ds, tasks))
    add_runs(table, spec.mode, tasks, runs)
    table.to_csv(out / "test_metrics.csv")
    freeze(out, "train", cfg, {"train": tcfg.to_dict(), "split": spec.to_dict(), "member_seeds": seeds,
                               "tasks": [t.name for t in tasks], "n_train": len(train_ds), "n_test": len(test_ds)})
    return f"trained {m} member(s) into {out}"


def _protocol_plots(out, table: ResultTable, tasks_by_name):
    for (setting, task), cm in sorted(table.confusion.items()):
        t = tasks_by_name.get(task)
        labels = _class_labels(t) if t else [str(i) for i in range(len(cm))]
        (out / f"confusion_{setting}_{task}.svg").write_text(
            svgplot.confusion_svg(cm, labels, title=f"{task} ({setting})"))
        _write_matrix_csv(out / f"confusion_{setting}_{task}.csv", cm, labels, labels, corner="true\\pred")


def cmd_eval(cfg):
    out = _out_dir(cfg)
    if "protocol" not in cfg:
        raise ConfigInvalid("eval needs --protocol")
    pid = int(cfg["protocol"])
    st = settings(cfg)
    ds = load_data(cfg)
    tasks = build_tasks(cfg) if "tasks" in cfg and pid not in (6,) else None
    out.mkdir(parents=True, exist_ok=True)
    table = run_protocol(pid, ds, st, tasks)
    table.to_csv(out / f"protocol_{pid}.csv")
    if pid == 7:
        _xscen_outputs(out, table.meta["matrix"], table.meta["matrix_std"], list(st.scenarios), list(st.scenarios))
    elif pid == 8:
        _sweep_plot(out, table, st.lengths)
    else:
        names = {t.name: t for t in (tasks or [])}
        for setting, task in table.confusion:
            if task not in names:
                names[task] = make_task(task, power_levels=st.power_levels, bw_classes=st.bw_classes or None,
                                        positions=setting if setting in ("hall", "gallery", "all") else "all")
        _protocol_plots(out, table, names)
    freeze(out, "eval", cfg, {"settings": st.to_dict(), "protocol": pid})
    return f"protocol {pid}: {len(table.rows)} result rows in {out}"


def _xscen_outputs(out, mean, std, rows, cols):
    _write_matrix_csv(out / "xscen.csv", mean, rows, cols)
    _write_matrix_csv(out / "xscen_std.csv", std, rows, cols)
    (out / "xscen.svg").write_text(svgplot.heatmap(mean, rows, cols, title="type accuracy (%)", vmin=0, vmax=100,
                                                   xlabel="test scenario", ylabel="train scenario"))


def cmd_xscen(cfg):
    out = _out_dir(cfg)
    st = settings(cfg)
    ds = load_data(cfg)
    tasks = build_tasks(cfg)
    rows = cfg.get("xscen_rows")
    mean, std = cross_scenario_matrix(ds, tasks, st, rows=rows)
    out.mkdir(parents=True, exist_ok=True)
    _xscen_outputs(out, mean, std, rows or list(st.scenarios), list(st.scenarios))
    freeze(out, "xscen", cfg, {"settings": st.to_dict(), "rows": rows or list(st.scenarios)})
    return f"{mean.shape[0]}x{mean.shape[1]} matrix in {out}"


def _sweep_plot(out, table, lengths):
    series, dashed = {}, set()
    for key in sorted({(r["task"], r["metric"]) for r in table.rows}):
        if key[1] == "f2":
            continue
        series[f"{key[0]} {key[1]}"] = [table.get(f"n_t={n}", *key)["mean"] for n in lengths]
        if key[1] == "mae":
            dashed.add(f"{key[0]} {key[1]}")
    acc = {k: v for k, v in series.items() if k not in dashed}
    if acc:
        (out / "ablate_accuracy.svg").write_text(svgplot.line_chart(
            list(lengths), acc, title="accuracy vs snapshot length", xlabel="N_t", ylabel="accuracy (%)"))
    err = {k: v for k, v in series.items() if k in dashed}
    if err:
        (out / "ablate_mae.svg").write_text(svgplot.line_chart(
            list(lengths), err, title="MAE vs snapshot length", xlabel="N_t", ylabel="MAE", dashed=dashed))


def cmd_ablate(cfg):
    out = _out_dir(cfg)
    st = settings(cfg)
    ds = load_data(cfg)
    tasks = build_tasks(cfg, default=("type", "bw_reg"))
    table = snapshot_length_sweep(ds, tasks, st)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "ablate.csv")
    _sweep_plot(out, table, st.lengths)
    freeze(out, "ablate", cfg, {"settings": st.to_dict(), "tasks": [t.name for t in tasks]})
    return f"sweep over {list(st.lengths)} in {out}"


def cmd_uncert(cfg, checkpoints=None):
    out = _out_dir(cfg)
    ds = load_data(cfg)
    tasks = build_tasks(cfg)
    task = next((t for t in tasks if t.kind == CLASSIFICATION), None)
    if task is None:
        raise ConfigInvalid("uncertainty needs a classification task")
    spec = split_spec(cfg)
    train_ds, test_ds = make_split(ds, spec)
    if checkpoints:
        paths = sorted(Path(checkpoints).glob("member_*.gjnn"), key=lambda p: int(p.stem.split("_")[1]))
        if not paths:
            raise DataMissing(f"no member_*.gjnn checkpoints in {checkpoints}")
        members = [load_checkpoint(p) for p in paths]
        seeds = list(range(len(members)))
    else:
        tcfg = train_config(cfg)
        seeds = member_seeds(tcfg.seed, int(cfg.get("ensemble", 10)))
        labels = labels_for(tasks, train_ds)
        members = [train(train_ds.grids, labels, heads_for(cfg, tasks), tcfg, init_seed=s, arch=cfg.get("arch"))[0]
                   for s in seeds]
    batch = ensemble_predict(members, test_ds.grids, task.name, seeds)
    truth = task.targets(test_ds)
    keep = truth >= 0
    report = batch.report()
    pred = batch.predictions
    out.mkdir(parents=True, exist_ok=True)
    write_uncertainty_csv(out / "uncertainty.csv", truth, pred, report)
    labels = _class_labels(task)
    maps = conditioned_maps(truth[keep], pred[keep], _subset_report(report, keep), task.n_c)
    for name, m in maps.items():
        _write_matrix_csv(out / f"{name}.csv", m, labels, labels, corner="true\\pred")
        (out / f"{name}.svg").write_text(svgplot.heatmap(m, labels, labels, title=name, fmt="{:.3f}",
                                                         xlabel="predicted", ylabel="true"))
    cm = confusion_matrix(pred[keep], truth[keep], task.n_c)
    (out / "confusion.svg").write_text(svgplot.confusion_svg(cm, labels, title=f"{task.name} ensemble"))
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["task", "members", "accuracy", "f2", "mean_aleatoric", "mean_epistemic"])
        w.writerow([task.name, len(members), repr(accuracy(pred[keep], truth[keep])),
                    repr(weighted_f2(pred[keep], truth[keep], task.n_c)),
                    repr(float(np.trace(report.aleatoric, axis1=-2, axis2=-1)[keep].mean())),
                    repr(float(np.trace(report.epistemic, axis1=-2, axis2=-1)[keep].mean()))])
    freeze(out, "uncert", cfg, {"split": spec.to_dict(), "member_seeds": seeds, "task": task.name,
                                "checkpoints": str(checkpoints) if checkpoints else None})
    return f"{len(members)}-member uncertainty for {int(keep.sum())} samples in {out}"


def _subset_report(report, keep):
    return type(report)(report.mean_probs[keep], report.aleatoric[keep], report.epistemic[keep])


# ---------------------------------------------------------------- argparse

def build_parser():
    p = argparse.ArgumentParser(prog="gnssjam", description="Synthetic GNSS jamming experiments.")
    p.add_argument("--version", action="version", version=f"gnssjam {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON experiment config (see data/config_schema.json)")
        sp.add_argument("--seed", type=int, help="master seed (mandatory here or in the config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker process cap")
        sp.add_argument("--plan", help="plan JSON path or 'desk_default'")
        if data:
            sp.add_argument("--data", help="dataset directory produced by synth")
            sp.add_argument("--epochs", type=int, help="training epochs")
        else:
            sp.set_defaults(data=None, epochs=None)

    sp = sub.add_parser("synth", help="synthesize a GJAM dataset")
    common(sp, data=False)
    sp = sub.add_parser("train", help="train a model or an ensemble")
    common(sp)
    sp.add_argument("--members", type=int, help="ensemble size M")
    sp = sub.add_parser("eval", help="run one experiment protocol")
    common(sp)
    sp.add_argument("--protocol", type=int, choices=range(1, 9), help="protocol id 1..8")
    sp.add_argument("--reps", type=int, help="repetitions R")
    sp = sub.add_parser("xscen", help="cross-scenario accuracy matrix")
    common(sp)
    sp.add_argument("--reps", type=int, help="repetitions R")
    sp = sub.add_parser("ablate", help="snapshot-length sweep")
    common(sp)
    sp.add_argument("--reps", type=int, help="repetitions R")
    sp.add_argument("--lengths", help="comma separated snapshot lengths")
    sp.add_argument("--mode", choices=["retrain", "truncate"], help="retrain per length or truncate at test")
    sp = sub.add_parser("uncert", help="deep-ensemble uncertainty decomposition")
    common(sp)
    sp.add_argument("--members", type=int, help="ensemble size M")
    sp.add_argument("--checkpoints", help="directory of member_*.gjnn from train")
    return p


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "xscen": cmd_xscen,
            "ablate": cmd_ablate, "uncert": cmd_uncert}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "uncert":
            msg = cmd_uncert(cfg, args.checkpoints)
        else:
            msg = COMMANDS[args.command](cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataMissing, FileNotFoundError) as exc:
        print(f"data missing: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MissingLabels, MissingScenario, DegenerateSplit) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
