"""Dataset synthesis, the GJAM record format and its JSON manifest.

GJAM layout (little-endian)::

    b"GJAM" u16 version
    repeated:
        u32 length of what follows
        label block  "<BffBBHBfQH"
            category u8, power f32 dBm (NaN for no interference),
            bandwidth f32 MHz, scenario u8, variant u8 (0 none, 1 a, 2 b),
            position u16, area u8, angle f32 deg, seed u64, n_t u16
        n_t * 1024 float32 cells, frequency-major (row = frequency bin)

A record's ``snapshot_id`` is its 64-bit generation seed.
"""

from __future__ import annotations

import errno
import hashlib
import io
import json
import math
import os
import struct
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import __version__
from .channel import (
    FIXED_POSITION_ID,
    POSITIONS,
    SCENARIOS,
    UnknownScenario,
    apply_channel,
    parse_scenario,
    presets_hash,
    scenario_preset,
)
from .siggen import DEFAULT_PARAMS, Category, InvalidSpec, JammerSpec, synth
from .spectro import MAX_NT, NFFT, frame_snapshot

MAGIC = b"GJAM"
FORMAT_VERSION = 1
LABEL_STRUCT = struct.Struct("<BffBBHBfQH")
_VARIANTS = {"": 0, "a": 1, "b": 2}
_VARIANT_NAMES = {v: k for k, v in _VARIANTS.items()}

# receiver front-end gain placing the unit-referenced signals inside the
# fixed -182.77 .. -17.12 dB normalisation window
FRONTEND_GAIN_DB = -100.0

CHIRP_BW_MENU = [2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0, 60.0]
FREQHOPPER_BW_MENU = [0.1, 0.5, 1.0, 2.0, 2.5, 4.0, 5.0, 10.0, 20.0, 25.0, 35.0, 50.0]
PULSED_BW_MENU = [0.2, 1.0, 2.5, 4.0, 5.0, 10.0, 35.0, 50.0]


class FormatError(ValueError):
    pass


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class TruncatedRecord(FormatError):
    pass


class ManifestMismatch(FormatError):
    pass


class PlanInvalid(ValueError):
    pass


class DiskFull(OSError):
    pass


@dataclass(frozen=True)
class Labels:
    category: int
    power_dbm: float
    bandwidth_mhz: float
    scenario: str
    position_id: int
    area_id: int
    angle_deg: float


@dataclass
class SnapshotRecord:
    grid: np.ndarray  # float32 (1024, n_t)
    labels: Labels
    seed: int
    generator_version: str = __version__

    @property
    def snapshot_id(self):
        return self.seed

    @property
    def n_t(self):
        return self.grid.shape[1]


# ---------------------------------------------------------------- encoding

def encode_record(rec: SnapshotRecord) -> bytes:
    lab = rec.labels
    sid, variant = parse_scenario(lab.scenario)
    grid = np.asarray(rec.grid)
    if grid.ndim != 2 or grid.shape[0] != NFFT:
        raise FormatError(f"grid must be ({NFFT}, n_t), got {grid.shape}")
    head = LABEL_STRUCT.pack(
        int(lab.category), lab.power_dbm, lab.bandwidth_mhz, sid, _VARIANTS[variant],
        int(lab.position_id), int(lab.area_id), lab.angle_deg, int(rec.seed), grid.shape[1],
    )
    body = np.ascontiguousarray(grid, dtype="<f4").tobytes()
    return struct.pack("<I", len(head) + len(body)) + head + body


def _decode_payload(payload: bytes) -> SnapshotRecord:
    if len(payload) < LABEL_STRUCT.size:
        raise TruncatedRecord("record shorter than its label block")
    cat, power, bw, sid, var, pos, area, angle, seed, n_t = LABEL_STRUCT.unpack_from(payload)
    if len(payload) != LABEL_STRUCT.size + 4 * NFFT * n_t:
        raise TruncatedRecord("record length disagrees with its n_t")
    grid = np.frombuffer(payload, dtype="<f4", offset=LABEL_STRUCT.size).reshape(NFFT, n_t).astype(np.float32)
    scen = f"{sid}{_VARIANT_NAMES[var]}"
    return SnapshotRecord(grid, Labels(cat, power, bw, scen, pos, area, angle), seed)


def _f32(v):
    return float(np.float32(v))


def iter_records(stream) -> Iterator[SnapshotRecord]:
    head = stream.read(6)
    if len(head) < 4 or head[:4] != MAGIC:
        raise BadMagic("not a GJAM record file")
    if len(head) < 6:
        raise TruncatedRecord("missing version")
    (version,) = struct.unpack("<H", head[4:6])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"GJAM version {version}, expected {FORMAT_VERSION}")
    while True:
        lp = stream.read(4)
        if not lp:
            return
        if len(lp) < 4:
            raise TruncatedRecord("truncated length prefix")
        (n,) = struct.unpack("<I", lp)
        payload = stream.read(n)
        if len(payload) != n:
            raise TruncatedRecord("truncated record body")
        yield _decode_payload(payload)


def read_records(path) -> list:
    """All records in ``path``; any format error aborts without a partial result."""
    with open(path, "rb") as f:
        return list(iter_records(f))


class RecordWriter:
    """Append-only single-writer sink."""

    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "wb")
        self._write(MAGIC + struct.pack("<H", FORMAT_VERSION))
        self.count = 0

    def _write(self, b):
        try:
            self._f.write(b)
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise DiskFull(exc.errno, "no space left while writing records") from exc
            raise

    def write(self, rec: SnapshotRecord):
        self._write(encode_record(rec))
        self.count += 1

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_records(path, records: Iterable[SnapshotRecord]) -> int:
    with RecordWriter(path) as w:
        for r in records:
            w.write(r)
        return w.count


# import hook for externally recorded snapshots: path -> record stream
Importer = Callable[[str], Iterator[SnapshotRecord]]
IMPORTERS: dict = {}


def register_importer(name: str, fn: Importer):
    IMPORTERS[name] = fn
    return fn


# ---------------------------------------------------------------- plans

@dataclass
class PlanRow:
    scenario: str
    category: Category
    count: int
    power_dbm: list
    bandwidth_mhz: list
    position: list
    params: dict = field(default_factory=dict)
    random_offset: bool = True

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "category": self.category.name.lower(),
            "count": self.count,
            "power_dbm": self.power_dbm,
            "bandwidth_mhz": self.bandwidth_mhz,
            "position": self.position,
            "params": self.params,
            "random_offset": self.random_offset,
        }


@dataclass
class Plan:
    rows: list
    n_t: int = MAX_NT
    sample_rate: float = 100e6
    frontend_gain_db: float = FRONTEND_GAIN_DB
    name: str = "custom"

    def to_dict(self):
        return {
            "name": self.name,
            "n_t": self.n_t,
            "sample_rate": self.sample_rate,
            "frontend_gain_db": self.frontend_gain_db,
            "rows": [r.to_dict() for r in self.rows],
        }

    @property
    def total(self):
        return sum(r.count for r in self.rows)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _positions(v):
    if v in (None, "fixed"):
        return [FIXED_POSITION_ID]
    if v == "hall":
        return list(range(16))
    if v == "gallery":
        return list(range(16, 46))
    if v == "all":
        return list(range(46))
    return [int(p) for p in _as_list(v)]


def parse_plan(doc) -> Plan:
    """Validate a plan document (dict) and resolve defaults."""
    if not isinstance(doc, dict) or not isinstance(doc.get("rows"), list) or not doc["rows"]:
        raise PlanInvalid("plan needs a nonempty 'rows' list")
    n_t = int(doc.get("n_t", MAX_NT))
    if not 1 <= n_t <= MAX_NT:
        raise PlanInvalid(f"n_t must be in 1..{MAX_NT}")
    rows = []
    for i, r in enumerate(doc["rows"]):
        try:
            count = int(r["count"])
            if count < 1:
                raise PlanInvalid(f"row {i}: count must be >= 1")
            scen = str(r["scenario"]).lower()
            parse_scenario(scen)
            cat = Category.parse(r["category"])
            powers = [float(p) for p in _as_list(r.get("power_dbm", 10.0))]
            if cat is Category.NONE:
                bws = [0.0]
            else:
                bws = [float(b) for b in _as_list(r.get("bandwidth_mhz", 10.0))]
            pos = _positions(r.get("position"))
            if any(not 0 <= p < len(POSITIONS) for p in pos):
                raise PlanInvalid(f"row {i}: position ids must be in 0..45")
            params = dict(r.get("params", {}))
            unknown = set(params) - set(DEFAULT_PARAMS)
            if unknown:
                raise PlanInvalid(f"row {i}: unknown params {sorted(unknown)}")
            for b in bws:
                JammerSpec(cat, b, powers[0], _first(params))
        except PlanInvalid:
            raise
        except (KeyError, ValueError, TypeError, UnknownScenario) as exc:
            raise PlanInvalid(f"row {i}: {exc}") from exc
        rows.append(PlanRow(scen, cat, count, powers, bws, pos, params, bool(r.get("random_offset", True))))
    return Plan(rows, n_t, float(doc.get("sample_rate", 100e6)),
                float(doc.get("frontend_gain_db", FRONTEND_GAIN_DB)), str(doc.get("name", "custom")))


def _first(params):
    return {k: _as_list(v)[0] for k, v in params.items()}


def _pick(values, j):
    values = _as_list(values)
    return values[j % len(values)]


def desk_default_plan(count=25, n_t=MAX_NT) -> dict:
    """12 scenarios x {None, Chirp, Multitone, Noise} x 2 powers x ``count``."""
    rows = []
    for scen in SCENARIOS:
        for cat, bws in (("none", [0.0]), ("chirp", CHIRP_BW_MENU), ("multitone", [5.0, 10.0, 20.0, 40.0]),
                         ("noise", [5.0, 10.0, 20.0, 40.0])):
            rows.append({"scenario": scen, "category": cat, "count": 2 * count, "power_dbm": [6.0, 10.0],
                         "bandwidth_mhz": bws, "position": "fixed"})
    return {"name": "desk_default", "n_t": n_t, "rows": rows}


BW_MENUS = {
    "none": [0.0],
    "noise": [5.0, 10.0, 20.0, 40.0],
    "chirp": CHIRP_BW_MENU,
    "freqhopper": FREQHOPPER_BW_MENU,
    "modulated": [1.0, 2.0, 5.0, 10.0, 20.0],
    "multitone": [5.0, 10.0, 20.0, 40.0],
    "pulsed": PULSED_BW_MENU,
}


def category_plan(scenarios=("1a",), count=70, power_dbm=(6.0, 8.0, 10.0), n_t=MAX_NT) -> dict:
    """All seven categories per scenario, ``count`` snapshots each, cycling powers and bandwidth menus."""
    rows = [{"scenario": s, "category": cat, "count": count, "power_dbm": list(power_dbm),
             "bandwidth_mhz": bws, "position": "fixed"}
            for s in scenarios for cat, bws in BW_MENUS.items()]
    return {"name": "categories", "n_t": n_t, "rows": rows}


def record_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def render_record(plan: Plan, row: PlanRow, j: int, seed: int, presets=None) -> SnapshotRecord:
    """One snapshot: synth -> channel -> front-end gain -> spectrogram."""
    rng = np.random.default_rng(seed)
    cat = row.category
    params = {k: _pick(v, j) for k, v in row.params.items()}
    if cat is Category.NONE:
        power, bw = math.nan, 0.0
    else:
        power, bw = _pick(row.power_dbm, j), _pick(row.bandwidth_mhz, j)
    if row.random_offset and cat in (Category.CHIRP, Category.PULSED):
        period_key = "sweep_period_s" if cat is Category.CHIRP else "pulse_period_s"
        period = params.get(period_key, DEFAULT_PARAMS[period_key])
        params["start_offset_s"] = float(rng.uniform(0, period))
    spec = JammerSpec(cat, bw, 0.0 if cat is Category.NONE else power, params)
    n = NFFT * plan.n_t
    x = synth(spec, n, plan.sample_rate, rng)
    pos = POSITIONS[_pick(row.position, j)]
    y = apply_channel(x, scenario_preset(row.scenario, presets), pos, rng)
    y.samples *= 10 ** (plan.frontend_gain_db / 20)
    grid = frame_snapshot(y, plan.n_t).grid.astype(np.float32)
    labels = Labels(int(cat), _f32(power), _f32(bw), row.scenario, pos.position_id, pos.area_id, _f32(pos.angle_deg))
    return SnapshotRecord(grid, labels, seed)


def _jobs(plan: Plan, seed: int):
    index = 0
    for row in plan.rows:
        for j in range(row.count):
            yield row, j, record_seed(seed, index)
            index += 1


def _render_task(args):
    plan, row, j, s = args
    return render_record(plan, row, j, s)


def generate(plan: Plan, seed: int, jobs: int = 1) -> Iterator[SnapshotRecord]:
    """Records in plan order; identical for any ``jobs``."""
    tasks = ((plan, row, j, s) for row, j, s in _jobs(plan, seed))
    if jobs <= 1:
        for t in tasks:
            yield _render_task(t)
        return
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(_render_task, tasks, chunksize=8)


def _count_key(lab: Labels):
    power = "none" if math.isnan(lab.power_dbm) else f"{lab.power_dbm:g}"
    return f"{lab.scenario}|{Category(lab.category).name.lower()}|{power}|{lab.bandwidth_mhz:g}"


def build_manifest(records_path, counts: Counter, plan_doc=None, seed=None) -> dict:
    digest = hashlib.sha256(Path(records_path).read_bytes()).hexdigest()
    return {
        "format": "GJAM",
        "format_version": FORMAT_VERSION,
        "generator_version": __version__,
        "record_file": Path(records_path).name,
        "record_sha256": digest,
        "channel_preset_hash": presets_hash(),
        "seed": seed,
        "plan": plan_doc,
        "total": sum(counts.values()),
        "counts": dict(sorted(counts.items())),
    }


RECORDS_NAME = "records.gjam"
MANIFEST_NAME = "manifest.json"


def synthesize_dataset(plan, seed: int, out_dir, jobs: int = 1) -> dict:
    """Stream a plan into ``out_dir/records.gjam``; the manifest is written last."""
    plan = plan if isinstance(plan, Plan) else parse_plan(plan)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec_path = out / RECORDS_NAME
    counts = Counter()
    with RecordWriter(rec_path) as w:
        for rec in generate(plan, seed, jobs):
            w.write(rec)
            counts[_count_key(rec.labels)] += 1
    manifest = build_manifest(rec_path, counts, plan.to_dict(), seed)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def open_dataset(path) -> "Dataset":
    """Load a dataset directory, verifying it against its manifest."""
    d = Path(path)
    if d.is_file():
        d = d.parent
    manifest = json.loads((d / MANIFEST_NAME).read_text())
    rec_path = d / manifest.get("record_file", RECORDS_NAME)
    raw = rec_path.read_bytes()
    if hashlib.sha256(raw).hexdigest() != manifest["record_sha256"]:
        raise ManifestMismatch("record file hash differs from manifest")
    records = list(iter_records(io.BytesIO(raw)))
    counts = Counter(_count_key(r.labels) for r in records)
    if len(records) != manifest["total"] or dict(counts) != manifest["counts"]:
        raise ManifestMismatch("record counts differ from manifest")
    return Dataset.from_records(records)


# ---------------------------------------------------------------- in-memory view

LABEL_FIELDS = ("category", "power_dbm", "bandwidth_mhz", "scenario", "position_id", "area_id", "angle_deg")


class Dataset:
    """Column view over a list of records of equal ``n_t``."""

    def __init__(self, grids, columns, seeds):
        self.grids = grids
        self.columns = columns
        self.seeds = seeds

    @classmethod
    def from_records(cls, records):
        if not records:
            raise ValueError("no records")
        n_ts = {r.n_t for r in records}
        if len(n_ts) != 1:
            raise ValueError(f"records mix snapshot lengths {sorted(n_ts)}")
        grids = np.stack([r.grid for r in records]).astype(np.float32)
        cols = {f: np.array([getattr(r.labels, f) for r in records]) for f in LABEL_FIELDS}
        seeds = np.array([r.seed for r in records], dtype=np.uint64)
        return cls(grids, cols, seeds)

    def __len__(self):
        return len(self.grids)

    @property
    def n_t(self):
        return self.grids.shape[2]

    def __getitem__(self, key):
        return self.columns[key]

    def subset(self, idx):
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        return Dataset(self.grids[idx], {k: v[idx] for k, v in self.columns.items()}, self.seeds[idx])

    def truncate(self, n_t):
        return Dataset(self.grids[:, :, :n_t], self.columns, self.seeds)

    def concat(self, other):
        return Dataset(np.concatenate([self.grids, other.grids]),
                       {k: np.concatenate([v, other.columns[k]]) for k, v in self.columns.items()},
                       np.concatenate([self.seeds, other.seeds]))

    def records(self):
        for i in range(len(self)):
            lab = Labels(*(self.columns[f][i].item() for f in LABEL_FIELDS))
            yield SnapshotRecord(self.grids[i], lab, int(self.seeds[i]))


def synthesize_in_memory(plan, seed: int, jobs: int = 1) -> Dataset:
    plan = plan if isinstance(plan, Plan) else parse_plan(plan)
    return Dataset.from_records(list(generate(plan, seed, jobs)))
