"""GJNN single-file model checkpoints.

Layout (little-endian)::

    b"GJNN"  u16 version
    u32 n    n bytes of UTF-8 JSON: arch, heads, block names and shapes
    for each weight block, then each scale block: float32 values, C order
    u16 k    k x (u16 len, task id bytes, f64 mean, f64 std)
"""

import json
import struct

import numpy as np

from .model import NetworkParams, TaskHead

MAGIC = b"GJNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_checkpoint(params: NetworkParams) -> bytes:
    wnames = list(params.weights)
    snames = list(params.scales)
    desc = {
        "arch": params.arch,
        "heads": [{"task_id": h.task_id, "kind": h.kind, "n_c": h.n_c, "weight": h.weight} for h in params.heads],
        "weights": [[k, list(params.weights[k].shape)] for k in wnames],
        "scales": [[k, list(params.scales[k].shape)] for k in snames],
    }
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob]
    for k in wnames:
        parts.append(np.ascontiguousarray(params.weights[k], dtype="<f4").tobytes())
    for k in snames:
        parts.append(np.ascontiguousarray(params.scales[k], dtype="<f4").tobytes())
    stats = sorted(params.target_stats.items())
    parts.append(struct.pack("<H", len(stats)))
    for task, (mean, std) in stats:
        tb = task.encode()
        parts.append(struct.pack("<H", len(tb)) + tb + struct.pack("<dd", mean, std))
    return b"".join(parts)


def parse_checkpoint(buf: bytes) -> NetworkParams:
    if buf[:4] != MAGIC:
        raise CheckpointError("bad magic, not a GJNN checkpoint")
    try:
        version, n = struct.unpack_from("<HI", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 10
        desc = json.loads(buf[off:off + n].decode())
        off += n

        def take(shape):
            nonlocal off
            count = int(np.prod(shape)) if shape else 1
            end = off + 4 * count
            if end > len(buf):
                raise CheckpointError("truncated checkpoint")
            arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
            off = end
            return arr

        weights = {k: take(shape) for k, shape in desc["weights"]}
        scales = {k: take(shape) for k, shape in desc["scales"]}
        (k,) = struct.unpack_from("<H", buf, off)
        off += 2
        stats = {}
        for _ in range(k):
            (ln,) = struct.unpack_from("<H", buf, off)
            off += 2
            task = buf[off:off + ln].decode()
            off += ln
            stats[task] = struct.unpack_from("<dd", buf, off)
            off += 16
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if off != len(buf):
        raise CheckpointError("trailing bytes after checkpoint")
    heads = [TaskHead(**h) for h in desc["heads"]]
    return NetworkParams(arch=desc["arch"], weights=weights, scales=scales, heads=heads, target_stats=stats)


def save_checkpoint(path, params: NetworkParams):
    with open(path, "wb") as f:
        f.write(dump_checkpoint(params))


def load_checkpoint(path) -> NetworkParams:
    with open(path, "rb") as f:
        return parse_checkpoint(f.read())
