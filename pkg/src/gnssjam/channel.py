"""Scenario presets and the static multipath channel.

Geometry: a 44 m x 30 m hall with the receiving antenna at the midpoint of
one short wall, at the origin, boresight along +x. Bearings are measured
counter-clockwise from boresight.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .siggen import IQBuffer

HALL_LENGTH_M = 44.0
HALL_WIDTH_M = 30.0
NOISE_FLOOR_DB = -50.0
MAX_RAYS = 8

# canonical scenario order for result matrices
SCENARIOS = ["1a", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "1b"]
HEAVY_ABSORPTION = ("4", "7", "8")


class UnknownScenario(KeyError):
    pass


class DelayTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Ray:
    delay_s: float
    gain_db: float
    phase: float | None = None  # None -> drawn uniformly per snapshot

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("ray delay must be >= 0")
        if self.gain_db > 0:
            raise ValueError("ray gain must be <= 0 dB")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: int
    variant: str = ""
    direct_gain_db: float = 0.0
    rays: tuple = ()
    noise_floor_db: float = NOISE_FLOOR_DB

    def __post_init__(self):
        object.__setattr__(self, "rays", tuple(r if isinstance(r, Ray) else Ray(**r) for r in self.rays))
        if not 1 <= self.scenario_id <= 11:
            raise ValueError("scenario_id must be in 1..11")
        if self.variant not in ("", "a", "b"):
            raise ValueError("variant must be '', 'a' or 'b'")
        if self.direct_gain_db > 0:
            raise ValueError("direct gain must be <= 0 dB")
        if len(self.rays) > MAX_RAYS:
            raise ValueError(f"at most {MAX_RAYS} rays")

    @property
    def key(self):
        return f"{self.scenario_id}{self.variant}"

    def to_dict(self):
        return {
            "scenario_id": self.scenario_id,
            "variant": self.variant,
            "direct_gain_db": self.direct_gain_db,
            "rays": [{"delay_s": r.delay_s, "gain_db": r.gain_db, "phase": r.phase} for r in self.rays],
            "noise_floor_db": self.noise_floor_db,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            scenario_id=int(d["scenario_id"]),
            variant=d.get("variant", ""),
            direct_gain_db=float(d["direct_gain_db"]),
            rays=tuple(Ray(**r) for r in d.get("rays", [])),
            noise_floor_db=float(d.get("noise_floor_db", NOISE_FLOOR_DB)),
        )


def parse_scenario(key) -> tuple[int, str]:
    s = str(key).strip().lower()
    if s == "1":
        s = "1a"
    if s not in SCENARIOS:
        raise UnknownScenario(key)
    return (1, s[1]) if s.startswith("1") and len(s) == 2 and s[1] in "ab" else (int(s), "")


def _load_builtin():
    text = resources.files("gnssjam.data").joinpath("channel_presets.json").read_text()
    return load_presets_json(text)


def load_presets_json(text) -> dict:
    doc = json.loads(text)
    return {k: ScenarioConfig.from_dict(v) for k, v in doc["presets"].items()}


def load_presets(path) -> dict:
    with open(path) as f:
        return load_presets_json(f.read())


def presets_json(presets=None) -> str:
    presets = PRESETS if presets is None else presets
    doc = {
        "units": {
            "direct_gain_db": "dB re unit amplitude, applied to the line-of-sight path",
            "rays": "discrete echoes: delay_s seconds, gain_db dB re unit, phase radians or null (random per snapshot)",
            "noise_floor_db": "mean-square power of the additive complex Gaussian noise, dB re unit",
        },
        "presets": {k: presets[k].to_dict() for k in SCENARIOS if k in presets},
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def export_presets(path, presets=None):
    with open(path, "w") as f:
        f.write(presets_json(presets))


def presets_hash(presets=None) -> str:
    return hashlib.sha256(presets_json(presets).encode()).hexdigest()


PRESETS = _load_builtin()


def scenario_preset(key, presets=None) -> ScenarioConfig:
    """Built-in channel constants for scenario ``1a``, ``1b``, ``2`` ... ``11``."""
    parse_scenario(key)
    s = str(key).strip().lower()
    s = "1a" if s == "1" else s
    table = PRESETS if presets is None else presets
    try:
        return table[s]
    except KeyError:
        raise UnknownScenario(key) from None


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class PositionLabel:
    position_id: int
    area_id: int
    on_gallery: bool
    xy_m: tuple
    angle_deg: float

    @property
    def distance_m(self):
        return math.hypot(*self.xy_m)


def bearing_deg(xy) -> float:
    return math.degrees(math.atan2(xy[1], xy[0])) % 360.0


def area_of(xy) -> int:
    """Antenna-facing bearing quadrant: 0 = far right ... 3 = far left."""
    signed = math.degrees(math.atan2(xy[1], xy[0]))
    return int(min(max(math.floor((signed + 90.0) / 45.0), 0), 3))


def _label(pid, xy, gallery):
    xy = (float(xy[0]), float(xy[1]))
    return PositionLabel(pid, area_of(xy), gallery, xy, bearing_deg(xy))


def position_grid() -> list:
    """16 hall positions (4 x 4 cell centres) then 30 gallery positions
    along the far wall and both long walls."""
    out = []
    xs = (np.arange(4) + 0.5) * HALL_LENGTH_M / 4
    ys = (np.arange(4) + 0.5) * HALL_WIDTH_M / 4 - HALL_WIDTH_M / 2
    for x in xs:
        for y in ys:
            out.append(_label(len(out), (x, y), False))
    half = HALL_WIDTH_M / 2
    for y in np.linspace(-half + 1.5, half - 1.5, 10):
        out.append(_label(len(out), (HALL_LENGTH_M, y), True))
    for side in (half, -half):
        for x in np.linspace(4.0, 40.0, 10):
            out.append(_label(len(out), (x, side), True))
    return out


POSITIONS = position_grid()
# generator spot used for all "fixed position" recordings
FIXED_POSITION_ID = 13
REFERENCE_DISTANCE_M = POSITIONS[FIXED_POSITION_ID].distance_m


def position(pid) -> PositionLabel:
    return POSITIONS[int(pid)]


def distance_loss_db(pos: PositionLabel | None, d_ref=REFERENCE_DISTANCE_M) -> float:
    if pos is None:
        return 0.0
    return 20.0 * math.log10(pos.distance_m / d_ref)


# ---------------------------------------------------------------- channel

def apply_channel(x: IQBuffer, cfg: ScenarioConfig, pos: PositionLabel | None = None, rng=None,
                  d_ref=REFERENCE_DISTANCE_M) -> IQBuffer:
    """Direct path + delayed echoes + receiver noise.

    ``y[n] = g_d x[n] + sum_r g_r exp(j phi_r) x[n - d_r] + w[n]``; every gain
    also carries the free-space loss of ``pos`` relative to ``d_ref``.
    Delayed copies are zero-filled at the head, keeping the input length.
    """
    fs = x.sample_rate
    n = len(x)
    delays = [int(round(r.delay_s * fs)) for r in cfg.rays]
    if any(d >= n for d in delays):
        raise DelayTooLarge("ray delay exceeds the buffer duration")
    if rng is None:
        rng = np.random.default_rng(0)
    loss = 10 ** (-distance_loss_db(pos, d_ref) / 20)
    src = x.samples
    y = (10 ** (cfg.direct_gain_db / 20) * loss) * src
    for r, d in zip(cfg.rays, delays):
        phi = rng.uniform(0, 2 * np.pi) if r.phase is None else r.phase
        g = 10 ** (r.gain_db / 20) * loss * np.exp(1j * phi)
        if d == 0:
            y = y + g * src
        else:
            y[d:] += g * src[:-d]
    if math.isfinite(cfg.noise_floor_db):
        sigma = math.sqrt(10 ** (cfg.noise_floor_db / 10) / 2)
        y = y + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return IQBuffer(y, fs)


def received_snr_db(signal_power_dbm, cfg: ScenarioConfig, pos: PositionLabel | None = None):
    """Band-averaged SNR: mean received jammer power over the noise floor
    (equal to the mean per-FFT-bin SNR), ignoring echo interference."""
    loss = distance_loss_db(pos)
    total = 10 ** ((cfg.direct_gain_db - loss) / 10) + sum(10 ** ((r.gain_db - loss) / 10) for r in cfg.rays)
    return signal_power_dbm + 10 * math.log10(total) - cfg.noise_floor_db
