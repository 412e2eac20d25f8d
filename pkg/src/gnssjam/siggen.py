"""Complex-baseband jammer waveforms.

Power reference: 0 dBm is unit mean-square amplitude. All defaults assume
the nominal 100 MHz sample rate, where one 1024-point FFT window spans
10.24 us.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

NOMINAL_RATE = 100e6
WINDOW = 1024
WINDOW_S = WINDOW / NOMINAL_RATE


class InvalidSpec(ValueError):
    pass


class NyquistViolation(InvalidSpec):
    pass


class Category(enum.IntEnum):
    NONE = 0
    NOISE = 1
    CHIRP = 2
    FREQHOPPER = 3
    MODULATED = 4
    MULTITONE = 5
    PULSED = 6

    @classmethod
    def parse(cls, value):
        if isinstance(value, str):
            key = value.strip().upper()
            if key.isdigit():
                return cls(int(key))
            return cls[key]
        return cls(int(value))

    @property
    def label(self):
        return self.name.capitalize() if self is not Category.FREQHOPPER else "FreqHopper"


DEFAULT_PARAMS = {
    "sweep_period_s": WINDOW_S,
    "start_offset_s": 0.0,
    "hop_dwell_s": 2 * WINDOW_S,
    "hop_channels": 8,
    "tone_count": 5,
    "pulse_duty": 0.3,
    "pulse_period_s": 1.5 * WINDOW_S,
    "mod_rate_hz": None,  # None -> bandwidth / 2
}


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; the only randomness source the toolkit uses."""
    return np.random.default_rng(seed)


@dataclass
class IQBuffer:
    samples: np.ndarray
    sample_rate: float = NOMINAL_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("IQBuffer needs a nonempty 1-D sample array")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("IQBuffer samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def mean_power(self):
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class JammerSpec:
    category: Category
    bandwidth_mhz: float = 0.0
    power_dbm: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "category", Category.parse(self.category))
        unknown = set(self.params) - set(DEFAULT_PARAMS)
        if unknown:
            raise InvalidSpec(f"unknown jammer parameters: {sorted(unknown)}")
        if not (self.bandwidth_mhz >= 0 and math.isfinite(self.bandwidth_mhz)):
            raise InvalidSpec("bandwidth_mhz must be finite and >= 0")
        if self.category is Category.NONE and self.bandwidth_mhz != 0:
            raise InvalidSpec("category None carries no bandwidth")
        if self.category is not Category.NONE and not math.isfinite(self.power_dbm):
            raise InvalidSpec("power_dbm must be finite")
        if self.category is Category.MULTITONE and self.param("tone_count") < 2:
            raise InvalidSpec("tone_count must be >= 2")
        if self.category is Category.PULSED and not 0 < self.param("pulse_duty") < 1:
            raise InvalidSpec("pulse_duty must lie in (0, 1)")
        if self.category is Category.FREQHOPPER and self.param("hop_channels") < 1:
            raise InvalidSpec("hop_channels must be >= 1")
        for key in ("sweep_period_s", "hop_dwell_s", "pulse_period_s"):
            if not self.param(key) > 0:
                raise InvalidSpec(f"{key} must be > 0")

    def param(self, key):
        value = self.params.get(key, DEFAULT_PARAMS[key])
        if key == "mod_rate_hz" and value is None:
            value = self.bandwidth_mhz * 1e6 / 2
        return value

    @property
    def bandwidth_hz(self):
        return self.bandwidth_mhz * 1e6


def check_nyquist(spec: JammerSpec, sample_rate: float):
    # two-sided baseband: the band [-BW/2, BW/2] must fit inside [-fs/2, fs/2]
    if spec.bandwidth_hz > sample_rate:
        raise NyquistViolation(
            f"bandwidth {spec.bandwidth_mhz} MHz exceeds the {sample_rate / 1e6:g} MHz baseband span"
        )


def instantaneous_frequency(spec: JammerSpec, t):
    """Chirp frequency law in Hz: a sawtooth from -BW/2 to +BW/2 each sweep."""
    if spec.category is not Category.CHIRP:
        raise InvalidSpec("only the chirp has a deterministic frequency law")
    period = spec.param("sweep_period_s")
    tau = np.mod(np.asarray(t, dtype=np.float64) + spec.param("start_offset_s"), period)
    return -spec.bandwidth_hz / 2 + (spec.bandwidth_hz / period) * tau


def waveform_phase(spec: JammerSpec, t):
    """Deterministic phase (radians) of the chirp at time ``t`` >= 0.

    Within a sweep the phase is ``2*pi*(f0*tau + k*tau**2/2)`` with
    ``f0 = -BW/2``, ``k = BW/period`` and ``tau`` the time since the sweep
    started. A full sweep accumulates exactly zero phase, so the sawtooth is
    phase-continuous across sweep boundaries.
    """
    if spec.category is not Category.CHIRP:
        raise InvalidSpec(f"{spec.category.label} has no deterministic phase law")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise InvalidSpec("t must be >= 0")
    period = spec.param("sweep_period_s")
    bw = spec.bandwidth_hz
    tau = np.mod(t + spec.param("start_offset_s"), period)
    return 2 * np.pi * (-bw / 2 * tau + 0.5 * (bw / period) * tau * tau)


def _bandlimited_noise(n, bw_hz, fs, rng):
    white = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    spec = np.fft.fft(white)
    f = np.fft.fftfreq(n, d=1 / fs)
    spec[np.abs(f) > bw_hz / 2] = 0
    if not np.any(spec):
        spec[0] = white.sum()
    return np.fft.ifft(spec)


def synth(spec: JammerSpec, n_samples: int, sample_rate: float = NOMINAL_RATE, rng=None) -> IQBuffer:
    """Generate ``n_samples`` of the jammer, calibrated to ``spec.power_dbm``.

    ``Category.NONE`` yields zeros; the receiver noise floor is added by the
    channel.
    """
    if n_samples < 1:
        raise InvalidSpec("n_samples must be >= 1")
    check_nyquist(spec, sample_rate)
    if rng is None:
        rng = make_rng(0)
    n = int(n_samples)
    fs = float(sample_rate)
    t = np.arange(n) / fs
    bw = spec.bandwidth_hz
    cat = spec.category

    if cat is Category.NONE:
        return IQBuffer(np.zeros(n, dtype=np.complex128), fs)
    if cat is Category.NOISE:
        x = _bandlimited_noise(n, bw, fs, rng)
    elif cat is Category.CHIRP:
        x = np.exp(1j * waveform_phase(spec, t))
    elif cat is Category.FREQHOPPER:
        k = int(spec.param("hop_channels"))
        grid = hop_grid(spec)
        dwell = spec.param("hop_dwell_s")
        hop_idx = np.floor(t / dwell).astype(np.int64)
        choice = rng.integers(0, k, size=int(hop_idx[-1]) + 1)
        freq = grid[choice[hop_idx]]
        phase = 2 * np.pi * np.concatenate(([0.0], np.cumsum(freq[:-1]) / fs))
        x = np.exp(1j * (phase + rng.uniform(0, 2 * np.pi)))
    elif cat is Category.MODULATED:
        rate = spec.param("mod_rate_hz")
        if rate > 0:
            sym = np.floor(t * rate).astype(np.int64)
            bits = rng.integers(0, 2, size=int(sym[-1]) + 1) * 2 - 1
            x = bits[sym].astype(np.complex128)
        else:
            x = np.ones(n, dtype=np.complex128)
        x = x * np.exp(1j * rng.uniform(0, 2 * np.pi))
    elif cat is Category.MULTITONE:
        freqs = tone_frequencies(spec)
        phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
        x = np.exp(1j * (2 * np.pi * np.outer(t, freqs) + phases)).sum(axis=1)
    elif cat is Category.PULSED:
        # constant-envelope carrier with a band-limited random phase, gated on/off
        carrier = _bandlimited_noise(n, bw, fs, rng)
        carrier = np.exp(1j * np.angle(carrier))
        x = carrier * pulse_gate(spec, t)
    else:  # pragma: no cover
        raise InvalidSpec(f"unhandled category {cat}")

    p = np.mean(np.abs(x) ** 2)
    if p == 0:
        raise InvalidSpec("waveform has zero power")
    x = x * math.sqrt(10 ** (spec.power_dbm / 10) / p)
    return IQBuffer(x, fs)


def hop_grid(spec: JammerSpec):
    k = int(spec.param("hop_channels"))
    if k == 1:
        return np.zeros(1)
    return np.linspace(-spec.bandwidth_hz / 2, spec.bandwidth_hz / 2, k)


def tone_frequencies(spec: JammerSpec):
    return np.linspace(-spec.bandwidth_hz / 2, spec.bandwidth_hz / 2, int(spec.param("tone_count")))


def pulse_gate(spec: JammerSpec, t):
    period = spec.param("pulse_period_s")
    phase = np.mod(np.asarray(t) + spec.param("start_offset_s"), period)
    return (phase < spec.param("pulse_duty") * period).astype(np.float64)


def occupied_bandwidth(x: IQBuffer, level_db=-20.0, nperseg=WINDOW):
    """Two-sided bandwidth (Hz) between the outermost points of the Welch
    spectrum that reach ``level_db`` relative to its peak."""
    from scipy.signal import welch

    f, pxx = welch(x.samples, fs=x.sample_rate, nperseg=min(nperseg, len(x)), return_onesided=False)
    order = np.argsort(f)
    f, pxx = f[order], pxx[order]
    above = np.nonzero(pxx >= pxx.max() * 10 ** (level_db / 10))[0]
    return float(f[above[-1]] - f[above[0]])
