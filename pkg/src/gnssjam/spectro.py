"""Non-overlapping 1024-point spectrogram snapshots in normalised dB."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .siggen import IQBuffer

NFFT = 1024
MAX_NT = 34
LOG_FLOOR = 1e-12
NORM_MIN_DB = -182.77
NORM_MAX_DB = -17.12


class TooShort(ValueError):
    pass


@dataclass
class Spectrogram:
    grid: np.ndarray  # (1024, n_t), values in [0, 1]
    raw_db_range: tuple = (NORM_MIN_DB, NORM_MAX_DB)

    @property
    def n_t(self):
        return self.grid.shape[1]

    def truncate(self, n_t):
        if not 1 <= n_t <= self.n_t:
            raise ValueError(f"cannot truncate {self.n_t} columns to {n_t}")
        return Spectrogram(self.grid[:, :n_t], self.raw_db_range)

    def replicate(self, channels=3):
        """Stack identical copies along a trailing channel axis."""
        return np.repeat(self.grid[..., None], channels, axis=-1)


def _samples(x):
    return x.samples if isinstance(x, IQBuffer) else np.asarray(x, dtype=np.complex128)


def stft_db(x) -> np.ndarray:
    """``20 log10(|FFT| + 1e-12)`` of consecutive rectangular 1024-sample windows.

    Rows run from -fs/2 to +fs/2 (fft-shifted); a trailing partial window
    is dropped.
    """
    s = _samples(x)
    n_cols = s.size // NFFT
    if n_cols < 1:
        raise TooShort(f"need at least {NFFT} samples, got {s.size}")
    frames = s[: n_cols * NFFT].reshape(n_cols, NFFT)
    spec = np.fft.fftshift(np.fft.fft(frames, axis=1), axes=1)
    return (20.0 * np.log10(np.abs(spec) + LOG_FLOOR)).T


def normalize(raw_db, lo=NORM_MIN_DB, hi=NORM_MAX_DB) -> Spectrogram:
    raw_db = np.asarray(raw_db, dtype=np.float64)
    grid = np.clip((raw_db - lo) / (hi - lo), 0.0, 1.0)
    return Spectrogram(grid, (lo, hi))


def frame_snapshot(x, n_t=MAX_NT) -> Spectrogram:
    if not 1 <= n_t <= MAX_NT:
        raise ValueError(f"n_t must be in 1..{MAX_NT}")
    s = _samples(x)
    if s.size < NFFT * n_t:
        raise TooShort(f"need {NFFT * n_t} samples for n_t={n_t}, got {s.size}")
    return normalize(stft_db(s[: NFFT * n_t]))

