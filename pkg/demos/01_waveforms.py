# Jammer waveforms, their power and bandwidth, and what they look like as spectrograms.
# Run: python3 demos/01_waveforms.py   (writes SVGs to demos/out/)
# %%
from pathlib import Path

import numpy as np

from gnssjam.eval import svgplot
from gnssjam.siggen import Category, JammerSpec, make_rng, occupied_bandwidth, synth
from gnssjam.spectro import frame_snapshot

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
FS = 100e6
n_t = 34

# %% one example per category at 6 dBm
specs = {
    Category.NOISE: JammerSpec(Category.NOISE, 20.0, 6.0),
    Category.CHIRP: JammerSpec(Category.CHIRP, 40.0, 6.0),
    Category.FREQHOPPER: JammerSpec(Category.FREQHOPPER, 35.0, 6.0),
    Category.MODULATED: JammerSpec(Category.MODULATED, 10.0, 6.0),
    Category.MULTITONE: JammerSpec(Category.MULTITONE, 20.0, 6.0),
    Category.PULSED: JammerSpec(Category.PULSED, 5.0, 6.0),
}
for cat, spec in specs.items():
    x = synth(spec, 1024 * n_t, FS, make_rng(int(cat)))
    p_dbm = 10 * np.log10(x.mean_power())
    bw = occupied_bandwidth(x) / 1e6
    print(f"{cat.label:11s} power {p_dbm:5.2f} dBm  nominal {spec.bandwidth_mhz:5.1f} MHz  measured -20 dB width {bw:6.2f} MHz")

# %% spectrograms (frequency rows pooled 16x so the SVG stays small)
for cat, spec in specs.items():
    x = synth(spec, 1024 * n_t, FS, make_rng(int(cat)))
    x.samples *= 10 ** (-100 / 20)  # front-end gain used by the dataset pipeline
    grid = frame_snapshot(x, n_t).grid
    small = grid.reshape(64, 16, n_t).mean(axis=1)
    svg = svgplot.heatmap(small, [""] * 64, [str(i) if i % 5 == 0 else "" for i in range(n_t)],
                          title=f"{cat.label} (normalised dB)", vmin=0, vmax=1, cell=8, fmt="",
                          xlabel="FFT window", ylabel="frequency")
    (out / f"spectrogram_{cat.label.lower()}.svg").write_text(svg)
print("spectrograms written to", out)
