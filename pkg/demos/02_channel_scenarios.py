# How the twelve channel presets change what reaches the receiver.
# Run: python3 demos/02_channel_scenarios.py
# %%
from pathlib import Path

import numpy as np

from gnssjam.channel import HEAVY_ABSORPTION, POSITIONS, SCENARIOS, apply_channel, received_snr_db, scenario_preset
from gnssjam.eval import svgplot
from gnssjam.siggen import Category, JammerSpec, make_rng, synth

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# %% band-averaged SNR of a 6 dBm jammer per preset
for key in SCENARIOS:
    p = scenario_preset(key)
    tag = "heavy absorption" if key in HEAVY_ABSORPTION else ""
    print(f"scenario {key:>3s}: direct {p.direct_gain_db:6.1f} dB, {len(p.rays)} rays, "
          f"SNR at 6 dBm {received_snr_db(6.0, p):6.2f} dB  {tag}")

# %% averaged spectrum of the same noise jammer through a mild and a heavy preset
x = synth(JammerSpec(Category.NOISE, 20.0, 6.0), 1024 * 34, 100e6, make_rng(0))
freqs = np.fft.fftshift(np.fft.fftfreq(1024, 1 / 100e6)) / 1e6
series = {}
for key in ("1a", "2", "8"):
    y = apply_channel(x, scenario_preset(key), POSITIONS[13], make_rng(1)).samples.reshape(34, 1024)
    psd = (np.abs(np.fft.fftshift(np.fft.fft(y, axis=1), axes=1)) ** 2).mean(axis=0) / 1024
    series[f"scenario {key}"] = (10 * np.log10(psd)).reshape(64, 16).mean(axis=1).tolist()
svg = svgplot.line_chart(freqs.reshape(64, 16).mean(axis=1).tolist(), series,
                         title="20 MHz noise jammer after the channel", xlabel="MHz", ylabel="dB per bin")
(out / "channel_spectra.svg").write_text(svg)
print("wrote", out / "channel_spectra.svg")
