import json
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnssjam.channel import (
    FIXED_POSITION_ID,
    HEAVY_ABSORPTION,
    POSITIONS,
    PRESETS,
    REFERENCE_DISTANCE_M,
    SCENARIOS,
    DelayTooLarge,
    Ray,
    ScenarioConfig,
    UnknownScenario,
    apply_channel,
    bearing_deg,
    distance_loss_db,
    load_presets_json,
    position_grid,
    presets_hash,
    presets_json,
    received_snr_db,
    scenario_preset,
)
from gnssjam.siggen import Category, IQBuffer, JammerSpec, make_rng, synth

FS = 100e6
AT_REF = POSITIONS[FIXED_POSITION_ID]


def white(n, seed=0):
    rng = np.random.default_rng(seed)
    return IQBuffer((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2), FS)


def quiet(cfg, **kw):
    d = cfg.to_dict()
    d.update(kw)
    d["noise_floor_db"] = -math.inf
    return ScenarioConfig.from_dict(d)


def test_scenario_1a_preset():
    p = scenario_preset("1a")
    assert (p.direct_gain_db, p.rays, p.noise_floor_db) == (0.0, (), -50.0)
    assert scenario_preset("1") is p


def test_identity_channel():
    x = white(4096)
    y = apply_channel(x, quiet(scenario_preset("1a")), AT_REF, make_rng(0))
    assert np.array_equal(y.samples, x.samples)


def test_direct_gain_scales_power():
    x = white(8192, 1)
    cfg = ScenarioConfig(2, direct_gain_db=-20.0, noise_floor_db=-math.inf)
    y = apply_channel(x, cfg, AT_REF)
    assert y.mean_power() == pytest.approx(x.mean_power() * 0.01, rel=1e-9)


def test_two_ray_comb_nulls():
    # |1 + exp(-j 2 pi f tau)|^2 vanishes at f = (2k + 1) / (2 tau)
    tau = 0.32e-6
    cfg = ScenarioConfig(2, direct_gain_db=0.0, rays=(Ray(tau, 0.0, 0.0),), noise_floor_db=-math.inf)
    n, seg = 2**17, 1024 * 8
    x = white(n, 2)
    y = apply_channel(x, cfg, AT_REF)
    xs = x.samples.reshape(-1, seg)[1:]  # drop the zero-filled head
    ys = y.samples.reshape(-1, seg)[1:]
    f = np.fft.fftfreq(seg, 1 / FS)
    ratio = (np.abs(np.fft.fft(ys, axis=1)) ** 2).mean(0) / (np.abs(np.fft.fft(xs, axis=1)) ** 2).mean(0)
    oracle = np.abs(1 + np.exp(-2j * np.pi * f * tau)) ** 2
    for k in range(-5, 5):
        null = (2 * k + 1) / (2 * tau)
        i = np.argmin(np.abs(f - null))
        assert abs(f[i] - null) < 1e-6 * FS
        assert ratio[i] < 0.05
    peaks = np.abs(f - np.round(f * tau) / tau) < FS / seg / 2
    assert np.allclose(ratio[peaks], 4.0, rtol=0.1)
    assert np.corrcoef(ratio, oracle)[0, 1] > 0.98
    assert (2 * 0 + 1) / (2 * tau) == pytest.approx(1.5625e6)
    assert 1 / tau == pytest.approx(3.125e6)


@given(a=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False), seed=st.integers(0, 99),
       scen=st.sampled_from(SCENARIOS))
def test_linearity_without_noise(a, seed, scen):
    cfg = quiet(scenario_preset(scen))
    x = white(2048, seed)
    y1 = apply_channel(IQBuffer(a * x.samples, FS), cfg, POSITIONS[3], make_rng(seed)).samples
    y2 = a * apply_channel(x, cfg, POSITIONS[3], make_rng(seed)).samples
    assert np.allclose(y1, y2, rtol=1e-12, atol=1e-12 * max(1.0, abs(a)))


@given(g1=st.floats(-80, 0), g2=st.floats(-80, 0), scen=st.sampled_from(SCENARIOS))
def test_snr_monotone_in_direct_gain(g1, g2, scen):
    lo, hi = sorted((g1, g2))
    d = scenario_preset(scen).to_dict()
    snr = {}
    for g in (lo, hi):
        d["direct_gain_db"] = g
        snr[g] = received_snr_db(6.0, ScenarioConfig.from_dict(d))
    assert snr[lo] <= snr[hi]


def test_measured_snr_follows_direct_gain():
    x = synth(JammerSpec(Category.NOISE, 40.0, 6.0), 34 * 1024, FS, make_rng(0))
    powers = []
    for g in (0.0, -20.0, -40.0):
        y = apply_channel(x, ScenarioConfig(2, direct_gain_db=g), AT_REF, make_rng(1))
        powers.append(y.mean_power())
    assert powers[0] > powers[1] > powers[2]


def test_determinism():
    x = white(4096)
    a = apply_channel(x, scenario_preset("6"), POSITIONS[20], make_rng(9)).samples
    b = apply_channel(x, scenario_preset("6"), POSITIONS[20], make_rng(9)).samples
    assert a.tobytes() == b.tobytes()


def test_noise_floor_power():
    x = IQBuffer(np.zeros(2**16, dtype=complex), FS)
    y = apply_channel(x, scenario_preset("1a"), AT_REF, make_rng(0))
    assert 10 * math.log10(y.mean_power()) == pytest.approx(-50.0, abs=0.05)


def test_delay_too_large():
    cfg = ScenarioConfig(3, rays=(Ray(20e-6, -3.0),))
    with pytest.raises(DelayTooLarge):
        apply_channel(white(1024), cfg)


def test_preset_table_constraints():
    for key in SCENARIOS:
        p = scenario_preset(key)
        assert p.noise_floor_db == -50.0
        assert p.direct_gain_db <= 0 and len(p.rays) <= 8
        assert all(r.gain_db <= 0 and 0 <= r.delay_s < 34 * 1024 / FS for r in p.rays)
    for key in HEAVY_ABSORPTION:
        assert scenario_preset(key).direct_gain_db <= -40
        # "complete absorption": band-averaged SNR below 0 dB at 6 dBm
        assert received_snr_db(6.0, scenario_preset(key)) < 0
    for key in ("2", "3"):
        p = scenario_preset(key)
        assert p.direct_gain_db >= -6 and 2 <= len(p.rays) <= 4
    p2 = scenario_preset("2")
    assert p2.direct_gain_db == -3.0 and len(p2.rays) == 2
    assert scenario_preset("1b").direct_gain_db == 0.0 and scenario_preset("1b").rays == ()


def test_heavy_presets_measured_snr_below_zero():
    x = synth(JammerSpec(Category.NOISE, 40.0, 6.0), 34 * 1024, FS, make_rng(0))
    for key in HEAVY_ABSORPTION:
        cfg = scenario_preset(key)
        sig = apply_channel(x, quiet(cfg), AT_REF, make_rng(1)).mean_power()
        assert 10 * math.log10(sig) - cfg.noise_floor_db < 0


def test_unknown_scenario():
    for bad in ("12", "0", "1c", "x"):
        with pytest.raises(UnknownScenario):
            scenario_preset(bad)


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(2, rays=tuple(Ray(1e-7 * i, -3.0) for i in range(9)))
    with pytest.raises(ValueError):
        ScenarioConfig(12)
    with pytest.raises(ValueError):
        ScenarioConfig(2, direct_gain_db=1.0)
    with pytest.raises(ValueError):
        Ray(-1e-9, -3.0)


def test_presets_json_round_trip():
    shipped = resources.files("gnssjam").joinpath("data/channel_presets.json").read_text()
    assert presets_json() == shipped
    assert load_presets_json(shipped) == PRESETS
    assert list(json.loads(shipped)) is not None
    assert len(presets_hash()) == 64


def test_position_grid():
    grid = position_grid()
    assert len(grid) == 46
    hall = [p for p in grid if not p.on_gallery]
    gallery = [p for p in grid if p.on_gallery]
    assert len(hall) == 16 and len(gallery) == 30
    assert all(p.on_gallery == (p.position_id >= 16) for p in grid)
    assert [p.position_id for p in grid] == list(range(46))
    assert {p.area_id for p in hall} == {0, 1, 2, 3}
    assert all(0 <= p.angle_deg < 360 for p in grid)
    # hall footprint 44 m x 30 m, antenna at the middle of the x = 0 wall
    assert all(0 < p.xy_m[0] < 44 and -15 < p.xy_m[1] < 15 for p in hall)
    xs = sorted({p.xy_m[0] for p in hall})
    ys = sorted({p.xy_m[1] for p in hall})
    assert len(xs) == 4 and len(ys) == 4
    assert (xs[-1] - xs[0] + 11) * (ys[-1] - ys[0] + 7.5) == pytest.approx(1320.0)


def test_bearing_convention():
    assert bearing_deg((5.0, 0.0)) == 0.0
    assert bearing_deg((0.0, 3.0)) == pytest.approx(90.0)
    assert bearing_deg((0.0, -3.0)) == pytest.approx(270.0)


def test_distance_loss():
    assert distance_loss_db(AT_REF) == 0.0
    assert AT_REF.distance_m == REFERENCE_DISTANCE_M
    far = max(POSITIONS, key=lambda p: p.distance_m)
    assert distance_loss_db(far) == pytest.approx(20 * math.log10(far.distance_m / REFERENCE_DISTANCE_M))
    assert distance_loss_db(None) == 0.0
