import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relqkd.core_math import SignalAlphabet
from relqkd.errors import CalibrationError, ConfigError
from relqkd.photonics import DetectorModel, InterferometerModel
from relqkd.prng import LfsrState, generate_bits
from relqkd.protocol import (
    SeriesConfig,
    SeriesSeeds,
    TimingSequence,
    calibrate,
    calibrate_loss,
    calibrate_visibility,
    draw_randomness,
    expected_click_probability,
    expected_qber,
    generate_timing_sequence,
    demo_config,
    reconstruct_timing,
    run_series,
    verify_timing,
)
from relqkd.spacetime import ChannelGeometry

G = ChannelGeometry()
IDEAL = InterferometerModel(visibility=1.0)
NO_DARK = DetectorModel(0.3, 0.0)


def _seeds(i: int) -> SeriesSeeds:
    return SeriesSeeds.derive(99, i)


# ---------------------------------------------------------------- timing


def test_timing_sequence_deterministic_and_matches_lfsr():
    a = generate_timing_sequence(8, LfsrState(0x3), G)
    b = generate_timing_sequence(8, LfsrState(0x3), G)
    assert a.choices.tolist() == b.choices.tolist()
    bits, _ = generate_bits(LfsrState(0x3), 8)
    assert a.choices.tolist() == bits.tolist()
    assert len(a) == 8 and a.t0 == G.clock_period and a.late_offset == G.late_offset


def test_timing_sequence_balanced():
    n = 32768
    s = generate_timing_sequence(n, LfsrState(0x2468A), G)
    assert abs(s.choices.mean() - 0.5) <= 3 * 0.5 / math.sqrt(n)
    s = generate_timing_sequence(n, np.random.default_rng(1), G)
    assert abs(s.choices.mean() - 0.5) <= 3 * 0.5 / math.sqrt(n)


def test_timing_sequence_rejects_empty():
    with pytest.raises(ValueError):
        generate_timing_sequence(0, LfsrState(1), G)


def test_emission_times():
    s = TimingSequence(np.array([0, 1, 1]), 4e-6, 2e-6)
    assert s.emission_times() == pytest.approx([0.0, 6e-6, 10e-6])


def test_verify_timing_examples():
    bob = generate_timing_sequence(32768, LfsrState(0x77), G)
    assert verify_timing(bob, TimingSequence(bob.choices.copy(), G.clock_period, G.late_offset)) == (0.0, True)
    flipped = bob.choices.copy()
    flipped[1234] ^= 1
    eta, ok = verify_timing(bob, TimingSequence(flipped, G.clock_period, G.late_offset))
    assert eta == 1 / 32768 and not ok
    with pytest.raises(ValueError):
        verify_timing(bob, TimingSequence(bob.choices[:-1], G.clock_period, G.late_offset))


def test_verify_timing_counts_invalid_cycles():
    bob = TimingSequence(np.array([0, 1, 0, 1]), G.clock_period, G.late_offset)
    seen = TimingSequence(np.array([0, 1, 0, 1]), G.clock_period, G.late_offset, invalid=np.array([0, 0, 1, 0]))
    assert verify_timing(bob, seen) == (0.25, False)


def _pattern(n=2000, seed=5):
    s = generate_timing_sequence(n, np.random.default_rng(seed), G)
    s.choices[0] = 0 if seed % 2 else 1  # exercise both anchors
    return s


@pytest.mark.parametrize("seed", [5, 6])
def test_reconstruct_with_constant_offset(seed):
    bob = _pattern(seed=seed)
    out = reconstruct_timing(bob.emission_times() + 123.456, G)
    assert out.choices.tolist() == bob.choices.tolist()
    assert not out.invalid.any()


def test_reconstruct_with_ns_jitter():
    bob = _pattern()
    jitter = np.random.default_rng(2).uniform(-1e-9, 1e-9, len(bob))
    out = reconstruct_timing(bob.emission_times() + 7.0 + jitter, G)
    assert verify_timing(bob, out) == (0.0, True)


def test_reconstruct_single_shift_flips_one_cycle():
    bob = _pattern()
    arr = bob.emission_times()
    k = 777
    arr[k] += G.late_offset if bob.choices[k] == 0 else -G.late_offset
    out = reconstruct_timing(arr, G)
    diff = np.flatnonzero(out.choices != bob.choices)
    assert diff.tolist() == [k]


def test_reconstruct_flags_unclassifiable_arrival():
    bob = _pattern()
    arr = bob.emission_times()
    arr[10] += G.late_offset * 0.3 + G.clock_period * 0.5
    out = reconstruct_timing(arr, G)
    assert out.invalid[10] and out.invalid.sum() == 1
    eta, ok = verify_timing(bob, out)
    assert eta == 1 / len(bob) and not ok


@settings(max_examples=50)
@given(st.floats(-1e4, 1e4), st.integers(0, 2**32 - 1))
def test_reconstruct_offset_invariance(offset, seed):
    bob = generate_timing_sequence(64, np.random.default_rng(seed), G)
    a = reconstruct_timing(bob.emission_times(), G)
    b = reconstruct_timing(bob.emission_times() + offset, G)
    assert a.choices.tolist() == b.choices.tolist()
    assert a.invalid.tolist() == b.invalid.tolist()


# ---------------------------------------------------------------- config


def test_series_config_validation():
    with pytest.raises(ConfigError, match="n_pulses"):
        demo_config(n_pulses=0).validate()
    with pytest.raises(ConfigError, match="window"):
        demo_config(geometry=ChannelGeometry(detection_window=30e-9)).validate()
    with pytest.raises(ConfigError, match="prng sifting"):
        demo_config(randomness="external", sifting="prng").validate()
    demo_config().validate()


def test_seed_derivation_reproducible_and_distinct():
    a, b = SeriesSeeds.derive(1, 0), SeriesSeeds.derive(1, 1)
    assert a == SeriesSeeds.derive(1, 0)
    assert a != b
    for s in (a, b):
        assert all(0 < v < 1 << 20 for v in (s.alice, s.bob, s.timing))


# ---------------------------------------------------------------- series


def test_perfect_devices_give_zero_qber():
    cfg = demo_config(interferometer=IDEAL, detector=NO_DARK, extra_system_transmittance=1.0)
    for i in range(5):
        r = run_series(replace(cfg, seeds=_seeds(i)))
        assert r.clicks > 100
        assert r.qber == 0.0


def test_zero_efficiency_no_clicks():
    cfg = demo_config(detector=DetectorModel(0.0, 0.0))
    r = run_series(cfg)
    assert r.clicks == 0
    assert r.sifted_alice_bits == [] and r.sifted_bob_bits == []
    assert r.secret_bits_estimate == 0
    assert math.isfinite(r.key_rate)


def test_sifting_rules_hold_at_every_click():
    cfg = demo_config(interferometer=InterferometerModel(0.8), detector=DetectorModel(0.3, 1e-3), seeds=_seeds(3))
    rnd = draw_randomness(cfg)
    r = run_series(cfg)
    assert len(r.sifted_alice_bits) == len(r.sifted_bob_bits) == r.clicks
    a = np.array(r.sifted_alice_bits)
    b = np.array(r.sifted_bob_bits)
    assert r.qber == pytest.approx(np.mean(a != b))
    assert set(a.tolist()) <= {0, 1} and set(b.tolist()) <= {0, 1}
    assert rnd.bits_alice.size == cfg.n_pulses


def test_sifting_rules_against_click_positions(monkeypatch):
    import relqkd.protocol as proto

    cfg = demo_config(interferometer=InterferometerModel(0.7), detector=DetectorModel(0.5, 1e-3), seeds=_seeds(4))
    seen = {}
    orig = proto.sample_clicks

    def spy(cfg_, rnd, long_amp, short_amp):
        mask = orig(cfg_, rnd, long_amp, short_amp)
        seen["mask"], seen["rnd"] = mask, rnd
        return mask

    monkeypatch.setattr(proto, "sample_clicks", spy)
    r = proto.run_series(cfg)
    idx = np.flatnonzero(seen["mask"])
    rnd = seen["rnd"]
    assert r.sifted_bob_bits == (1 - rnd.bits_bob[idx]).tolist()
    assert r.sifted_alice_bits == rnd.bits_alice[idx].tolist()
    errors = np.array(r.sifted_alice_bits) != np.array(r.sifted_bob_bits)
    assert errors.tolist() == (rnd.bits_alice[idx] == rnd.bits_bob[idx]).tolist()


def test_prng_and_announce_sifting_identical():
    for i in range(5):
        cfg = demo_config(seeds=_seeds(i), extra_system_transmittance=0.5)
        a = run_series(cfg).to_dict()
        b = run_series(replace(cfg, sifting="announce")).to_dict()
        assert a == b


def test_series_is_deterministic():
    cfg = demo_config(seeds=_seeds(8))
    assert run_series(cfg).to_dict() == run_series(cfg).to_dict()


def test_external_randomness_mode_runs():
    r = run_series(demo_config(randomness="external", sifting="announce", seeds=_seeds(1)))
    assert r.timing_ok and r.clicks > 0


def test_report_consistency_over_many_settings():
    for i, (v, t) in enumerate([(0.99, 1.0), (0.6, 1.0), (0.2, 1.0), (0.99, 0.05)]):
        cfg = demo_config(interferometer=InterferometerModel(v), extra_system_transmittance=t, seeds=_seeds(i), n_pulses=4096)
        r = run_series(cfg)
        assert 0.0 <= r.qber <= 1.0
        assert r.secret_bits_estimate == (max(0, round(r.key_rate * r.clicks)) if r.timing_ok else 0)
        if r.key_rate <= 0 or not r.timing_ok:
            assert r.secret_bits_estimate == 0


def test_timing_jitter_tolerated():
    r = run_series(demo_config(timing_jitter=1e-9, seeds=_seeds(2)))
    assert r.timing_ok and r.eta_timing == 0.0


def test_sampled_qber_estimator():
    cfg = demo_config(interferometer=InterferometerModel(0.5), qber_sample_fraction=0.5, seeds=_seeds(0))
    r = run_series(cfg)
    full = run_series(replace(cfg, qber_sample_fraction=None))
    assert r.clicks == full.clicks
    assert abs(r.qber - full.qber) < 0.2


MC_GRID = [
    # mu, phi_deg, V, T_extra, dark
    (0.1, 130, 0.99, 1.0, 1e-5),
    (0.5, 90, 0.9, 0.3, 1e-3),
    (1.0, 180, 1.0, 0.05, 0.0),
    (0.05, 60, 0.7, 1.0, 1e-2),
]


@pytest.mark.parametrize("mu, phi, v, t, dark", MC_GRID)
def test_click_rate_matches_analytic(mu, phi, v, t, dark):
    n = 131072
    cfg = demo_config(
        n_pulses=n,
        alphabet=SignalAlphabet.from_degrees(mu, phi),
        interferometer=InterferometerModel(v),
        detector=DetectorModel(0.3, dark),
        extra_system_transmittance=t,
        seeds=_seeds(11),
    )
    p = expected_click_probability(cfg)
    r = run_series(cfg)
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(r.clicks / n - p) <= 3 * sigma


def test_expected_qber_zero_for_ideal_devices():
    assert expected_qber(demo_config(interferometer=IDEAL, detector=NO_DARK)) == 0.0


# ---------------------------------------------------------------- calibration


def _closed_form_t_extra(target, cfg):
    a = cfg.alphabet
    p = 2 * target / cfg.n_pulses
    return -math.log(1 - p) / (cfg.detector.efficiency * a.mu * math.sin(a.phi / 2) ** 2 * cfg.channel_transmittance_one_way)


@pytest.mark.parametrize("target", [1.0, 16.1, 100.0, 200.0])
def test_calibrate_loss_matches_closed_form_with_ideal_devices(target):
    cfg = demo_config(interferometer=IDEAL, detector=NO_DARK)
    t = calibrate_loss(target, cfg)
    assert t == pytest.approx(_closed_form_t_extra(target, cfg), rel=2e-6)


def test_calibrate_loss_demo_target_value():
    cfg = demo_config(interferometer=IDEAL, detector=NO_DARK)
    assert calibrate_loss(16.1, cfg) == pytest.approx(0.0796, abs=1e-4)


def test_calibrate_loss_hits_target():
    cfg = demo_config()
    t = calibrate_loss(16.1, cfg)
    got = cfg.n_pulses * expected_click_probability(replace(cfg, extra_system_transmittance=t))
    assert got == pytest.approx(16.1, rel=1e-5)


def test_calibrate_loss_boundaries():
    cfg = demo_config(detector=NO_DARK)
    top = cfg.n_pulses * expected_click_probability(replace(cfg, extra_system_transmittance=1.0))
    assert calibrate_loss(top, cfg) == 1.0
    with pytest.raises(CalibrationError, match="T_extra = 0"):
        calibrate_loss(0.0, cfg)
    with pytest.raises(CalibrationError, match="maximum"):
        calibrate_loss(top * 1.01, cfg)


def test_calibrate_visibility_and_joint_fit():
    cfg = demo_config()
    v = calibrate_visibility(0.035, cfg)
    assert expected_qber(replace(cfg, interferometer=InterferometerModel(v))) == pytest.approx(0.035, abs=1e-8)
    fitted = calibrate(cfg, 16.1, 0.035)
    assert expected_qber(fitted) == pytest.approx(0.035, abs=1e-8)
    assert fitted.n_pulses * expected_click_probability(fitted) == pytest.approx(16.1, rel=1e-8)
    with pytest.raises(CalibrationError):
        calibrate_visibility(0.9, cfg)


def test_shipped_constants_reproduce_calibration():
    from relqkd.config import load_config

    cfg = load_config().series_config(0)
    fitted = calibrate(demo_config(), 16.1, 0.035)
    assert cfg.interferometer.visibility == pytest.approx(fitted.interferometer.visibility, rel=1e-9)
    assert cfg.extra_system_transmittance == pytest.approx(fitted.extra_system_transmittance, rel=1e-6)


def test_series_config_default_is_valid():
    SeriesConfig().validate()
