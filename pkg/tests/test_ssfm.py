"""Split-step propagation: conservation laws, exact limits, convergence."""

import numpy as np
import pytest

from wdmrx.physparams import FiberParams, dbm_to_watts, derive
from wdmrx.ssfm import SsfmCfg, WdmFrame, demux_and_cdc, mux, propagate
from wdmrx.waveform import SampledWaveform, energy, make_pulse, modulate, qam16

T = 1e-10
DELTA_F = 40e9


def _fiber(**overrides):
    base = dict(span_length=150.0, attenuation_db=0.25, gamma=1.27, n_span=1,
                symbol_rate=1e10, photon_energy=1.28e-19, noise_figure_db=6.0,
                beta2=-1.27, channel_spacing=DELTA_F)
    base.update(overrides)
    return FiberParams(**base)


def _frame(fiber, power_dbm, n_symbols=64, sps=32, seed=0):
    rng = np.random.default_rng(seed)
    es = dbm_to_watts(power_dbm) * T
    const = qam16(es)
    pulse = make_pulse("truncated_gaussian", sps, T)
    ch1 = modulate(const.points[rng.integers(0, 16, size=n_symbols)], pulse)
    ch2 = modulate(const.points[rng.integers(0, 16, size=n_symbols)], pulse)
    return mux(ch1, ch2, fiber.channel_spacing)


def test_cfg_validation():
    fiber = _fiber()
    with pytest.raises(ValueError, match="step_km"):
        SsfmCfg(fiber=fiber, step_km=0.0)
    with pytest.raises(ValueError, match="guard"):
        SsfmCfg(fiber=fiber, guard_symbols=-1)
    with pytest.raises(ValueError, match="payload"):
        SsfmCfg(fiber=fiber, n_symbols_per_block=32, guard_symbols=16,
                samples_per_symbol=64)
    with pytest.raises(ValueError, match="power of two"):
        SsfmCfg(fiber=fiber, n_symbols_per_block=100, samples_per_symbol=30)
    cfg = SsfmCfg(fiber=fiber, n_symbols_per_block=128, guard_symbols=16,
                  samples_per_symbol=32)
    assert cfg.block_samples == 4096
    assert cfg.payload_symbols == 96


def test_mux_validation():
    fiber = _fiber()
    pulse = make_pulse("rectangular", 32, T)
    ch = modulate(np.ones(4, dtype=complex), pulse)
    with pytest.raises(ValueError, match="delta_f"):
        mux(ch, ch, -1.0)
    short = modulate(np.ones(3, dtype=complex), pulse)
    with pytest.raises(ValueError, match="grid"):
        mux(ch, short, DELTA_F)
    other_grid = modulate(np.ones(4, dtype=complex), make_pulse("rectangular", 16, T))
    with pytest.raises(ValueError, match="grid"):
        mux(ch, other_grid, DELTA_F)
    # 32 samples per 100 ps symbol sample at 320 GHz; spacing beyond 213 GHz
    # leaves no room for the upper channel's slot
    with pytest.raises(ValueError, match="aliases"):
        mux(ch, ch, 230e9)


def test_mux_confines_each_channel_to_its_slot():
    fiber = _fiber()
    frame = _frame(fiber, 0.0)
    spectrum = np.fft.fft(frame.baseband.samples)
    freqs = np.fft.fftfreq(spectrum.size, frame.baseband.dt)
    lower = np.abs(freqs + DELTA_F / 2) <= DELTA_F / 4 * (1 + 1e-9)
    upper = np.abs(freqs - DELTA_F / 2) <= DELTA_F / 4 * (1 + 1e-9)
    total = np.sum(np.abs(spectrum) ** 2)
    out_of_band = np.sum(np.abs(spectrum[~(lower | upper)]) ** 2)
    assert out_of_band <= 1e-20 * total


def test_energy_conservation_without_loss():
    """Dispersion and Kerr phase are unitary: lossless, noiseless runs
    preserve the discrete energy to round-off."""
    fiber = _fiber(attenuation_db=0.0)
    frame = _frame(fiber, 6.0)
    cfg = SsfmCfg(fiber=fiber, step_km=0.1, n_symbols_per_block=64,
                  guard_symbols=8, samples_per_symbol=32)
    out = propagate(frame, cfg)
    assert energy(out.baseband) == pytest.approx(energy(frame.baseband),
                                                 rel=1e-12)


def test_linear_roundtrip_is_exact():
    """With gamma = 0 the link is dispersion, loss, and gain only; the
    receiver-side inverse filter must restore both channels exactly."""
    fiber = _fiber(gamma=0.0, beta2=-21.7)
    frame = _frame(fiber, 2.0)
    cfg = SsfmCfg(fiber=fiber, step_km=2.0, n_symbols_per_block=64,
                  guard_symbols=8, samples_per_symbol=32)
    out = propagate(frame, cfg)
    ch1, ch2 = demux_and_cdc(out, fiber.beta2, fiber.span_length)
    ref1, ref2 = demux_and_cdc(frame, 0.0, 0.0)
    for got, ref in ((ch1, ref1), (ch2, ref2)):
        err = np.linalg.norm(got.samples - ref.samples)
        assert err <= 1e-9 * np.linalg.norm(ref.samples)


def test_zero_dispersion_reduces_to_analytic_phase():
    """At beta2 = 0 the scheme telescopes: every sample leaves with the
    phase gamma * L_eff * |a_in|^2 regardless of the step count."""
    fiber = _fiber(beta2=0.0)
    frame = _frame(fiber, 4.0)
    cfg = SsfmCfg(fiber=fiber, step_km=0.7, n_symbols_per_block=64,
                  guard_symbols=8, samples_per_symbol=32)
    out = propagate(frame, cfg)
    a_in = frame.baseband.samples
    l_eff_m = derive(fiber).eff_length * 1e3
    expected = a_in * np.exp(1j * fiber.gamma_per_w_m * l_eff_m
                             * np.abs(a_in) ** 2)
    assert np.linalg.norm(out.baseband.samples - expected) <= \
        1e-12 * np.linalg.norm(expected)


def test_step_halving_converges():
    fiber = _fiber()
    frame = _frame(fiber, 6.0)
    outs = []
    for step in (0.5, 0.25):
        cfg = SsfmCfg(fiber=fiber, step_km=step, n_symbols_per_block=64,
                      guard_symbols=8, samples_per_symbol=32)
        out = propagate(frame, cfg)
        ch1, _ = demux_and_cdc(out, fiber.beta2, fiber.span_length)
        outs.append(ch1.samples)
    err = np.linalg.norm(outs[0] - outs[1]) / np.linalg.norm(outs[1])
    assert err < 1e-4


def test_noise_requires_generator_and_has_the_right_variance():
    fiber = _fiber(n_span=2)
    n = 16_384
    silent = WdmFrame(baseband=SampledWaveform(
        samples=np.zeros(n, dtype=complex), dt=T / 32, n_symbols=512),
        delta_f=DELTA_F)
    cfg = SsfmCfg(fiber=fiber, step_km=10.0, n_symbols_per_block=512,
                  guard_symbols=0, samples_per_symbol=32)
    with pytest.raises(ValueError, match="generator"):
        propagate(silent, cfg, noise_psd=1e-15)
    rng = np.random.default_rng(11)
    n0 = 1.43e-15
    out = propagate(silent, cfg, noise_psd=n0, rng=rng)
    measured = np.mean(np.abs(out.baseband.samples) ** 2)
    # spans add noise_psd / n_span each; unity net span gain keeps the sum
    assert measured == pytest.approx(n0 / (T / 32), rel=0.05)


def test_propagation_is_deterministic():
    fiber = _fiber()
    frame = _frame(fiber, 2.0)
    cfg = SsfmCfg(fiber=fiber, step_km=1.0, n_symbols_per_block=64,
                  guard_symbols=8, samples_per_symbol=32)
    a = propagate(frame, cfg, 1.43e-15, np.random.default_rng(3))
    b = propagate(frame, cfg, 1.43e-15, np.random.default_rng(3))
    assert np.array_equal(a.baseband.samples, b.baseband.samples)


def test_step_phase_warning():
    fiber = _fiber()
    cfg = SsfmCfg(fiber=fiber, step_km=5.0, n_symbols_per_block=64,
                  guard_symbols=8, samples_per_symbol=32)
    hot = _frame(fiber, 20.0)
    with pytest.warns(RuntimeWarning, match="phase per step"):
        propagate(hot, cfg)
    import warnings
    fine = SsfmCfg(fiber=fiber, step_km=0.5, n_symbols_per_block=64,
                   guard_symbols=8, samples_per_symbol=32)
    cold = _frame(fiber, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        propagate(cold, fine)


def test_demux_with_zero_length_is_plain_demux():
    fiber = _fiber()
    frame = _frame(fiber, 0.0)
    a1, a2 = demux_and_cdc(frame, fiber.beta2, 0.0)
    b1, b2 = demux_and_cdc(frame, 0.0, fiber.span_length)
    assert np.allclose(a1.samples, b1.samples, rtol=1e-12)
    assert np.allclose(a2.samples, b2.samples, rtol=1e-12)


def test_demuxed_channels_recover_the_inputs_back_to_back():
    """mux followed by demux (no fiber at all) returns each channel's
    brick-walled waveform, so the matched filter sees the sent symbols."""
    fiber = _fiber()
    rng = np.random.default_rng(13)
    es = dbm_to_watts(0.0) * T
    const = qam16(es)
    pulse = make_pulse("truncated_gaussian", 32, T)
    idx1 = rng.integers(0, 16, size=64)
    idx2 = rng.integers(0, 16, size=64)
    frame = mux(modulate(const.points[idx1], pulse),
                modulate(const.points[idx2], pulse), DELTA_F)
    ch1, ch2 = demux_and_cdc(frame, 0.0, 0.0)
    for got, idx in ((ch1, idx1), (ch2, idx2)):
        rows = got.samples.reshape(64, 32)
        v = rows @ (pulse.amplitude_samples * pulse.dt)
        d2 = np.abs(v[:, None] - const.points[None, :]) ** 2
        assert np.array_equal(np.argmin(d2, axis=1), idx)
