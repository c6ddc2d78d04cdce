"""Split-step Fourier propagation of a two-channel WDM aggregate field."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import complex_noise
from .physparams import FiberParams, derive
from .waveform import SampledWaveform


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SsfmCfg:
    """Numerical configuration for split-step fiber propagation."""

    fiber: FiberParams
    step_km: float = 0.1
    n_symbols_per_block: int = 128
    guard_symbols: int = 16
    samples_per_symbol: int = 64

    def __post_init__(self) -> None:
        if not self.step_km > 0:
            raise ValueError("step_km must be positive")
        if self.guard_symbols < 0:
            raise ValueError("guard_symbols must be non-negative")
        if self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be at least 1")
        if 2 * self.guard_symbols >= self.n_symbols_per_block:
            raise ValueError("guard symbols leave no payload in the block")
        n = self.n_symbols_per_block * self.samples_per_symbol
        if not _is_pow2(n):
            raise ValueError(
                f"block must be a power of two in samples, got {n} "
                f"({self.n_symbols_per_block} symbols x {self.samples_per_symbol})")

    @property
    def block_samples(self) -> int:
        return self.n_symbols_per_block * self.samples_per_symbol

    @property
    def payload_symbols(self) -> int:
        return self.n_symbols_per_block - 2 * self.guard_symbols


@dataclass(frozen=True, eq=False)
class WdmFrame:
    """Aggregate complex field carrying the two channels at -/+ delta_f/2."""

    baseband: SampledWaveform
    delta_f: float
    per_channel_symbols: tuple[np.ndarray, np.ndarray] | None = None


def _brick_wall(samples: np.ndarray, dt: float, cutoff: float) -> np.ndarray:
    """Zero every spectral bin strictly outside |f| <= cutoff."""
    spectrum = np.fft.fft(samples)
    freqs = np.fft.fftfreq(samples.size, dt)
    spectrum[np.abs(freqs) > cutoff * (1.0 + 1e-12)] = 0.0
    return np.fft.ifft(spectrum)


def mux(ch1: SampledWaveform, ch2: SampledWaveform, delta_f: float,
        symbols: tuple[np.ndarray, np.ndarray] | None = None) -> WdmFrame:
    """Brick-wall filter each channel to width delta_f/2 and stack them
    at carrier offsets -delta_f/2 (channel 1) and +delta_f/2 (channel 2).
    """
    if delta_f <= 0:
        raise ValueError("delta_f must be positive")
    if ch1.samples.size != ch2.samples.size or not math.isclose(
            ch1.dt, ch2.dt, rel_tol=1e-12):
        raise ValueError("channel waveforms must share one sampling grid")
    fs = 1.0 / ch1.dt
    if fs < 2.0 * (delta_f / 2.0 + delta_f / 4.0):
        raise ValueError(
            f"sampling rate {fs:.4g} Hz aliases channels spaced {delta_f:.4g} Hz apart")
    t = (np.arange(ch1.samples.size) + 0.5) * ch1.dt
    carrier = np.exp(1j * np.pi * delta_f * t)
    a = (_brick_wall(ch1.samples, ch1.dt, delta_f / 4.0) / carrier
         + _brick_wall(ch2.samples, ch2.dt, delta_f / 4.0) * carrier)
    return WdmFrame(
        baseband=SampledWaveform(samples=a, dt=ch1.dt, n_symbols=ch1.n_symbols),
        delta_f=float(delta_f), per_channel_symbols=symbols)


def propagate(frame: WdmFrame, cfg: SsfmCfg, noise_psd: float = 0.0,
              rng: np.random.Generator | None = None) -> WdmFrame:
    """Run the symmetric split-step scheme over every span, then amplify.

    Each step is half a dispersion step in the frequency domain, a
    per-sample Kerr phase weighted by the step's effective length, the
    step's loss, and the second half dispersion step.  Each span ends with
    gain that exactly cancels the span loss, plus additive white Gaussian
    noise spread over the whole simulated band (total one-sided density
    noise_psd split evenly across spans).
    """
    if noise_psd < 0:
        raise ValueError("noise_psd must be non-negative")
    if noise_psd > 0 and rng is None:
        raise ValueError("adding noise requires a random generator")
    fiber = cfg.fiber
    a = np.array(frame.baseband.samples, dtype=complex)
    dt = frame.baseband.dt
    span_m = fiber.span_length_m
    n_steps = max(1, math.ceil(span_m / (cfg.step_km * 1e3)))
    dz = span_m / n_steps
    alpha = fiber.alpha_np_per_m
    gamma = fiber.gamma_per_w_m
    dz_eff = -math.expm1(-alpha * dz) / alpha if alpha > 0 else dz
    loss_amp = math.exp(-alpha * dz / 2.0)
    gain_amp = math.sqrt(derive(fiber).gain_linear)
    dispersive = fiber.beta2_s2_per_m != 0.0
    if dispersive:
        omega = 2.0 * np.pi * np.fft.fftfreq(a.size, dt)
        half_disp = np.exp(0.25j * fiber.beta2_s2_per_m * omega**2 * dz)
    max_step_phase = 0.0
    for _ in range(fiber.n_span):
        for _ in range(n_steps):
            if dispersive:
                a = np.fft.ifft(np.fft.fft(a) * half_disp)
            power = a.real**2 + a.imag**2
            max_step_phase = max(max_step_phase, gamma * dz_eff * power.max())
            a *= np.exp(1j * gamma * dz_eff * power)
            if alpha > 0:
                a *= loss_amp
            if dispersive:
                a = np.fft.ifft(np.fft.fft(a) * half_disp)
        if alpha > 0:
            a *= gain_amp
        if noise_psd > 0:
            a += complex_noise(rng, a.shape, noise_psd / fiber.n_span / dt)
    if max_step_phase > 0.05:
        warnings.warn(
            f"nonlinear phase per step reaches {max_step_phase:.3f} rad; "
            "shrink step_km for a trustworthy result", RuntimeWarning)
    return WdmFrame(
        baseband=SampledWaveform(samples=a, dt=dt, n_symbols=frame.baseband.n_symbols),
        delta_f=frame.delta_f, per_channel_symbols=frame.per_channel_symbols)


def demux_and_cdc(frame: WdmFrame, beta2: float,
                  length_km: float) -> tuple[SampledWaveform, SampledWaveform]:
    """Undo the accumulated dispersion, then split the channels back out.

    beta2 is in ps^2/km and length_km is the total propagated length.  The
    inverse dispersion filter runs over the full simulated band before the
    channels are shifted down, so the carrier-offset group delay (channel
    walk-off) and the common carrier phase are compensated together with
    the in-band quadratic phase.  Each channel is then brick-wall filtered
    to its delta_f/2 slot on the same sampling grid.
    """
    a = np.asarray(frame.baseband.samples, dtype=complex)
    dt = frame.baseband.dt
    beta2_m = beta2 * 1e-27
    if beta2_m != 0.0 and length_km != 0.0:
        omega = 2.0 * np.pi * np.fft.fftfreq(a.size, dt)
        inverse = np.exp(-0.5j * beta2_m * omega**2 * length_km * 1e3)
        a = np.fft.ifft(np.fft.fft(a) * inverse)
    t = (np.arange(a.size) + 0.5) * dt
    carrier = np.exp(1j * np.pi * frame.delta_f * t)
    ch1 = _brick_wall(a * carrier, dt, frame.delta_f / 4.0)
    ch2 = _brick_wall(a / carrier, dt, frame.delta_f / 4.0)
    n = frame.baseband.n_symbols
    return (SampledWaveform(samples=ch1, dt=dt, n_symbols=n),
            SampledWaveform(samples=ch2, dt=dt, n_symbols=n))
