"""Memoryless two-user nonlinear channel with additive white Gaussian noise.

One span with ideal amplification reduces to a per-symbol map: the own
symbol's pulse acquires a phase proportional to the instantaneous power of
both users, eta * (|x1|^2 + 2 |x2|^2) * g(t)^2, and white noise of PSD
``noise_psd`` is added.  On the sampling grid white noise means independent
complex Gaussians of variance noise_psd / dt per sample, which makes the
projection onto any unit-energy function carry variance noise_psd exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import PulseShape, SampledWaveform, energy


@dataclass(frozen=True)
class MemorylessChannelCfg:
    """Channel constants: nonlinear coefficient, noise level, pulse grid."""

    eta: float        # 1/W
    noise_psd: float  # W/Hz
    pulse: PulseShape

    def __post_init__(self):
        if not np.isfinite(self.eta):
            raise ValueError("eta must be finite")
        if not np.isfinite(self.noise_psd) or self.noise_psd < 0:
            raise ValueError("noise_psd must be finite and non-negative")


_U64 = np.uint64


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based noise source: (seed, stream_id) names one reproducible stream.

    Distinct stream ids under the same seed yield statistically independent
    streams, so parallel batches can each own an id without coordination.
    """

    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        self.stream_id & 0xFFFFFFFFFFFFFFFF], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=key))


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circularly symmetric complex Gaussians with E|n|^2 = variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def noiseless_symbol_samples(x1, x2, eta: float, pulse: PulseShape) -> np.ndarray:
    """Channel output samples for one symbol interval without noise."""
    g = pulse.amplitude_samples
    s = np.abs(x1) ** 2 + 2.0 * np.abs(x2) ** 2
    return x1 * g * np.exp(1j * eta * s * g**2)


def propagate_symbol(x1: complex, x2: complex, cfg: MemorylessChannelCfg,
                     noise: NoiseStream) -> SampledWaveform:
    """One symbol through the memoryless channel, noise drawn from ``noise``.

    Repeated calls with identical arguments return bit-identical output.
    """
    samples = noiseless_symbol_samples(x1, x2, cfg.eta, cfg.pulse)
    if cfg.noise_psd > 0:
        rng = noise.generator()
        samples = samples + complex_noise(rng, samples.shape, cfg.noise_psd / cfg.pulse.dt)
    return SampledWaveform(samples=samples, dt=cfg.pulse.dt, n_symbols=1)


def propagate_block(x1, x2, cfg: MemorylessChannelCfg,
                    rng: np.random.Generator) -> np.ndarray:
    """Vectorized channel: rows of the result are independent symbol intervals."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    g = cfg.pulse.amplitude_samples
    s = (np.abs(x1) ** 2 + 2.0 * np.abs(x2) ** 2)[:, None]
    out = x1[:, None] * g[None, :] * np.exp(1j * cfg.eta * s * g[None, :] ** 2)
    if cfg.noise_psd > 0:
        out = out + complex_noise(rng, out.shape, cfg.noise_psd / cfg.pulse.dt)
    return out


def awgn_variance_of_projection(f, cfg: MemorylessChannelCfg) -> float:
    """Variance of <N, f> under the sample-domain noise model.

    For unit-energy f this is exactly ``noise_psd``; scaling f by a factor
    scales the variance quadratically.
    """
    if isinstance(f, SampledWaveform) or isinstance(f, PulseShape):
        e = energy(f)
    else:
        e = energy(np.asarray(f), dt=cfg.pulse.dt)
    if not np.isfinite(e):
        raise ValueError("projection function must have finite energy")
    return cfg.noise_psd * e


def nonlinear_bandwidth_ratio(eta: float, s_max: float, pulse: PulseShape) -> float:
    """Peak instantaneous frequency of the nonlinear phase over the Nyquist rate.

    Values approaching one mean the sampling grid no longer resolves the
    phase rotation exp(j eta s g^2); the sweep harness warns above 0.4.
    """
    g2 = pulse.amplitude_samples**2
    slope = np.max(np.abs(np.diff(g2))) / pulse.dt
    peak_freq = abs(eta) * s_max * slope / (2.0 * np.pi)
    nyquist = 0.5 / pulse.dt
    return peak_freq / nyquist
