"""Link parameters and the constants derived from them.

Everything downstream (channel models, receiver statistics, noise budgets)
consumes only two numbers per link: the effective nonlinear coefficient
``eta`` [1/W] and the amplified-noise power spectral density ``noise_psd``
[W/Hz].  This module owns the conversion from data-sheet units to those
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DB_TO_NEPER = math.log(10.0) / 10.0


def db_to_linear(value_db: float) -> float:
    """Convert a dB quantity to its linear power ratio."""
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(power_dbm: float) -> float:
    return 1e-3 * 10.0 ** (power_dbm / 10.0)


@dataclass(frozen=True)
class FiberParams:
    """Per-span link parameters in data-sheet units.

    ``beta2`` and ``channel_spacing`` are consumed only by the split-step
    simulator; the memoryless channel ignores them.
    """

    span_length: float            # km
    attenuation_db: float         # dB/km
    gamma: float                  # 1/(W km)
    n_span: int                   # amplified spans
    symbol_rate: float            # baud
    photon_energy: float          # J
    noise_figure_db: float        # dB, amplifier noise figure
    beta2: float = 0.0            # ps^2/km
    channel_spacing: float = 0.0  # Hz

    def __post_init__(self):
        for name in ("span_length", "symbol_rate", "photon_energy"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and positive, got {value!r}")
        for name in ("attenuation_db", "gamma", "noise_figure_db"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
        if self.n_span < 1:
            raise ValueError(f"n_span must be at least 1, got {self.n_span!r}")
        if not math.isfinite(self.beta2) or not math.isfinite(self.channel_spacing):
            raise ValueError("beta2 and channel_spacing must be finite")

    @property
    def symbol_period(self) -> float:
        """Symbol duration T in seconds."""
        return 1.0 / self.symbol_rate

    # SI views used by the split-step solver.

    @property
    def span_length_m(self) -> float:
        return self.span_length * 1e3

    @property
    def alpha_np_per_m(self) -> float:
        return self.attenuation_db * DB_TO_NEPER * 1e-3

    @property
    def gamma_per_w_m(self) -> float:
        return self.gamma * 1e-3

    @property
    def beta2_s2_per_m(self) -> float:
        return self.beta2 * 1e-27


@dataclass(frozen=True)
class DerivedParams:
    """Constants computed once from :class:`FiberParams`."""

    alpha_np: float      # 1/km, power attenuation in nepers
    eff_length: float    # km
    eta: float           # 1/W, accumulated nonlinear coefficient
    gain_linear: float   # amplifier power gain restoring one span of loss
    noise_psd: float     # W/Hz, accumulated amplifier noise PSD


def derive(params: FiberParams) -> DerivedParams:
    """Reduce link parameters to the constants the receivers actually use.

    The effective length folds exponential attenuation into an equivalent
    lossless length, the amplifier gain exactly restores one span of loss,
    and the noise PSD accumulates over ``n_span`` identical amplifiers.
    """
    alpha_np = params.attenuation_db * DB_TO_NEPER
    if alpha_np == 0.0:
        eff_length = params.span_length
    else:
        eff_length = -math.expm1(-alpha_np * params.span_length) / alpha_np
    eta = params.n_span * params.gamma * eff_length
    gain_linear = math.exp(alpha_np * params.span_length)
    noise_figure_linear = db_to_linear(params.noise_figure_db)
    noise_psd = 0.5 * params.n_span * params.photon_energy * noise_figure_linear * gain_linear
    return DerivedParams(
        alpha_np=alpha_np,
        eff_length=eff_length,
        eta=eta,
        gain_linear=gain_linear,
        noise_psd=noise_psd,
    )
