"""Pulse shapes, constellations, interference levels, and grid inner products.

All waveforms live on a midpoint sampling grid: symbol interval (0, T] is
represented by ``samples_per_symbol`` samples at t_k = (k + 1/2) * dt with
dt = T / samples_per_symbol, and integrals are rectangle-rule sums with
weight dt.  Pulses are renormalized so the discrete energy sum(g^2) * dt
equals one exactly, which makes projections onto the pulse unit-variance
under the white-noise model regardless of grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PULSE_KINDS = ("truncated_gaussian", "triangular", "rectangular")


@dataclass(frozen=True, eq=False)
class PulseShape:
    """A unit-energy pulse sampled on the midpoint grid of one symbol."""

    kind: str
    samples_per_symbol: int
    symbol_period: float      # s
    amplitude_samples: np.ndarray  # real, 1/sqrt(s) scale

    def __post_init__(self):
        self.amplitude_samples.setflags(write=False)

    @property
    def dt(self) -> float:
        return self.symbol_period / self.samples_per_symbol

    @property
    def times(self) -> np.ndarray:
        n = self.samples_per_symbol
        return (np.arange(n) + 0.5) * self.dt


def make_pulse(kind: str, samples_per_symbol: int, symbol_period: float,
               fwhm: float = 0.5) -> PulseShape:
    """Build one of the supported pulse shapes, renormalized to unit energy.

    ``fwhm`` applies to the truncated Gaussian only: it is the full width at
    half maximum of the field amplitude, as a fraction of the symbol period.
    """
    if kind not in PULSE_KINDS:
        raise ValueError(f"unknown pulse kind {kind!r}, expected one of {PULSE_KINDS}")
    if samples_per_symbol < 2:
        raise ValueError(f"samples_per_symbol must be at least 2, got {samples_per_symbol}")
    if not np.isfinite(symbol_period) or symbol_period <= 0:
        raise ValueError(f"symbol_period must be positive, got {symbol_period!r}")

    T = float(symbol_period)
    dt = T / samples_per_symbol
    t = (np.arange(samples_per_symbol) + 0.5) * dt

    if kind == "truncated_gaussian":
        if not 0.0 < fwhm < 2.0:
            raise ValueError(f"fwhm must lie in (0, 2) symbol periods, got {fwhm!r}")
        sigma = fwhm * T / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        g = np.exp(-((t - T / 2.0) ** 2) / (2.0 * sigma**2))
    elif kind == "triangular":
        g = np.sqrt(12.0 / T**3) * (T / 2.0 - np.abs(T / 2.0 - t))
    else:
        g = np.full(samples_per_symbol, np.sqrt(1.0 / T))

    g = g / np.sqrt(np.sum(g**2) * dt)
    return PulseShape(kind=kind, samples_per_symbol=samples_per_symbol,
                      symbol_period=T, amplitude_samples=g)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Complex symbol alphabet with priors.  Symbol units are sqrt(W s)."""

    points: np.ndarray  # complex
    priors: np.ndarray  # probabilities, same length

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        priors = np.asarray(self.priors, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ValueError("constellation needs at least two points")
        if priors.shape != points.shape:
            raise ValueError("priors must match points in length")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be non-negative and sum to one")
        if len(np.unique(points)) != points.size:
            raise ValueError("constellation points must be distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "priors", priors)
        points.setflags(write=False)
        priors.setflags(write=False)

    @property
    def symbol_energy(self) -> float:
        """Mean squared magnitude E_s = sum(pi_i |x_i|^2)."""
        return float(np.dot(self.priors, np.abs(self.points) ** 2))

    @property
    def size(self) -> int:
        return self.points.size


def qam16(symbol_energy: float, priors=None) -> Constellation:
    """Square 16-point grid {+-1, +-3}^2 scaled to mean energy ``symbol_energy``."""
    if symbol_energy <= 0:
        raise ValueError("symbol_energy must be positive")
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    grid = levels[:, None] + 1j * levels[None, :]
    points = grid.ravel() * np.sqrt(symbol_energy / 10.0)
    if priors is None:
        priors = np.full(16, 1.0 / 16.0)
    return Constellation(points=points, priors=np.asarray(priors, dtype=float))


def amplitude_rings(constellation: Constellation, rel_tol: float = 1e-9):
    """Group constellation points by magnitude.

    Returns ``(radii, ring_priors, ring_index)`` where ``radii`` is sorted
    ascending, ``ring_priors`` sums the point priors on each ring, and
    ``ring_index[i]`` maps point i to its ring.
    """
    radii_all = np.abs(constellation.points)
    order = np.argsort(radii_all)
    scale = radii_all.max()
    radii = []
    ring_index = np.empty(constellation.size, dtype=int)
    for idx in order:
        r = radii_all[idx]
        if radii and abs(r - radii[-1][0]) <= rel_tol * scale:
            radii[-1][1].append(idx)
        else:
            radii.append((r, [idx]))
    out_r = np.empty(len(radii))
    out_p = np.zeros(len(radii))
    for ring, (r, members) in enumerate(radii):
        out_r[ring] = np.mean(radii_all[members])
        out_p[ring] = constellation.priors[members].sum()
        ring_index[members] = ring
    return out_r, out_p, ring_index


@dataclass(frozen=True, eq=False)
class InterferenceSet:
    """The distinct values of s = |x1|^2 + 2 |x2|^2 and their statistics.

    ``values`` is sorted ascending.  ``cond_prob[j, c]`` is the probability
    of interference level j given that the own symbol sits in amplitude
    class c, so every column sums to one.  ``own_class_index[i]`` maps own
    constellation point i to its amplitude class.
    """

    values: np.ndarray            # |S| interference levels, W s scale
    cond_prob: np.ndarray         # (|S|, n_classes)
    amplitude_classes: np.ndarray  # distinct own-point magnitudes |x|
    own_class_index: np.ndarray   # (|X|,) point -> class

    def __post_init__(self):
        for name in ("values", "cond_prob", "amplitude_classes", "own_class_index"):
            getattr(self, name).setflags(write=False)

    @property
    def size(self) -> int:
        return self.values.size


def build_interference_set(own: Constellation, interferer: Constellation,
                           rel_tol: float = 1e-9) -> InterferenceSet:
    """Enumerate all |x1|^2 + 2 |x2|^2 levels and the conditional law over them."""
    own_radii, _, own_class_index = amplitude_rings(own, rel_tol)
    intf_radii, intf_priors, _ = amplitude_rings(interferer, rel_tol)
    own_energies = own_radii**2
    intf_energies = intf_radii**2

    candidates = []
    for c, a in enumerate(own_energies):
        for m, b in enumerate(intf_energies):
            candidates.append((a + 2.0 * b, c, intf_priors[m]))
    candidates.sort(key=lambda item: item[0])

    scale = candidates[-1][0]
    groups = []
    for s, c, p in candidates:
        if groups and abs(s - groups[-1][0][0]) <= rel_tol * scale:
            groups[-1].append((s, c, p))
        else:
            groups.append([(s, c, p)])

    values = np.array([np.mean([s for s, _, _ in grp]) for grp in groups])
    cond = np.zeros((len(groups), own_energies.size))
    for j, grp in enumerate(groups):
        for _, c, p in grp:
            cond[j, c] += p
    return InterferenceSet(values=values, cond_prob=cond,
                           amplitude_classes=own_radii,
                           own_class_index=own_class_index)


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Complex samples on the midpoint grid covering ``n_symbols`` symbols."""

    samples: np.ndarray  # complex
    dt: float            # s
    n_symbols: int

    def __post_init__(self):
        if self.samples.size % max(self.n_symbols, 1) != 0:
            raise ValueError("sample count must be a multiple of n_symbols")


def modulate(symbols, pulse: PulseShape) -> SampledWaveform:
    """Linear modulation: symbol i scales the pulse on its own interval."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 1:
        raise ValueError("symbols must be a 1-d sequence")
    samples = np.outer(symbols, pulse.amplitude_samples).ravel()
    return SampledWaveform(samples=samples, dt=pulse.dt, n_symbols=symbols.size)


def _as_samples(f):
    if isinstance(f, SampledWaveform):
        return f.samples, f.dt
    if isinstance(f, PulseShape):
        return f.amplitude_samples, f.dt
    return np.asarray(f), None


def inner(f, g, dt: float | None = None) -> complex:
    """Rectangle-rule inner product <f, g> = sum(f * conj(g)) * dt.

    ``f`` and ``g`` may be SampledWaveform, PulseShape, or plain arrays; if
    both carry a grid spacing the spacings must agree, and plain arrays
    require an explicit ``dt``.
    """
    fs, fdt = _as_samples(f)
    gs, gdt = _as_samples(g)
    if fs.shape != gs.shape:
        raise ValueError(f"length mismatch: {fs.shape} vs {gs.shape}")
    if fdt is not None and gdt is not None and not math.isclose(fdt, gdt, rel_tol=1e-12):
        raise ValueError("grid spacing mismatch")
    step = dt if dt is not None else (fdt if fdt is not None else gdt)
    if step is None:
        raise ValueError("dt required when neither argument carries a grid")
    return complex(np.dot(fs, np.conj(gs)) * step)


def energy(f, dt: float | None = None) -> float:
    """Discrete energy sum(|f|^2) * dt."""
    fs, fdt = _as_samples(f)
    step = dt if dt is not None else fdt
    if step is None:
        raise ValueError("dt required when the argument carries no grid")
    return float(np.sum(np.abs(fs) ** 2) * step)
