"""Demodulators for the nonlinear two-user channel.

Three front ends share the sampling grid of one symbol interval:

* ``mfs`` projects onto the pulse itself (conventional matched filter).
* The sufficient-statistics bank projects each quadrature of the received
  waveform onto g(t) sin(eta s g^2) and g(t) cos(eta s g^2) for every
  admissible interference level s, producing a real vector of length 4|S|
  whose conditional law is exactly Gaussian.
* ``mxm`` picks the interference level whose phase-conjugated correlator has
  maximal magnitude and de-rotates with it, which recovers the transmitted
  symbol exactly in the absence of noise.

Everything is expressed through the two phase integrals

    F_s(z) = 1/2 integral g^2 sin(eta z g^2) dt
    F_c(z) = 1/2 integral g^2 cos(eta z g^2) dt

evaluated as rectangle sums on the pulse grid and cached per argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .waveform import Constellation, InterferenceSet, PulseShape, SampledWaveform


class PhaseIntegrals:
    """Cached rectangle-rule evaluation of F_s and F_c for one pulse and eta.

    Arguments are quantized to 12 significant digits for cache lookup; the
    distinct values ever needed form a finite set (sums and differences of
    interference levels), so the cache stays small.
    """

    def __init__(self, pulse: PulseShape, eta: float):
        self.pulse = pulse
        self.eta = float(eta)
        g2 = pulse.amplitude_samples**2
        self._g2 = g2
        self._half_g2dt = 0.5 * g2 * pulse.dt
        self._cache: dict[float, tuple[float, float]] = {}

    @staticmethod
    def _key(z: float) -> float:
        if z == 0.0:
            return 0.0
        return float(np.format_float_scientific(z, precision=12))

    def _pair(self, z: float) -> tuple[float, float]:
        key = self._key(z)
        hit = self._cache.get(key)
        if hit is None:
            phase = self.eta * z * self._g2
            hit = (float(np.dot(self._half_g2dt, np.sin(phase))),
                   float(np.dot(self._half_g2dt, np.cos(phase))))
            self._cache[key] = hit
        return hit

    def f_sin(self, z: float) -> float:
        return self._pair(z)[0]

    def f_cos(self, z: float) -> float:
        return self._pair(z)[1]

    def rotation(self, z: float) -> complex:
        """2 F_c(z) + 2j F_s(z): the matched-filter gain at interference z."""
        fs, fc = self._pair(z)
        return complex(2.0 * fc, 2.0 * fs)


def _symbol_samples(rx, pulse: PulseShape) -> np.ndarray:
    if isinstance(rx, SampledWaveform):
        if not math.isclose(rx.dt, pulse.dt, rel_tol=1e-12):
            raise ValueError("waveform grid does not match the pulse grid")
        samples = rx.samples
    else:
        samples = np.asarray(rx)
    if samples.shape[-1] != pulse.samples_per_symbol:
        raise ValueError("expected one symbol interval of samples")
    return samples


def mfs(rx, pulse: PulseShape) -> complex:
    """Matched-filter output <rx, g> for one symbol interval."""
    samples = _symbol_samples(rx, pulse)
    return complex(np.dot(samples, pulse.amplitude_samples) * pulse.dt)


def mfs_block(rx: np.ndarray, pulse: PulseShape) -> np.ndarray:
    """Matched filter applied to rows of a (batch, samples) array."""
    return rx @ (pulse.amplitude_samples * pulse.dt)


@dataclass(frozen=True, eq=False)
class SsBasis:
    """Correlator bank h_l = g sin(eta s_l g^2), h~_l = g cos(eta s_l g^2)."""

    h: np.ndarray        # (|S|, samples)
    h_tilde: np.ndarray  # (|S|, samples)
    interference: InterferenceSet
    eta: float
    pulse: PulseShape
    integrals: PhaseIntegrals

    def __post_init__(self):
        self.h.setflags(write=False)
        self.h_tilde.setflags(write=False)

    @property
    def size(self) -> int:
        return self.interference.size


def build_ss_basis(pulse: PulseShape, interference: InterferenceSet, eta: float) -> SsBasis:
    g = pulse.amplitude_samples
    phases = eta * interference.values[:, None] * g[None, :] ** 2
    return SsBasis(h=g[None, :] * np.sin(phases),
                   h_tilde=g[None, :] * np.cos(phases),
                   interference=interference, eta=float(eta), pulse=pulse,
                   integrals=PhaseIntegrals(pulse, eta))


@dataclass(frozen=True, eq=False)
class SsStatistics:
    """Projection vector u = [u^R, u~^R, u^I, u~^I], length 4|S|."""

    u: np.ndarray


def ss_project(rx, basis: SsBasis) -> SsStatistics:
    """Project one received symbol onto the correlator bank."""
    samples = _symbol_samples(rx, basis.pulse)
    dt = basis.pulse.dt
    re = samples.real
    im = samples.imag
    u = np.concatenate([basis.h @ re, basis.h_tilde @ re,
                        basis.h @ im, basis.h_tilde @ im]) * dt
    return SsStatistics(u=u)


def ss_project_block(rx: np.ndarray, basis: SsBasis) -> np.ndarray:
    """Rows of ``rx`` are symbol intervals; returns a (batch, 4|S|) array."""
    dt = basis.pulse.dt
    re = rx.real
    im = rx.imag
    ht = basis.h.T * dt
    htt = basis.h_tilde.T * dt
    return np.concatenate([re @ ht, re @ htt, im @ ht, im @ htt], axis=1)


def ss_means(constellation: Constellation, interference: InterferenceSet,
             basis: SsBasis) -> np.ndarray:
    """Conditional means mu[j, i] of the statistics vector.

    Index j runs over interference levels, i over own constellation points.
    The four blocks follow from expanding the projections with the product
    identities sin a sin b, sin a cos b, etc., which turns every entry into
    F_s / F_c evaluated at s_l + s_j and s_l - s_j.
    """
    s = interference.values
    n_s = s.size
    fi = basis.integrals
    fs_p = np.empty((n_s, n_s))
    fs_m = np.empty((n_s, n_s))
    fc_p = np.empty((n_s, n_s))
    fc_m = np.empty((n_s, n_s))
    for loc in range(n_s):
        for j in range(n_s):
            fs_p[loc, j] = fi.f_sin(s[loc] + s[j])
            fs_m[loc, j] = fi.f_sin(s[loc] - s[j])
            fc_p[loc, j] = fi.f_cos(s[loc] + s[j])
            fc_m[loc, j] = fi.f_cos(s[loc] - s[j])

    re = constellation.points.real
    im = constellation.points.imag
    # Shapes: (|S| levels j, |X| points i, 4|S| stats), built block by block
    # with the statistic index l on the last-but-stacked axis.
    mu_r = re[None, :, None] * (fs_p + fs_m).T[:, None, :] \
        + im[None, :, None] * (fc_p - fc_m).T[:, None, :]
    mu_rt = re[None, :, None] * (fc_p + fc_m).T[:, None, :] \
        + im[None, :, None] * (fs_m - fs_p).T[:, None, :]
    mu_i = re[None, :, None] * (fc_m - fc_p).T[:, None, :] \
        + im[None, :, None] * (fs_p + fs_m).T[:, None, :]
    mu_it = re[None, :, None] * (fs_p - fs_m).T[:, None, :] \
        + im[None, :, None] * (fc_p + fc_m).T[:, None, :]
    return np.concatenate([mu_r, mu_rt, mu_i, mu_it], axis=2)


def ss_covariance(basis: SsBasis, noise_psd: float) -> np.ndarray:
    """Noise covariance of the statistics vector, shape (4|S|, 4|S|).

    The two quadratures are independent with identical 2|S| x 2|S| blocks;
    each block is noise_psd/2 times the Gram matrix of the correlators,
    expressed here through F_s / F_c at sums and differences of levels.
    """
    s = basis.interference.values
    n_s = s.size
    fi = basis.integrals
    sig11 = np.empty((n_s, n_s))
    sig12 = np.empty((n_s, n_s))
    sig22 = np.empty((n_s, n_s))
    for k in range(n_s):
        for loc in range(n_s):
            fs_p = fi.f_sin(s[k] + s[loc])
            fs_m = fi.f_sin(s[k] - s[loc])
            fc_p = fi.f_cos(s[k] + s[loc])
            fc_m = fi.f_cos(s[k] - s[loc])
            sig11[k, loc] = fc_m - fc_p
            sig12[k, loc] = fs_p + fs_m
            sig22[k, loc] = fc_p + fc_m
    half = 0.5 * noise_psd
    quad = np.block([[sig11, sig12], [sig12.T, sig22]]) * half
    out = np.zeros((4 * n_s, 4 * n_s))
    out[:2 * n_s, :2 * n_s] = quad
    out[2 * n_s:, 2 * n_s:] = quad
    return out


@dataclass(frozen=True, eq=False)
class WhitenedSsModel:
    """Whitening of the statistics covariance restricted to its numerical range.

    ``transform`` maps a raw statistics vector into coordinates where the
    noise is unit-variance white; directions whose eigenvalue falls below
    rel_tol times the largest are dropped, which keeps Gaussian scoring
    finite when correlators become linearly dependent (e.g. eta s -> 0).
    """

    transform: np.ndarray   # (rank, 4|S|)
    means: np.ndarray       # (|S|, |X|, rank)
    rank: int
    eigenvalues: np.ndarray  # retained, descending

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u) @ self.transform.T


def whiten(cov: np.ndarray, means: np.ndarray, rel_tol: float = 1e-10) -> WhitenedSsModel:
    """Eigendecompose a PSD covariance and whiten means onto the retained range."""
    cov = np.asarray(cov, dtype=float)
    evals, evecs = np.linalg.eigh(cov)
    top = evals[-1]
    if top <= 0:
        raise ValueError("covariance has no positive eigenvalues")
    if evals[0] < -rel_tol * top:
        raise ValueError(f"covariance is not PSD within tolerance: min eigenvalue {evals[0]:.3e}")
    keep = evals > rel_tol * top
    kept = evals[keep][::-1]
    vecs = evecs[:, keep][:, ::-1]
    transform = vecs.T / np.sqrt(kept)[:, None]
    means_w = np.asarray(means) @ transform.T
    return WhitenedSsModel(transform=transform, means=means_w,
                           rank=int(kept.size), eigenvalues=kept)


@dataclass(frozen=True, eq=False)
class SsModel:
    """Full statistics model: conditional means, covariance, and whitening."""

    means: np.ndarray
    covariance: np.ndarray
    whitened: WhitenedSsModel


def build_ss_model(constellation: Constellation, basis: SsBasis,
                   noise_psd: float) -> SsModel:
    means = ss_means(constellation, basis.interference, basis)
    cov = ss_covariance(basis, noise_psd)
    return SsModel(means=means, covariance=cov, whitened=whiten(cov, means))


def _mxm_correlators(u: np.ndarray, n_s: int) -> np.ndarray:
    """Complex correlators <rx, g exp(j eta s_l g^2)> recovered from the statistics."""
    u = np.asarray(u)
    u_r = u[..., 0:n_s]
    u_rt = u[..., n_s:2 * n_s]
    u_i = u[..., 2 * n_s:3 * n_s]
    u_it = u[..., 3 * n_s:4 * n_s]
    return (u_rt + u_i) + 1j * (u_it - u_r)


def mxm(rx, basis: SsBasis) -> tuple[complex, float]:
    """Maximum-matching demodulator.

    Returns ``(w, s_max)``: the interference level whose correlator has the
    largest magnitude (ties resolve to the smallest level) and the symbol
    estimate after de-rotating with it.  Noiseless inputs return the
    transmitted symbol exactly because the level match makes the rotation
    cancel sample by sample.
    """
    stats = ss_project(rx, basis)
    c = _mxm_correlators(stats.u, basis.size)
    best = int(np.argmax(np.abs(c)))
    return complex(c[best]), float(basis.interference.values[best])


def mxm_block(rx: np.ndarray, basis: SsBasis):
    """Vectorized ``mxm``; returns (w, s_max) arrays over the batch."""
    u = ss_project_block(rx, basis)
    return mxm_from_stats(u, basis)


def mxm_from_stats(u: np.ndarray, basis: SsBasis):
    """``mxm`` evaluated from precomputed statistics rows (batch, 4|S|)."""
    c = _mxm_correlators(u, basis.size)
    best = np.argmax(np.abs(c), axis=-1)
    rows = np.arange(c.shape[0])
    return c[rows, best], basis.interference.values[best]
