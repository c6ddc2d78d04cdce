"""Symbol decision rules and the blind phase search used by MFS-PR.

Decisions are returned as indices into the constellation, with ties broken
toward the lowest index so every rule is deterministic.  The MAP rules score
log pi_i + logsumexp_j(log pi~_ji - D_ji) where D is a squared distance in
the coordinates where the conditional noise is white; adding a constant to
all scores never changes the decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ive, logsumexp

from .demod import PhaseIntegrals, WhitenedSsModel
from .waveform import Constellation, InterferenceSet, amplitude_rings


def md(v: complex, constellation: Constellation) -> int:
    """Minimum-distance rule: nearest constellation point."""
    return int(np.argmin(np.abs(constellation.points - v)))


def md_block(v: np.ndarray, constellation: Constellation) -> np.ndarray:
    d2 = np.abs(np.asarray(v)[:, None] - constellation.points[None, :]) ** 2
    return np.argmin(d2, axis=1)


def _log_weights(priors: np.ndarray, cond: np.ndarray):
    with np.errstate(divide="ignore"):
        return np.log(priors), np.log(cond)


@dataclass(frozen=True, eq=False)
class MapMfsModel:
    """Gaussian-mixture model of the matched-filter output.

    Conditioned on the interference level s_j, the output is the symbol
    rotated and scaled by 2 F_c(s_j) + 2j F_s(s_j) plus circular noise of
    variance noise_psd; mixing over levels with the conditional law pi~
    gives the exact per-symbol likelihood.
    """

    mu: np.ndarray         # (|S|, |X|) complex cloud centers
    priors: np.ndarray     # (|X|,)
    cond: np.ndarray       # (|S|, |X|) interference law given the own symbol
    noise_psd: float
    log_priors: np.ndarray = field(init=False)
    log_cond: np.ndarray = field(init=False)

    def __post_init__(self):
        lp, lc = _log_weights(self.priors, self.cond)
        object.__setattr__(self, "log_priors", lp)
        object.__setattr__(self, "log_cond", lc)


def build_map_mfs_model(constellation: Constellation, interference: InterferenceSet,
                        integrals: PhaseIntegrals, noise_psd: float) -> MapMfsModel:
    rot = np.array([integrals.rotation(s) for s in interference.values])
    mu = rot[:, None] * constellation.points[None, :]
    cond = interference.cond_prob[:, interference.own_class_index]
    return MapMfsModel(mu=mu, priors=constellation.priors, cond=cond,
                       noise_psd=noise_psd)


def map_mfs_scores(v, model: MapMfsModel) -> np.ndarray:
    """Per-symbol log scores for a scalar or batch of matched-filter outputs."""
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    d2 = np.abs(v[:, None, None] - model.mu[None, :, :]) ** 2
    log_mix = logsumexp(model.log_cond[None, :, :] - d2 / model.noise_psd, axis=1)
    return model.log_priors[None, :] + log_mix


def map_mfs(v: complex, model: MapMfsModel) -> int:
    return int(np.argmax(map_mfs_scores(v, model)[0]))


def map_mfs_block(v: np.ndarray, model: MapMfsModel) -> np.ndarray:
    return np.argmax(map_mfs_scores(v, model), axis=1)


def map_ss_scores(u, whitened: WhitenedSsModel, priors: np.ndarray,
                  cond: np.ndarray) -> np.ndarray:
    """Log scores from statistics rows using whitened Mahalanobis distances."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    uw = whitened.project(u)                      # (B, r)
    n_s, n_x, rank = whitened.means.shape
    mw = whitened.means.reshape(n_s * n_x, rank)
    d2 = (np.sum(uw**2, axis=1)[:, None]
          - 2.0 * uw @ mw.T
          + np.sum(mw**2, axis=1)[None, :]).reshape(-1, n_s, n_x)
    log_priors, log_cond = _log_weights(priors, cond)
    log_mix = logsumexp(log_cond[None, :, :] - 0.5 * d2, axis=1)
    return log_priors[None, :] + log_mix


def map_ss(u, whitened: WhitenedSsModel, priors: np.ndarray, cond: np.ndarray) -> int:
    """MAP decision from one statistics vector (see :func:`map_ss_scores`)."""
    if hasattr(u, "u"):
        u = u.u
    return int(np.argmax(map_ss_scores(u, whitened, priors, cond)[0]))


def map_ss_block(u: np.ndarray, whitened: WhitenedSsModel, priors: np.ndarray,
                 cond: np.ndarray) -> np.ndarray:
    return np.argmax(map_ss_scores(u, whitened, priors, cond), axis=1)


def _log_i0(x: np.ndarray | float):
    # I0 in log domain via the exponentially scaled Bessel function.
    return np.log(ive(0, x)) + np.abs(x)


@dataclass(frozen=True, eq=False)
class TsThresholds:
    """Ring-decision thresholds: 0 = m_0 < m_1 < ... < m_R = inf."""

    rings: np.ndarray        # radii, ascending
    ring_priors: np.ndarray
    thresholds: np.ndarray   # length len(rings) + 1

    def __post_init__(self):
        t = self.thresholds
        if t[0] != 0.0 or not np.isinf(t[-1]):
            raise ValueError("thresholds must start at 0 and end at inf")
        inner = t[1:-1]
        if np.any(inner <= self.rings[:-1]) or np.any(inner >= self.rings[1:]):
            raise ValueError("each threshold must lie strictly between its rings")


def ts_thresholds(rings, ring_priors, noise_psd: float) -> TsThresholds:
    """Solve for the prior-weighted Rice-density crossovers between rings.

    The magnitude of the de-rotated symbol estimate is Rice distributed
    around its ring radius; between consecutive radii the weighted densities
    cross exactly once, located here by bisection to relative width 1e-12.
    The m-independent factors cancel, leaving a difference of log Bessel
    terms that is monotone in m, so a missing sign change can only be a
    degenerate configuration: it falls back to the midpoint with a warning.
    """
    rings = np.asarray(rings, dtype=float)
    ring_priors = np.asarray(ring_priors, dtype=float)
    if rings.ndim != 1 or np.any(np.diff(rings) <= 0) or np.any(rings <= 0):
        raise ValueError("rings must be positive and strictly increasing")
    if rings.shape != ring_priors.shape:
        raise ValueError("ring_priors must match rings")
    if noise_psd <= 0:
        raise ValueError("noise_psd must be positive for threshold placement")

    cuts = []
    for i in range(rings.size - 1):
        r_lo, r_hi = rings[i], rings[i + 1]
        p_lo, p_hi = ring_priors[i], ring_priors[i + 1]

        def balance(m):
            # log pi_lo f(m | r_lo) - log pi_hi f(m | r_hi), common factors dropped
            return (np.log(p_lo) - np.log(p_hi)
                    + (r_hi**2 - r_lo**2) / noise_psd
                    + _log_i0(2.0 * m * r_lo / noise_psd)
                    - _log_i0(2.0 * m * r_hi / noise_psd))

        lo, hi = r_lo, r_hi
        f_lo, f_hi = balance(lo), balance(hi)
        if not (f_lo > 0 > f_hi):
            import warnings
            warnings.warn("no density crossover between rings "
                          f"{r_lo:.3e} and {r_hi:.3e}; using the midpoint",
                          RuntimeWarning)
            cuts.append(0.5 * (r_lo + r_hi))
            continue
        while (hi - lo) > 1e-12 * hi:
            mid = 0.5 * (lo + hi)
            if balance(mid) > 0:
                lo = mid
            else:
                hi = mid
        cuts.append(0.5 * (lo + hi))

    thresholds = np.concatenate([[0.0], cuts, [np.inf]])
    return TsThresholds(rings=rings, ring_priors=ring_priors, thresholds=thresholds)


def ts_block(w: np.ndarray, thresholds: TsThresholds,
             constellation: Constellation) -> np.ndarray:
    """Two-stage rule: pick the ring by |w| bins, then the closest phase on it.

    Bins are left-closed, m_{i-1} <= |w| < m_i, so a magnitude exactly on a
    threshold belongs to the ring above it.
    """
    w = np.asarray(w, dtype=complex)
    radii, _, ring_index = amplitude_rings(constellation)
    if radii.size != thresholds.rings.size or not np.allclose(radii, thresholds.rings, rtol=1e-9):
        raise ValueError("thresholds were built for a different ring layout")
    ring = np.searchsorted(thresholds.thresholds, np.abs(w), side="right") - 1

    angles = np.angle(constellation.points)
    w_angle = np.angle(w)
    decisions = np.empty(w.shape, dtype=int)
    for r in range(radii.size):
        members = np.flatnonzero(ring_index == r)
        rows = ring == r
        if not np.any(rows):
            continue
        diff = np.angle(np.exp(1j * (w_angle[rows, None] - angles[None, members])))
        decisions[rows] = members[np.argmin(np.abs(diff), axis=1)]
    return decisions


def ts(w: complex, thresholds: TsThresholds, constellation: Constellation) -> int:
    return int(ts_block(np.array([w]), thresholds, constellation)[0])


def _default_test_phases() -> np.ndarray:
    return np.pi * np.arange(-32, 32) / 128.0


@dataclass(frozen=True, eq=False)
class BpsConfig:
    """Blind phase search configuration.

    ``test_phases`` spans one quadrant symmetry sector [-pi/4, pi/4) of the
    square constellation; ``window`` is the odd number of symbols whose
    distances are averaged around each position (truncated at block edges).
    """

    window: int = 15
    test_phases: np.ndarray = field(default_factory=_default_test_phases)

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd count, got {self.window}")
        p = np.asarray(self.test_phases, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("test_phases must be a 1-d grid")
        if p.min() < -np.pi / 4 - 1e-12 or p.max() >= np.pi / 4:
            raise ValueError("test_phases must cover [-pi/4, pi/4)")
        object.__setattr__(self, "test_phases", p)


def _sliding_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average along axis 0, truncated at the edges."""
    n = values.shape[0]
    half = window // 2
    cum = np.cumsum(values, axis=0)
    cum = np.concatenate([np.zeros((1,) + values.shape[1:]), cum], axis=0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    lo = np.maximum(np.arange(n) - half, 0)
    counts = (hi - lo).astype(float)
    return (cum[hi] - cum[lo]) / counts.reshape(-1, *([1] * (values.ndim - 1)))


def bps_recover(v_block: np.ndarray, cfg: BpsConfig,
                constellation: Constellation) -> np.ndarray:
    """Blind phase search over a block of matched-filter outputs.

    For every symbol and test phase the squared distance to the nearest
    constellation point is computed, distances are averaged over the sliding
    window, and each symbol is de-rotated by its minimizing phase.  The
    chosen phases are unwrapped modulo pi/2 across the block so the output
    cannot jump by a quadrant mid-block.

    Parameters
    ----------
    v_block : array of complex matched-filter outputs, length >= window
    cfg : BpsConfig
    constellation : decision alphabet

    Returns
    -------
    array of de-rotated outputs, same shape as ``v_block``
    """
    v = np.asarray(v_block, dtype=complex)
    if v.ndim != 1:
        raise ValueError("v_block must be 1-d")
    if v.size < cfg.window:
        raise ValueError(f"block of {v.size} symbols is shorter than the window {cfg.window}")

    rotors = np.exp(-1j * cfg.test_phases)
    n_phase = rotors.size
    dmin = np.empty((v.size, n_phase))
    chunk = max(1, 2_000_000 // (n_phase * constellation.size))
    for start in range(0, v.size, chunk):
        sl = slice(start, min(start + chunk, v.size))
        rotated = v[sl, None] * rotors[None, :]
        d2 = np.abs(rotated[:, :, None] - constellation.points[None, None, :]) ** 2
        dmin[sl] = d2.min(axis=2)

    avg = _sliding_mean(dmin, cfg.window)
    chosen = cfg.test_phases[np.argmin(avg, axis=1)]
    chosen = np.unwrap(chosen, period=np.pi / 2)
    return v * np.exp(-1j * chosen)
