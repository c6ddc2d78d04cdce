"""Independent reference results used to check the library.

Everything in this module is computed from first principles with numpy and
scipy only -- nothing is imported from the package under test -- so
agreement between the two is evidence, not circularity.
"""

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, fresnel, logsumexp
from scipy.stats import rice


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def qam16_awgn_ser(es, n0):
    """Closed-form symbol error rate of square 16-QAM on an AWGN channel.

    With mean symbol energy ``es`` and complex noise variance ``n0`` the
    per-axis error probability is p = 1.5 Q(sqrt(es / (5 n0))) and the
    symbol error rate is 1 - (1 - p)^2.
    """
    p = 1.5 * qfunc(np.sqrt(es / (5.0 * n0)))
    return 1.0 - (1.0 - p) ** 2


def triangular_rotation(eta, z, period):
    """Continuum matched-filter gain of a unit-energy triangular pulse.

    For g(t) = c (T/2 - |T/2 - t|) with c^2 = 12/T^3 the integral
    R(z) = int g^2 exp(j eta z g^2) dt reduces, after substituting the
    distance u from the nearest pulse edge, to Fresnel integrals:

        R = 2 c^2 (U e^{j a U^2} - sqrt(pi/(2a)) (C + jS)) / (2 j a)

    with a = eta z c^2, U = T/2 and C, S evaluated at U sqrt(2a/pi).
    No sampling grid is involved, so this is an independent reference for
    any discretized evaluation of the same quantity.
    """
    if z == 0.0 or eta == 0.0:
        return 1.0 + 0.0j
    if eta * z < 0.0:
        return np.conj(triangular_rotation(abs(eta), abs(z), period))
    c2 = 12.0 / period**3
    a = eta * z * c2
    big_u = period / 2.0
    s_f, c_f = fresnel(big_u * np.sqrt(2.0 * a / np.pi))
    integral = (big_u * np.exp(1j * a * big_u**2)
                - np.sqrt(np.pi / (2.0 * a)) * (c_f + 1j * s_f)) / (2j * a)
    return complex(2.0 * c2 * integral)


def rice_ring_crossover(r_lo, r_hi, p_lo, p_hi, n0):
    """Magnitude where the prior-weighted Rice densities of two rings cross.

    A noisy point of true radius r has |w| ~ Rice(nu=r, sigma) with
    sigma^2 = n0/2 per quadrature; the crossover between two consecutive
    radii is the root of the weighted log-density difference, located with
    scipy's Brent solver on [r_lo, r_hi].
    """
    sigma = np.sqrt(n0 / 2.0)

    def log_density_gap(m):
        return (np.log(p_lo) + rice.logpdf(m, r_lo / sigma, scale=sigma)
                - np.log(p_hi) - rice.logpdf(m, r_hi / sigma, scale=sigma))

    return brentq(log_density_gap, r_lo, r_hi, xtol=1e-18, rtol=1e-15)


def gaussian_mixture_log_scores(u, means, cov, priors, cond):
    """Mixture log-scores via a dense solve against the full covariance.

    ``means`` has shape (n_levels, n_points, dim); ``cond[j, i]`` is the
    probability of level j given point i.  Requires a full-rank covariance.
    Returns a (batch, n_points) array of log pi_i + logsumexp_j over the
    Gaussian components, directly from the quadratic form -- no whitening.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n_lvl, n_pt, dim = means.shape
    flat = means.reshape(n_lvl * n_pt, dim)
    diff = u[:, None, :] - flat[None, :, :]
    solved = np.linalg.solve(cov, diff.reshape(-1, dim).T).T.reshape(diff.shape)
    d2 = np.einsum("bkd,bkd->bk", diff, solved).reshape(-1, n_lvl, n_pt)
    with np.errstate(divide="ignore"):
        log_priors = np.log(np.asarray(priors, dtype=float))
        log_cond = np.log(np.asarray(cond, dtype=float))
    return log_priors[None, :] + logsumexp(log_cond[None, :, :] - 0.5 * d2, axis=1)


def qam16_points(es, peak_prior=None):
    """The {+-1, +-3}^2 grid at mean energy ``es`` with optional peaked priors."""
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    points = (levels[:, None] + 1j * levels[None, :]).ravel() * np.sqrt(es / 10.0)
    if peak_prior is None:
        priors = np.full(16, 1.0 / 16.0)
    else:
        priors = np.full(16, (1.0 - peak_prior) / 15.0)
        priors[0] = peak_prior
    return points, priors


def _distinct_energies(points, priors, rel_tol=1e-9):
    energies = np.abs(points) ** 2
    order = np.argsort(energies)
    values, weights = [], []
    for idx in order:
        if values and abs(energies[idx] - values[-1]) <= rel_tol * energies.max():
            weights[-1] += priors[idx]
        else:
            values.append(energies[idx])
            weights.append(priors[idx])
    return np.array(values), np.array(weights)


def mixture_map_ser_statistic_level(es, n0, eta, period, peak_prior=None,
                                    n_symbols=100_000, seed=7):
    """Monte-Carlo SER of the exact mixture-MAP rule on the scalar statistic.

    Draws the matched-filter output directly from its model -- the sent
    point rotated by the continuum triangular-pulse gain at the realized
    interference level, plus circular noise of variance ``n0`` -- and
    decides with the exact mixture likelihood over the interferer's energy
    classes.  Because no waveform is sampled, this shows the behaviour of
    the decision statistic itself at powers where any practical sampling
    grid would alias the phase.
    """
    rng = np.random.default_rng(seed)
    points, priors = qam16_points(es, peak_prior)
    intf_energy, intf_weight = _distinct_energies(points, priors)

    # Mixture centers mu[m, i] = R(|x_i|^2 + 2 b_m) x_i over interferer classes.
    rot = np.array([[triangular_rotation(eta, abs(x) ** 2 + 2.0 * b, period)
                     for x in points] for b in intf_energy])
    mu = rot * points[None, :]
    log_priors = np.log(priors)
    log_weight = np.log(intf_weight)

    sent = rng.choice(points.size, size=n_symbols, p=priors)
    other = rng.choice(points.size, size=n_symbols, p=priors)
    s = np.abs(points[sent]) ** 2 + 2.0 * np.abs(points[other]) ** 2
    s_values = np.unique(np.round(s / s.max(), 12))
    rot_of = {v: triangular_rotation(eta, v * s.max(), period) for v in s_values}
    centers = np.array([rot_of[v] for v in np.round(s / s.max(), 12)]) * points[sent]
    noise = np.sqrt(n0 / 2.0) * (rng.standard_normal(n_symbols)
                                 + 1j * rng.standard_normal(n_symbols))
    v = centers + noise

    errors = 0
    for start in range(0, n_symbols, 20_000):
        chunk = v[start:start + 20_000]
        d2 = np.abs(chunk[:, None, None] - mu[None, :, :]) ** 2
        scores = log_priors[None, :] + logsumexp(
            log_weight[None, :, None] - d2 / n0, axis=1)
        hard = np.argmax(scores, axis=1)
        errors += int(np.sum(hard != sent[start:start + 20_000]))
    return errors / n_symbols
