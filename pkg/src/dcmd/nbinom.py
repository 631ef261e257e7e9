"""Negative binomial probabilities for Poisson-Gamma rate components.

A count observed at resolution t from a Gamma(alpha, beta) rate component is
negative binomial with size alpha and success probability beta / (t + beta).
Everything here is computed in log space so that large counts and extreme
resolutions do not underflow.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betainc, gammaln, xlogy

from .errors import ValidationError


def nb_logpmf(x, alpha, beta, t):
    """log P(X = x) for the Poisson-Gamma count distribution.

    All arguments broadcast; alpha, beta and t must be positive and finite.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    t = np.asarray(t, dtype=float)
    for name, v in (("alpha", alpha), ("beta", beta), ("t", t)):
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValidationError(f"nb_logpmf requires finite {name} > 0")
    x = np.asarray(x, dtype=float)
    # success probability p = beta/(t+beta); failure probability t/(t+beta)
    comb = gammaln(x + alpha) - gammaln(x + 1.0) - gammaln(alpha)
    log_p = np.log(beta) - np.log(t + beta)
    return comb + alpha * log_p + xlogy(x, t) - xlogy(x, t + beta)


def nb_pmf(x, alpha, beta, t):
    """P(X = x) for the Poisson-Gamma count distribution; in [0, 1]."""
    return np.exp(nb_logpmf(x, alpha, beta, t))


def nb_survival(x: int, alpha: float, beta: float, t: float) -> float:
    """P(X > x), evaluated analytically through the regularized beta function."""
    p = beta / (t + beta)
    return float(1.0 - betainc(alpha, x + 1.0, p))


def pmf_grid(alphas, betas, ts, c: int) -> np.ndarray:
    """Per-sample pmf tensor for a set of gamma components.

    Returns an array of shape (n_components, n_samples, c + 2) where the last
    column holds the upper-tail mass P(X > c) so each (component, sample) row
    sums to one.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    ts = np.asarray(ts, dtype=float)
    x = np.arange(c + 1, dtype=float)
    # logpmf[m, i, x] = comb[m, x] + alpha_m * log(beta_m/(t_i+beta_m)) + x * log(t_i/(t_i+beta_m))
    comb = (
        gammaln(x[None, :] + alphas[:, None])
        - gammaln(x[None, :] + 1.0)
        - gammaln(alphas[:, None])
    )
    log_p = np.log(betas)[:, None] - np.log(ts[None, :] + betas[:, None])
    log_q = np.log(ts)[None, :] - np.log(ts[None, :] + betas[:, None])
    logpmf = (
        comb[:, None, :]
        + (alphas[:, None] * log_p)[:, :, None]
        + x[None, None, :] * log_q[:, :, None]
    )
    pmf = np.exp(logpmf)
    tail = np.clip(1.0 - pmf.sum(axis=2), 0.0, 1.0)
    return np.concatenate([pmf, tail[:, :, None]], axis=2)
