"""Sample-specific distributions.

Each observed count is converted into a posterior over the fitted mixture
components and, through a precomputed outcome-probability matrix, into a pdf
over the outcome grid {z, 0, 1, ..., C, C+}. The structural-zero outcome z is
kept distinct from an observed count of 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegeneratePosteriorError, ValidationError
from .mixture import ComponentSet, FittedMixture
from .nbinom import nb_logpmf, pmf_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutcomeGrid:
    """Ordered outcomes: structural zero z, counts 0..C, then C+."""

    truncation_c: int

    def __post_init__(self):
        if self.truncation_c < 1:
            raise ValidationError("truncation point must be >= 1")

    def __len__(self) -> int:
        return self.truncation_c + 3

    def labels(self) -> tuple[str, ...]:
        return ("z", *map(str, range(self.truncation_c + 1)), "high")


@dataclass(frozen=True)
class PMatrix:
    """Outcome probabilities per component at unit resolution.

    Row m is P(X = x | component m). Point-mass rows are indicators; gamma
    rows carry the count pmf over 0..C with the tail mass in the last column.
    """

    component_set: ComponentSet
    values: np.ndarray

    def __post_init__(self):
        grid = OutcomeGrid(self.component_set.truncation_c)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.component_set), len(grid)):
            raise ValidationError("matrix shape does not match components x outcomes")
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> OutcomeGrid:
        return OutcomeGrid(self.component_set.truncation_c)


@dataclass(frozen=True)
class SampleDistribution:
    """One sample's component weights and the induced outcome pdf."""

    sample_weights: np.ndarray
    pdf: np.ndarray

    def __post_init__(self):
        for name, vec, tol in (("sample_weights", self.sample_weights, 1e-10), ("pdf", self.pdf, 1e-10)):
            v = np.asarray(vec, dtype=float)
            if v.min() < -tol or abs(v.sum() - 1.0) > tol:
                raise ValidationError(f"{name} must lie on the probability simplex")
            object.__setattr__(self, name, v)


def build_p_matrix(mixture: FittedMixture) -> PMatrix:
    """Precompute per-component outcome probabilities at resolution 1."""
    cs = mixture.component_set
    c = cs.truncation_c
    m = len(cs)
    values = np.zeros((m, c + 3))
    values[0, 0] = 1.0
    values[-1, -1] = 1.0
    alphas, betas = cs.gamma_params()
    if alphas.size:
        values[1:-1, 1:] = pmf_grid(alphas, betas, np.ones(1), c)[:, 0, :]
    return PMatrix(component_set=cs, values=values)


def component_posterior(
    n: int,
    t: float,
    mixture: FittedMixture,
    fallback_to_prior: bool = False,
) -> np.ndarray:
    """Posterior membership weights for one observed count.

    Gammas contribute prior weight times the count pmf at the sample's
    resolution; the zero mass explains only n = 0 and the high mass only
    n > C, each scaled by its prior weight. Counts above C route entirely to
    the high-count component. All arithmetic is in log space.

    Raises DegeneratePosteriorError when nothing explains the observation,
    unless fallback_to_prior is set, in which case the prior restricted to
    the admissible components is returned (with a warning).
    """
    if n < 0 or t <= 0:
        raise ValidationError("need count >= 0 and resolution > 0")
    cs = mixture.component_set
    c = cs.truncation_c
    w = mixture.weights
    m = len(cs)

    if n > c:
        out = np.zeros(m)
        out[-1] = 1.0
        return out

    admissible = np.zeros(m, dtype=bool)
    log_p = np.full(m, -np.inf)
    if n == 0:
        admissible[0] = True
        if w[0] > 0:
            log_p[0] = np.log(w[0])
    alphas, betas = cs.gamma_params()
    if alphas.size:
        admissible[1:-1] = True
        with np.errstate(divide="ignore"):
            log_p[1:-1] = np.log(w[1:-1]) + nb_logpmf(n, alphas, betas, t)

    if np.all(np.isinf(log_p)):
        if not fallback_to_prior:
            raise DegeneratePosteriorError(f"no component explains count {n} at resolution {t:g}")
        prior = np.where(admissible, w, 0.0)
        if prior.sum() <= 0:
            prior = admissible.astype(float)
        log.warning("degenerate posterior for count %d; falling back to prior weights", n)
        return prior / prior.sum()

    return np.exp(log_p - logsumexp(log_p))


def sample_pdf(sample_weights: np.ndarray, p_matrix: PMatrix) -> np.ndarray:
    """Outcome pdf induced by the component weights: w'P.

    The final column absorbs any residual so the result sums to 1 exactly.
    """
    w = np.asarray(sample_weights, dtype=float)
    if w.shape != (p_matrix.values.shape[0],):
        raise ValidationError("weights do not align with the matrix rows")
    pdf = w @ p_matrix.values
    pdf = np.clip(pdf, 0.0, None)
    pdf[-1] += max(0.0, 1.0 - pdf.sum())
    return pdf


def posterior_matrix(
    counts,
    resolutions,
    mixture: FittedMixture,
    fallback_to_prior: bool = False,
) -> np.ndarray:
    """Posterior weights for a whole count column, shape (n_samples, n_components).

    Vectorized equivalent of calling component_posterior per sample.
    """
    counts = np.asarray(counts)
    ts = np.asarray(resolutions, dtype=float)
    if counts.shape != ts.shape:
        raise ValidationError("counts and resolutions must align")
    if counts.min() < 0 or ts.min() <= 0:
        raise ValidationError("need counts >= 0 and resolutions > 0")
    cs = mixture.component_set
    c = cs.truncation_c
    w = mixture.weights
    n_samples = counts.size
    m = len(cs)

    log_p = np.full((n_samples, m), -np.inf)
    zero = counts == 0
    if w[0] > 0:
        log_p[zero, 0] = np.log(w[0])
    alphas, betas = cs.gamma_params()
    if alphas.size:
        with np.errstate(divide="ignore"):
            log_w = np.log(w[1:-1])
        log_p[:, 1:-1] = log_w[None, :] + nb_logpmf(
            counts[:, None].astype(float), alphas[None, :], betas[None, :], ts[:, None]
        )

    high = counts > c
    out = np.zeros((n_samples, m))
    out[high, -1] = 1.0

    rest = ~high
    lp = log_p[rest]
    norm = logsumexp(lp, axis=1, keepdims=True)
    bad = np.isinf(norm[:, 0])
    if bad.any():
        if not fallback_to_prior:
            idx = np.flatnonzero(rest)[np.flatnonzero(bad)[0]]
            raise DegeneratePosteriorError(
                f"no component explains count {int(counts[idx])} at resolution {ts[idx]:g}"
            )
        log.warning("degenerate posterior for %d sample(s); fell back to prior weights", int(bad.sum()))
        result = np.exp(lp - np.where(np.isinf(norm), 0.0, norm))
        for row in np.flatnonzero(bad):
            admissible = np.zeros(m, dtype=bool)
            admissible[1:-1] = True
            admissible[0] = bool(zero[rest][row])
            prior = np.where(admissible, w, 0.0)
            if prior.sum() <= 0:
                prior = admissible.astype(float)
            result[row] = prior / prior.sum()
        out[rest] = result
        return out
    out[rest] = np.exp(lp - norm)
    return out
