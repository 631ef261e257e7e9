"""Distances between sample representations.

Distribution representations are compared with a squared L2 discrepancy
either between outcome pdfs (discrete sum over the grid) or between rate
CDFs (a quadratic form in the component weights through a precomputed Gram
matrix of CDF cross-integrals on [0, C]). Relative-abundance baselines use
conventional Euclidean and Manhattan distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.stats import gamma as gamma_dist

from .errors import QuadratureError, ValidationError
from .mixture import ComponentSet

METRICS = ("l2pdf", "l2cdf", "euclidean", "manhattan")

_NEG_TOL = 1e-10


@dataclass(frozen=True)
class GramMatrix:
    """CDF cross-integrals ∫ F_m1 F_m2 on [0, C] for one component set.

    The structural-zero CDF is the constant 1 on [0, C] (point mass at rate
    0); the high-count CDF is 0 on [0, C), its jump at C having measure zero.
    """

    component_set: ComponentSet
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = len(self.component_set)
        if v.shape != (m, m):
            raise ValidationError("gram matrix must be square over the components")
        if not np.allclose(v, v.T, atol=1e-12):
            raise ValidationError("gram matrix must be symmetric")
        eigmin = np.linalg.eigvalsh(v).min()
        if eigmin < -1e-8 * max(1.0, np.trace(v)):
            raise ValidationError("gram matrix is not positive semidefinite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DistanceRecord:
    """Per-OTU distance contributions and their total."""

    contributions: dict
    total: float

    def __post_init__(self):
        vals = np.array(list(self.contributions.values()), dtype=float)
        if vals.size and vals.min() < 0:
            raise ValidationError("distance contributions must be nonnegative")
        if abs(self.total - vals.sum()) > 1e-10 * max(1.0, abs(self.total)):
            raise ValidationError("total does not match the contributions")


def l2_pdf(pdf_a, pdf_b) -> float:
    """Squared discrepancy between two outcome pdfs, summed over the grid."""
    a = np.asarray(pdf_a, dtype=float)
    b = np.asarray(pdf_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("pdfs live on different grids")
    d = a - b
    return float(d @ d)


def build_gram(component_set: ComponentSet, epsabs: float = 1e-9) -> GramMatrix:
    """Gram matrix of component-CDF products by adaptive quadrature.

    Entries involving the two point masses are exact: the zero-mass diagonal
    is C, anything against the high mass is 0. Gamma rows and the zero-gamma
    cross terms are integrated numerically to epsabs.
    """
    c = float(component_set.truncation_c)
    m = len(component_set)
    alphas, betas = component_set.gamma_params()
    g = alphas.size
    values = np.zeros((m, m))
    values[0, 0] = c

    if g:
        pairs = [(i, j) for i in range(g) for j in range(i, g)]
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])

        def integrand(x):
            cdfs = gamma_dist.cdf(x, a=alphas, scale=1.0 / betas)
            return np.concatenate([cdfs, cdfs[ii] * cdfs[jj]])

        result, err = quad_vec(integrand, 0.0, c, epsabs=epsabs, epsrel=0.0)
        if err > max(epsabs * 10, 1e-7):
            raise QuadratureError(f"gram quadrature error {err:g} above tolerance")
        values[0, 1 : g + 1] = values[1 : g + 1, 0] = result[:g]
        block = np.zeros((g, g))
        block[ii, jj] = block[jj, ii] = result[g:]
        values[1 : g + 1, 1 : g + 1] = block

    return GramMatrix(component_set=component_set, values=values)


def l2_cdf(weights_a, weights_b, gram: GramMatrix) -> float:
    """Squared CDF discrepancy as a quadratic form in the weight difference."""
    a = np.asarray(weights_a, dtype=float)
    b = np.asarray(weights_b, dtype=float)
    m = gram.values.shape[0]
    if a.shape != (m,) or b.shape != (m,):
        raise ValidationError("weights do not align with the gram matrix")
    d = a - b
    value = float(d @ gram.values @ d)
    if value < -_NEG_TOL:
        raise QuadratureError(f"quadratic form returned {value:g}, below the negativity tolerance")
    return max(0.0, value)


def euclidean(rel_a, rel_b) -> float:
    a = np.asarray(rel_a, dtype=float)
    b = np.asarray(rel_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("vectors differ in length")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def manhattan(rel_a, rel_b) -> float:
    a = np.asarray(rel_a, dtype=float)
    b = np.asarray(rel_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError("vectors differ in length")
    return float(np.sum(np.abs(a - b)))


def total_distance(a, b, metric: str, grams: dict | None = None) -> DistanceRecord:
    """Sum per-OTU contributions into one distance between two entities.

    For the distribution metrics, `a` and `b` map otu_id to a
    SampleDistribution (l2pdf uses the pdfs, l2cdf the component weights plus
    that OTU's gram matrix). For the abundance baselines they map otu_id to a
    scalar relative abundance; contributions are squared differences under
    euclidean (so the total is the squared distance, which ranks identically)
    and absolute differences under manhattan.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    if set(a) != set(b):
        raise ValidationError("entities cover different OTU sets")
    if metric == "l2cdf" and (grams is None or set(grams) < set(a)):
        raise ValidationError("l2cdf needs a gram matrix per OTU")

    contributions = {}
    for otu in a:
        if metric == "l2pdf":
            d = l2_pdf(a[otu].pdf, b[otu].pdf)
        elif metric == "l2cdf":
            d = l2_cdf(a[otu].sample_weights, b[otu].sample_weights, grams[otu])
        elif metric == "euclidean":
            d = float(a[otu] - b[otu]) ** 2
        else:
            d = abs(float(a[otu] - b[otu]))
        contributions[otu] = d
    return DistanceRecord(contributions=contributions, total=float(sum(contributions.values())))


def pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All squared-L2 distances between rows of `a` and rows of `b`."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1] != b.shape[1]:
        raise ValidationError("row vectors differ in length")
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.clip(sq, 0.0, None)


def pairwise_quadform(a: np.ndarray, b: np.ndarray, gram: GramMatrix) -> np.ndarray:
    """All (row_a - row_b) G (row_a - row_b)' values between two weight stacks."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    g = gram.values
    if a.shape[1] != g.shape[0] or b.shape[1] != g.shape[0]:
        raise ValidationError("weights do not align with the gram matrix")
    ag = a @ g
    quad = (ag * a).sum(axis=1)[:, None] + ((b @ g) * b).sum(axis=1)[None, :] - 2.0 * ag @ b.T
    return np.clip(quad, 0.0, None)


def pairwise_abs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All Manhattan distances between rows of `a` and rows of `b`."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1] != b.shape[1]:
        raise ValidationError("row vectors differ in length")
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
