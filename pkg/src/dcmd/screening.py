"""OTU screening: Mann-Whitney U tests with Benjamini-Hochberg adjustment."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import ValidationError
from .otu import OtuTable, relative_abundance

log = logging.getLogger(__name__)

EXACT_SIZE_CUTOFF = 10


def _exact_u_cdf_counts(n1: int, n2: int) -> np.ndarray:
    """Number of rank assignments giving each U value, for tie-free data.

    counts[u] = #{subsets S of {1..n1+n2}, |S| = n1 : U(S) = u}; the classic
    Gaussian-binomial recurrence over items added one at a time.
    """
    u_max = n1 * n2
    # float64 keeps the tallies exact far beyond the sizes enumerated here
    # while avoiding int64 overflow for very lopsided groups
    table = np.zeros((n1 + 1, u_max + 1))
    table[0, 0] = 1.0
    for item in range(1, n1 + n2 + 1):
        for k in range(min(item, n1), 0, -1):
            # choosing item `item` as the k-th member of group 1 adds
            # (item - k) group-2 elements below it
            add = item - k
            if add > u_max:
                continue
            table[k, add:] += table[k - 1, : u_max + 1 - add]
    return table[n1]


def mann_whitney_u(
    group_a,
    group_b,
    exact_size_cutoff: int = EXACT_SIZE_CUTOFF,
) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Returns (U, p) where U is the statistic for `group_a` computed from
    midrank sums. The p-value is exact (full enumeration over rank
    assignments) when the smaller group has at most `exact_size_cutoff`
    observations and the pooled data has no ties; otherwise it uses the
    normal approximation with tie-corrected variance and a continuity
    correction.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both groups must be non-empty")
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    r1 = ranks[:n1].sum()
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1

    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))

    if not has_ties and min(n1, n2) <= exact_size_cutoff:
        counts = _exact_u_cdf_counts(n1, n2)
        u_min = int(round(min(u1, u2)))
        p = 2.0 * counts[: u_min + 1].sum() / counts.sum()
        return float(u1), float(min(1.0, p))

    n = n1 + n2
    tie_term = (tie_counts**3 - tie_counts).sum()
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return float(u1), 1.0
    mu = n1 * n2 / 2.0
    z = (abs(u1 - mu) - 0.5) / np.sqrt(var)
    p = 2.0 * ndtr(-max(z, 0.0))
    return float(u1), float(min(1.0, p))


def benjamini_hochberg(p_values) -> np.ndarray:
    """Step-up q-values, returned in the input order and clipped to [0, 1]."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValidationError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.clip(q_sorted, 0.0, 1.0)
    return q


@dataclass(frozen=True)
class ScreeningResult:
    """Per-OTU association screen between two classes."""

    otu_ids: tuple[str, ...]
    u_statistics: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    retained: np.ndarray
    threshold: float

    @property
    def n_retained(self) -> int:
        return int(self.retained.sum())

    def retained_otu_ids(self) -> tuple[str, ...]:
        return tuple(o for o, r in zip(self.otu_ids, self.retained) if r)


def screen_otus(table: OtuTable, threshold: float = 0.05) -> ScreeningResult:
    """Rank-test every OTU's relative abundance between the two classes.

    Mann-Whitney U per OTU, Benjamini-Hochberg across OTUs, retain where
    q < threshold. Zero retained OTUs is reported as a warning, not an error.
    """
    labels = table.label_array()
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise ValidationError(f"screening needs binary labels, found {len(classes)} classes")
    rel = relative_abundance(table)
    in_a = labels == classes[0]
    u_stats = np.empty(table.n_otus)
    p_vals = np.empty(table.n_otus)
    for j in range(table.n_otus):
        u_stats[j], p_vals[j] = mann_whitney_u(rel[in_a, j], rel[~in_a, j])
    q_vals = benjamini_hochberg(p_vals)
    retained = q_vals < threshold
    if not retained.any():
        log.warning("screening retained no OTUs at q < %s", threshold)
    return ScreeningResult(
        otu_ids=table.otu_ids,
        u_statistics=u_stats,
        p_values=p_vals,
        q_values=q_vals,
        retained=retained,
        threshold=threshold,
    )
