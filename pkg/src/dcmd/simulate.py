"""Synthetic sparse count data with class-dependent rate mixtures.

Each OTU gets a discrete rate mixture built by binning Beta draws: the unit
interval is split into M equal bins, each nonempty bin becomes a mixture
component whose rate sits at the bin's location scaled to the OTU's data
range, and the first bin is the structural zero (rate exactly 0). Classes
share the components but differ in their Beta shape, hence in how much mass
each class puts on low versus high bins. Counts are Poisson draws of the
per-sample rate times the sample's resolution.

Six preset scenarios sweep sparsity from mild to extreme; the last one is a
null case whose labels are permuted after generation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .otu import OtuTable

DEFAULT_SCENARIO_ALPHAS = {
    1: ((1.6, 2.0), (2.0, 2.4), (2.4, 2.8)),
    2: ((1.2, 1.8), (2.0, 2.4), (2.6, 3.0)),
    3: ((0.4, 0.8), (0.6, 1.0), (0.8, 1.2)),
    4: ((0.2, 0.3), (0.6, 0.7), (1.0, 1.1)),
    5: ((0.1, 0.2), (0.25, 0.35), (0.5, 0.6)),
    6: ((1.2, 1.8), (2.0, 2.4), (2.6, 3.0)),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one simulated dataset."""

    alpha_intervals: tuple = DEFAULT_SCENARIO_ALPHAS[1]
    beta_bounds: tuple[float, float] = (2.0, 6.5)
    class_size: int = 400
    n_otus: int = 25
    m_bounds: tuple[int, int] = (5, 15)
    range_bounds: tuple[float, float] = (100.0, 300.0)
    resolution_bounds: tuple[float, float] = (2.0 / 3.0, 4.0 / 5.0)
    null: bool = False
    jitter: bool = True
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if len(self.alpha_intervals) < 1:
            raise ValidationError("need at least one class")
        for lo, hi in self.alpha_intervals:
            if not 0 < lo < hi:
                raise ValidationError("alpha intervals must satisfy 0 < lower < upper")
        if self.class_size < 1 or self.n_otus < 1:
            raise ValidationError("class size and OTU count must be >= 1")
        if not 1 <= self.m_bounds[0] <= self.m_bounds[1]:
            raise ValidationError("bin-count bounds must be increasing and >= 1")
        for lo, hi in (self.beta_bounds, self.range_bounds, self.resolution_bounds):
            if not 0 < lo <= hi:
                raise ValidationError("bounds must be positive and increasing")

    @property
    def n_classes(self) -> int:
        return len(self.alpha_intervals)

    @property
    def n_samples(self) -> int:
        return self.n_classes * self.class_size


@dataclass(frozen=True)
class OtuTruth:
    """Generating parameters for one OTU, kept for diagnostics."""

    alphas: tuple
    beta: float
    n_bins: int
    data_range: float
    rates: np.ndarray
    component_index: np.ndarray


@dataclass(frozen=True)
class SimulatedDataset:
    table: OtuTable
    gen_labels: np.ndarray
    resolutions: np.ndarray
    truths: tuple
    config: ScenarioConfig


def generate_otu(alphas, beta: float, n_bins: int, data_range: float,
                 class_sizes, resolutions, rng, jitter: bool = True):
    """Counts and ground truth for one OTU.

    Per class: Beta(alpha_class, beta) draws land in one of n_bins equal
    bins; bin 0 members are structural zeros, bin k members share the rate
    (k + u)/n_bins * data_range with u the bin's jitter draw (0.5 when
    jitter is off). Counts are Poisson(rate * resolution).
    """
    offsets = np.concatenate([[0], np.cumsum(class_sizes)])
    n = int(offsets[-1])
    resolutions = np.asarray(resolutions, dtype=float)
    if resolutions.shape != (n,):
        raise ValidationError("resolutions must cover every sample")

    rates = np.zeros(n_bins)
    if n_bins > 1:
        u = rng.uniform(size=n_bins - 1) if jitter else np.full(n_bins - 1, 0.5)
        rates[1:] = (np.arange(1, n_bins) + u) / n_bins * data_range

    component = np.zeros(n, dtype=int)
    for b, alpha in enumerate(alphas):
        draws = rng.beta(alpha, beta, size=class_sizes[b])
        bins = np.minimum((draws * n_bins).astype(int), n_bins - 1)
        component[offsets[b] : offsets[b + 1]] = bins

    counts = rng.poisson(rates[component] * resolutions)
    truth = OtuTruth(
        alphas=tuple(float(a) for a in alphas),
        beta=float(beta),
        n_bins=int(n_bins),
        data_range=float(data_range),
        rates=rates,
        component_index=component,
    )
    return counts, truth


def generate_scenario(config: ScenarioConfig) -> SimulatedDataset:
    """Full dataset: J independent OTUs over shared samples and resolutions.

    Deterministic given config.seed; the per-OTU streams are spawned from
    one seed sequence so results do not depend on generation order. The
    null flag permutes the labels attached to the table, while gen_labels
    keeps the classes the counts were actually drawn from.
    """
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(2 + config.n_otus)
    rng = np.random.default_rng(children[0])

    n = config.n_samples
    class_sizes = [config.class_size] * config.n_classes
    gen_labels = np.repeat(np.arange(1, config.n_classes + 1), config.class_size)

    t = rng.uniform(*config.resolution_bounds, size=n)
    t = t / t.mean()

    counts = np.zeros((n, config.n_otus), dtype=int)
    truths = []
    for j in range(config.n_otus):
        rng_j = np.random.default_rng(children[2 + j])
        alphas = [rng_j.uniform(lo, hi) for lo, hi in config.alpha_intervals]
        beta = rng_j.uniform(*config.beta_bounds)
        n_bins = int(rng_j.integers(config.m_bounds[0], config.m_bounds[1] + 1))
        data_range = rng_j.uniform(*config.range_bounds)
        counts[:, j], truth = generate_otu(
            alphas, beta, n_bins, data_range, class_sizes, t, rng_j, jitter=config.jitter
        )
        truths.append(truth)

    labels = gen_labels.copy()
    if config.null:
        perm = np.random.default_rng(children[1]).permutation(n)
        labels = labels[perm]

    width = len(str(n))
    sample_ids = tuple(f"s{i + 1:0{width}d}" for i in range(n))
    otu_ids = tuple(f"otu{j + 1:02d}" for j in range(config.n_otus))
    table = OtuTable(
        counts=counts,
        sample_ids=sample_ids,
        otu_ids=otu_ids,
        labels=tuple(int(x) for x in labels),
    )
    return SimulatedDataset(
        table=table,
        gen_labels=gen_labels,
        resolutions=t,
        truths=tuple(truths),
        config=config,
    )


def scenario_presets() -> dict[int, ScenarioConfig]:
    """The six benchmark scenarios at full scale."""
    presets = {}
    for sid, intervals in DEFAULT_SCENARIO_ALPHAS.items():
        presets[sid] = ScenarioConfig(
            alpha_intervals=intervals,
            null=(sid == 6),
            name=f"scenario{sid}",
        )
    return presets


def preset(scenario: int, class_size: int = 400, n_otus: int = 25, seed: int = 0) -> ScenarioConfig:
    """One preset resized for a particular run."""
    presets = scenario_presets()
    if scenario not in presets:
        raise ValidationError(f"unknown scenario {scenario!r}; choose from {sorted(presets)}")
    return replace(presets[scenario], class_size=class_size, n_otus=n_otus, seed=seed)
