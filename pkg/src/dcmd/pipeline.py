"""End-to-end drivers: fit a table, represent samples, run benchmarks.

Fitting happens on training data only; test samples are represented through
the train-fitted mixtures, with their resolutions scaled by the training
mean total so both splits share a rate scale. Parallel execution (over OTUs
when fitting, over replicates when benchmarking) derives an independent
seed per unit of work, so results are identical for any worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifiers import (
    AbundanceDataset,
    DistributionDataset,
    kmeans_predict,
    kmeans_train,
    knn_predict,
    knn_train,
)
from .distances import GramMatrix, build_gram
from .errors import DegenerateOtuError, EmptyResultError, FitFailureError, ValidationError
from .evaluation import accuracy, split
from .mixture import FittedMixture, MixtureConfig, bootstrap_average, build_nested_family
from .otu import OtuTable, compute_resolutions, filter_table, relative_abundance
from .sampledist import PMatrix, build_p_matrix, posterior_matrix
from .simulate import generate_scenario, preset

log = logging.getLogger(__name__)

DEFAULT_METHODS = (
    "kmeans-l2pdf",
    "kmeans-l2cdf",
    "knn-l2pdf",
    "knn-l2cdf",
    "kmeans-euclidean",
    "kmeans-manhattan",
    "knn-euclidean",
    "knn-manhattan",
)


def parse_method(name: str) -> tuple[str, str]:
    try:
        algo, metric = name.split("-", 1)
    except ValueError:
        raise ValidationError(f"method {name!r} is not of the form algo-metric") from None
    if algo not in ("kmeans", "knn") or metric not in ("l2pdf", "l2cdf", "euclidean", "manhattan"):
        raise ValidationError(f"unknown method {name!r}")
    return algo, metric


@dataclass(frozen=True)
class FitConfig:
    bootstrap: int = 300
    seed: int = 0
    workers: int = 1
    max_iter: int = 4000
    mixture: MixtureConfig = field(default_factory=MixtureConfig)

    def __post_init__(self):
        if self.bootstrap < 1 or self.workers < 1 or self.max_iter < 1:
            raise ValidationError("bootstrap, workers and max_iter must be >= 1")


@dataclass(frozen=True)
class OtuModel:
    """One OTU's averaged mixture plus its precomputed matrices."""

    otu_id: str
    mixture: FittedMixture
    p_matrix: PMatrix
    gram: GramMatrix


@dataclass(frozen=True)
class ModelSet:
    """Fitted mixtures for every usable OTU of a training table."""

    models: tuple
    skipped: tuple
    n_bar: float
    bootstrap: int
    seed: int
    mixture_config: MixtureConfig

    @property
    def otu_ids(self) -> tuple:
        return tuple(m.otu_id for m in self.models)

    def by_id(self, otu_id: str) -> OtuModel:
        for m in self.models:
            if m.otu_id == otu_id:
                return m
        raise ValidationError(f"no fitted model for OTU {otu_id!r}")

    def restrict(self, otu_ids) -> "ModelSet":
        wanted = set(otu_ids)
        kept = tuple(m for m in self.models if m.otu_id in wanted)
        if not kept:
            raise EmptyResultError("no fitted OTUs left after restriction")
        return replace(self, models=kept)


def _otu_seed(seed: int, otu_index: int) -> int:
    return int(np.random.SeedSequence((seed, otu_index)).generate_state(1)[0])


def _fit_one_otu(args):
    counts, resolutions, mixture_config, b, seed, max_iter = args
    family = build_nested_family(counts, resolutions, mixture_config)
    return bootstrap_average(family, counts, resolutions, b=b, seed=seed, max_iter=max_iter)


def fit_table(table: OtuTable, config: FitConfig = FitConfig()) -> ModelSet:
    """Fit a bootstrap-averaged mixture per OTU column.

    All-zero OTUs are skipped and reported on the result rather than
    failing the run; a fit that fails to converge raises with the OTU named.
    """
    resolutions = compute_resolutions(table)
    tasks = []
    order = []
    skipped = []
    for j, otu_id in enumerate(table.otu_ids):
        column = table.counts[:, j]
        if not column.any():
            skipped.append(otu_id)
            continue
        order.append(otu_id)
        tasks.append(
            (column, resolutions, config.mixture, config.bootstrap,
             _otu_seed(config.seed, j), config.max_iter)
        )
    if not tasks:
        raise EmptyResultError("every OTU column is all zeros")

    try:
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                fitted = list(pool.map(_fit_one_otu, tasks))
        else:
            fitted = [_fit_one_otu(t) for t in tasks]
    except (FitFailureError, DegenerateOtuError) as exc:
        raise FitFailureError(f"fit failed: {exc}") from exc

    models = tuple(
        OtuModel(
            otu_id=otu_id,
            mixture=mix,
            p_matrix=build_p_matrix(mix),
            gram=build_gram(mix.component_set),
        )
        for otu_id, mix in zip(order, fitted)
    )
    if skipped:
        log.warning("skipped %d all-zero OTU(s): %s", len(skipped), ", ".join(skipped))
    return ModelSet(
        models=models,
        skipped=tuple(skipped),
        n_bar=float(table.totals.mean()),
        bootstrap=config.bootstrap,
        seed=config.seed,
        mixture_config=config.mixture,
    )


def represent(models: ModelSet, table: OtuTable) -> DistributionDataset:
    """Sample-specific distributions for a table under fitted mixtures.

    Resolutions are the table's totals over the model set's training mean,
    so test samples are scaled like the data the mixtures were fitted on.
    Degenerate posteriors fall back to the prior with a logged warning.
    """
    totals = table.totals.astype(float)
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        raise ValidationError(f"sample {table.sample_ids[zero[0]]!r} has zero total reads")
    t = totals / models.n_bar

    col = {otu_id: j for j, otu_id in enumerate(table.otu_ids)}
    missing = [m.otu_id for m in models.models if m.otu_id not in col]
    if missing:
        raise ValidationError(f"table lacks fitted OTU {missing[0]!r}")

    weights = {}
    p_matrices = {}
    grams = {}
    for m in models.models:
        counts = table.counts[:, col[m.otu_id]]
        weights[m.otu_id] = posterior_matrix(counts, t, m.mixture, fallback_to_prior=True)
        p_matrices[m.otu_id] = m.p_matrix
        grams[m.otu_id] = m.gram
    return DistributionDataset(
        sample_ids=table.sample_ids,
        otu_ids=models.otu_ids,
        weights=weights,
        p_matrices=p_matrices,
        grams=grams,
    )


def abundance_dataset(table: OtuTable, otu_ids=None) -> AbundanceDataset:
    """Relative abundances, normalized by full-table totals.

    When `otu_ids` restricts the columns, normalization still uses every
    OTU in the table so abundances keep their meaning.
    """
    matrix = relative_abundance(table)
    if otu_ids is None:
        otu_ids = table.otu_ids
    else:
        col = {o: j for j, o in enumerate(table.otu_ids)}
        missing = [o for o in otu_ids if o not in col]
        if missing:
            raise ValidationError(f"table lacks OTU {missing[0]!r}")
        matrix = matrix[:, [col[o] for o in otu_ids]]
    return AbundanceDataset(
        sample_ids=table.sample_ids,
        otu_ids=tuple(otu_ids),
        matrix=matrix,
    )


def train_and_predict(
    method: str,
    train_ds,
    train_labels,
    test_ds,
    knn_k="cv",
    seed: int = 0,
):
    """Run one algo-metric pair; returns (predictions, fitted model)."""
    algo, metric = parse_method(method)
    if algo == "kmeans":
        model = kmeans_train(train_ds, train_labels, metric)
        return kmeans_predict(model, test_ds), model
    model = knn_train(train_ds, train_labels, metric, k=knn_k, seed=seed)
    return knn_predict(model, test_ds), model


@dataclass(frozen=True)
class BenchmarkConfig:
    scenarios: tuple = (1, 2, 3, 4, 5, 6)
    replicates: int = 10
    class_size: int = 400
    n_otus: int = 25
    bootstrap: int = 300
    train_fraction: float = 0.6
    methods: tuple = DEFAULT_METHODS
    knn_k: object = "cv"
    seed: int = 0
    workers: int = 1
    mixture: MixtureConfig = field(default_factory=MixtureConfig)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("need at least one replicate")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train fraction must be in (0, 1)")
        for m in self.methods:
            parse_method(m)
        unknown = [s for s in self.scenarios if s not in (1, 2, 3, 4, 5, 6)]
        if unknown:
            raise ValidationError(f"unknown scenario {unknown[0]!r}")


@dataclass(frozen=True)
class ReplicateResult:
    scenario: int
    replicate: int
    accuracies: dict
    knn_k: dict
    n_train: int
    n_test: int


@dataclass(frozen=True)
class BenchmarkResult:
    config: BenchmarkConfig
    replicates: tuple

    def summary(self) -> list[dict]:
        """Long-format rows: one per (scenario, method) with mean and SD."""
        rows = []
        for scenario in self.config.scenarios:
            reps = [r for r in self.replicates if r.scenario == scenario]
            for method in self.config.methods:
                values = np.array([r.accuracies[method] for r in reps])
                rows.append(
                    {
                        "scenario": scenario,
                        "method": method,
                        "metric": "accuracy",
                        "mean": float(values.mean()),
                        "sd": float(values.std(ddof=1)) if values.size > 1 else None,
                        "replicates": int(values.size),
                    }
                )
        return rows

    def mean_accuracy(self, scenario: int, method: str) -> float:
        values = [r.accuracies[method] for r in self.replicates if r.scenario == scenario]
        if not values:
            raise ValidationError(f"no replicates for scenario {scenario}")
        return float(np.mean(values))


def run_replicate(config: BenchmarkConfig, scenario: int, replicate: int) -> ReplicateResult:
    """One generate / split / fit / classify pass for one scenario."""
    ss = np.random.SeedSequence((config.seed, scenario, replicate))
    data_seed, split_seed, fit_seed, knn_seed = (int(s) for s in ss.generate_state(4))

    scenario_config = preset(
        scenario, class_size=config.class_size, n_otus=config.n_otus, seed=data_seed
    )
    data = generate_scenario(scenario_config)
    # samples with zero total reads carry no information and break
    # resolution scaling; drop them before splitting
    table = filter_table(data.table, min_reads=1)
    labels = table.label_array()

    train_idx, test_idx = split(labels, config.train_fraction, stratified=True, seed=split_seed)
    train_table = table.take_samples(train_idx)
    test_table = table.take_samples(test_idx)
    train_labels = labels[train_idx]
    test_labels = labels[test_idx]

    needs_fit = any(parse_method(m)[1] in ("l2pdf", "l2cdf") for m in config.methods)
    train_dist = test_dist = None
    if needs_fit:
        models = fit_table(
            train_table,
            FitConfig(bootstrap=config.bootstrap, seed=fit_seed, workers=1, mixture=config.mixture),
        )
        train_dist = represent(models, train_table)
        test_dist = represent(models, test_table)

    needs_abundance = any(parse_method(m)[1] in ("euclidean", "manhattan") for m in config.methods)
    train_ab = test_ab = None
    if needs_abundance:
        train_ab = abundance_dataset(train_table)
        test_ab = abundance_dataset(test_table)

    accuracies = {}
    chosen_k = {}
    for method in config.methods:
        algo, metric = parse_method(method)
        distributional = metric in ("l2pdf", "l2cdf")
        tr = train_dist if distributional else train_ab
        te = test_dist if distributional else test_ab
        predictions, model = train_and_predict(
            method, tr, train_labels, te, knn_k=config.knn_k, seed=knn_seed
        )
        accuracies[method] = accuracy([p.label for p in predictions], test_labels)
        if algo == "knn":
            chosen_k[method] = model.k
    return ReplicateResult(
        scenario=scenario,
        replicate=replicate,
        accuracies=accuracies,
        knn_k=chosen_k,
        n_train=len(train_idx),
        n_test=len(test_idx),
    )


def _replicate_task(args):
    config, scenario, replicate = args
    return run_replicate(config, scenario, replicate)


def run_benchmark(config: BenchmarkConfig) -> BenchmarkResult:
    """All scenario x replicate cells, optionally in parallel."""
    tasks = [
        (config, scenario, rep)
        for scenario in config.scenarios
        for rep in range(config.replicates)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_replicate_task, tasks))
    else:
        results = [_replicate_task(t) for t in tasks]
    return BenchmarkResult(config=config, replicates=tuple(results))
