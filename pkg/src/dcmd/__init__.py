"""Distance-based classification of sparse count data.

Per-feature zero-inflated Poisson-Gamma mixtures turn each sample's count
into a distribution over underlying rates; samples are classified by L2
distances between those distributions with centroid or k-NN rules, with
relative-abundance baselines, OTU screening, a scenario simulator, and a
benchmark harness behind one CLI.
"""

__version__ = "0.1.0"

from .classifiers import (
    AbundanceDataset,
    DistributionDataset,
    KMeansModel,
    KnnModel,
    Prediction,
    kmeans_predict,
    kmeans_train,
    knn_predict,
    knn_train,
)
from .distances import (
    DistanceRecord,
    GramMatrix,
    build_gram,
    euclidean,
    l2_cdf,
    l2_pdf,
    manhattan,
    total_distance,
)
from .errors import (
    DcmdError,
    DegenerateOtuError,
    DegeneratePosteriorError,
    EmptyResultError,
    FitFailureError,
    QuadratureError,
    TableFormatError,
    ValidationError,
)
from .evaluation import ConfusionCounts, MetricReport, accuracy, binary_metrics, kfold, split
from .mixture import (
    AggregateCounts,
    Component,
    ComponentSet,
    FittedMixture,
    MixtureConfig,
    NestedModelFamily,
    aggregate_counts,
    bootstrap_average,
    build_nested_family,
    expected_aggregate,
    fit_weights,
    gamma,
    high_count,
    make_component_set,
    structural_zero,
)
from .nbinom import nb_logpmf, nb_pmf, nb_survival
from .otu import (
    OtuTable,
    compute_resolutions,
    filter_table,
    load_table,
    relative_abundance,
    save_table,
)
from .pipeline import (
    BenchmarkConfig,
    BenchmarkResult,
    FitConfig,
    ModelSet,
    OtuModel,
    abundance_dataset,
    fit_table,
    represent,
    run_benchmark,
    run_replicate,
    train_and_predict,
)
from .sampledist import (
    OutcomeGrid,
    PMatrix,
    SampleDistribution,
    build_p_matrix,
    component_posterior,
    posterior_matrix,
    sample_pdf,
)
from .screening import ScreeningResult, benjamini_hochberg, mann_whitney_u, screen_otus
from .serialize import load_model_set, write_manifest, write_model_set
from .simulate import (
    OtuTruth,
    ScenarioConfig,
    SimulatedDataset,
    generate_otu,
    generate_scenario,
    preset,
    scenario_presets,
)
