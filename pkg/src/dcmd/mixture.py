"""Population rate mixtures for one OTU.

Each OTU's rate distribution is approximated by a mixture of a structural
zero point mass, Gamma(alpha, beta) components, and a high-count point mass
at the truncation point C. Weights are estimated by least squares between
observed and expected aggregate counts over the probability simplex, and the
low-rate specification uncertainty is averaged out over a family of nested
candidate models through a nonparametric bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateOtuError, FitFailureError, ValidationError
from .nbinom import pmf_grid
from .simplex import solve_simplex_lsq, solve_simplex_lsq_batch

STRUCTURAL_ZERO = "structural_zero"
GAMMA = "gamma"
HIGH_COUNT = "high_count"


@dataclass(frozen=True)
class Component:
    kind: str
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in (STRUCTURAL_ZERO, GAMMA, HIGH_COUNT):
            raise ValidationError(f"unknown component kind {self.kind!r}")
        if self.kind == GAMMA:
            if self.alpha is None or self.beta is None or self.alpha <= 0 or self.beta <= 0:
                raise ValidationError("gamma components need alpha > 0 and beta > 0")
        elif self.alpha is not None or self.beta is not None:
            raise ValidationError(f"{self.kind} takes no parameters")

    def label(self) -> str:
        if self.kind == GAMMA:
            return f"gamma({self.alpha:g},{self.beta:g})"
        return "zero" if self.kind == STRUCTURAL_ZERO else "high"


def structural_zero() -> Component:
    return Component(STRUCTURAL_ZERO)


def gamma(alpha: float, beta: float) -> Component:
    return Component(GAMMA, float(alpha), float(beta))


def high_count() -> Component:
    return Component(HIGH_COUNT)


@dataclass(frozen=True)
class ComponentSet:
    """Ordered mixture components: zero mass, gammas by ascending shape, high mass."""

    components: tuple[Component, ...]
    truncation_c: int

    def __post_init__(self):
        if self.truncation_c < 1:
            raise ValidationError("truncation point must be >= 1")
        kinds = [c.kind for c in self.components]
        if kinds.count(STRUCTURAL_ZERO) != 1 or kinds.count(HIGH_COUNT) != 1:
            raise ValidationError("need exactly one structural-zero and one high-count mass")
        if kinds[0] != STRUCTURAL_ZERO or kinds[-1] != HIGH_COUNT:
            raise ValidationError("components must start with the zero mass and end with the high mass")
        gammas = self.components[1:-1]
        if any(c.kind != GAMMA for c in gammas):
            raise ValidationError("interior components must be gammas")
        keys = [(c.alpha, -c.beta) for c in gammas]
        if keys != sorted(keys):
            raise ValidationError("gamma components must be sorted by ascending shape")

    def __len__(self) -> int:
        return len(self.components)

    @property
    def gamma_components(self) -> tuple[Component, ...]:
        return self.components[1:-1]

    def gamma_params(self) -> tuple[np.ndarray, np.ndarray]:
        gs = self.gamma_components
        return (
            np.array([c.alpha for c in gs], dtype=float),
            np.array([c.beta for c in gs], dtype=float),
        )


def make_component_set(gamma_params, truncation_c: int) -> ComponentSet:
    """Assemble zero mass + gammas + high mass, sorting the gammas."""
    gs = sorted((gamma(a, b) for a, b in gamma_params), key=lambda c: (c.alpha, -c.beta))
    return ComponentSet((structural_zero(), *gs, high_count()), int(truncation_c))


@dataclass(frozen=True)
class FittedMixture:
    """A component set with estimated simplex weights."""

    component_set: ComponentSet
    weights: np.ndarray
    objective_value: float
    model_weights: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.component_set),):
            raise ValidationError("weight vector does not align with the component set")
        if w.min() < -1e-12 or abs(w.sum() - 1.0) > 1e-8:
            raise ValidationError("weights must lie on the probability simplex")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))

    @property
    def truncation_c(self) -> int:
        return self.component_set.truncation_c


@dataclass(frozen=True)
class NestedModelFamily:
    """Candidate component sets differing only in the low-rate gammas.

    All models share the union set's zero mass, high mass and higher-shape
    gammas; model l keeps the droppable low-rate gammas l..L. Indices map
    each model's components into the union ordering.
    """

    union: ComponentSet
    model_indices: tuple[tuple[int, ...], ...]
    model_weights: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.union)
        for idx in self.model_indices:
            if idx[0] != 0 or idx[-1] != n - 1 or list(idx) != sorted(idx):
                raise ValidationError("model indices must be sorted and include both point masses")
        if self.model_weights is not None:
            v = np.asarray(self.model_weights, dtype=float)
            if v.shape != (len(self.model_indices),) or v.min() < 0 or abs(v.sum() - 1.0) > 1e-8:
                raise ValidationError("model weights must lie on the simplex")

    @property
    def n_models(self) -> int:
        return len(self.model_indices)

    def model(self, l: int) -> ComponentSet:
        comps = tuple(self.union.components[i] for i in self.model_indices[l])
        return ComponentSet(comps, self.union.truncation_c)

    @property
    def models(self) -> tuple[ComponentSet, ...]:
        return tuple(self.model(l) for l in range(self.n_models))

    def embed(self, l: int, weights: np.ndarray) -> np.ndarray:
        """Lift model-l weights into the union index, zeros elsewhere."""
        out = np.zeros(len(self.union))
        out[list(self.model_indices[l])] = weights
        return out

    def masks(self) -> np.ndarray:
        m = np.zeros((self.n_models, len(self.union)), dtype=bool)
        for l, idx in enumerate(self.model_indices):
            m[l, list(idx)] = True
        return m


DEFAULT_LOW_RATE_GAMMAS = ((1.0, 2.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0))
DEFAULT_SHARED_GAMMAS = ((5.0, 1.0), (6.0, 1.0), (7.0, 1.0), (8.0, 1.0))


@dataclass(frozen=True)
class MixtureConfig:
    """Component-set construction knobs.

    low_rate_gammas are droppable: candidate model l keeps entries l..L.
    shared_gammas appear in every model, as do the integer-shape gammas laid
    out on a log grid from alpha_cutoff up to the truncation point.
    """

    low_rate_gammas: tuple[tuple[float, float], ...] = DEFAULT_LOW_RATE_GAMMAS
    shared_gammas: tuple[tuple[float, float], ...] = DEFAULT_SHARED_GAMMAS
    alpha_cutoff: float = 8.0
    quantile: float = 0.85
    log_grid_step: float = 0.5 * math.log(2.0)


def log_grid_alphas(cutoff: float, c: int, step: float = 0.5 * math.log(2.0)) -> tuple[int, ...]:
    """Integer shapes spaced evenly in log between cutoff and C.

    Both endpoints anchor the grid; values at or below the cutoff are dropped
    (the shared set already covers the cutoff itself). Empty when C <= cutoff.
    """
    if c <= cutoff:
        return ()
    n_steps = max(1, round(math.log(c / cutoff) / step))
    grid = np.exp(np.linspace(math.log(cutoff), math.log(c), n_steps + 1))
    alphas = sorted({int(round(g)) for g in grid})
    return tuple(a for a in alphas if cutoff < a <= c)


def truncation_point(counts, quantile: float) -> int:
    """Ceiling of the empirical quantile of the positive counts, >= 1."""
    counts = np.asarray(counts)
    positive = counts[counts > 0]
    if positive.size == 0:
        raise DegenerateOtuError("all counts are zero")
    return max(1, int(math.ceil(np.quantile(positive, quantile))))


def build_nested_family(counts, resolutions, config: MixtureConfig = MixtureConfig()) -> NestedModelFamily:
    """Construct the nested candidate models for one OTU's count column."""
    counts = np.asarray(counts)
    resolutions = np.asarray(resolutions, dtype=float)
    if counts.size == 0:
        raise ValidationError("empty count column")
    if counts.shape != resolutions.shape:
        raise ValidationError("counts and resolutions must align")
    c = truncation_point(counts, config.quantile)

    droppable = [gamma(a, b) for a, b in config.low_rate_gammas]
    always = [gamma(a, b) for a, b in config.shared_gammas]
    always += [gamma(a, 1.0) for a in log_grid_alphas(config.alpha_cutoff, c, config.log_grid_step)]

    union = make_component_set(
        [(g.alpha, g.beta) for g in droppable + always], truncation_c=c
    )
    position = {comp: i for i, comp in enumerate(union.components)}
    n_models = max(1, len(droppable))
    indices = []
    for l in range(n_models):
        comps = {structural_zero(), high_count(), *droppable[l:], *always}
        indices.append(tuple(sorted(position[comp] for comp in comps)))
    return NestedModelFamily(union=union, model_indices=tuple(indices))


@dataclass(frozen=True)
class AggregateCounts:
    """y_x = number of samples observing count x, for x = 0..C then C+."""

    y: np.ndarray
    truncation_c: int

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.shape != (self.truncation_c + 2,):
            raise ValidationError("aggregate vector must have length C + 2")
        if y.sum() <= 0:
            raise ValidationError("aggregate counts must cover at least one sample")
        object.__setattr__(self, "y", y.astype(float))

    @property
    def n_samples(self) -> int:
        return int(round(self.y.sum()))


def aggregate_counts(counts, c: int) -> AggregateCounts:
    """Tally counts into {0..C, C+}."""
    if c < 1:
        raise ValidationError("truncation point must be >= 1")
    counts = np.asarray(counts)
    y = np.bincount(np.minimum(counts, c + 1), minlength=c + 2)[: c + 2].astype(float)
    return AggregateCounts(y=y, truncation_c=c)


def pmf_tensor(component_set: ComponentSet, resolutions) -> np.ndarray:
    """Per-sample outcome probabilities, shape (n_components, n_samples, C + 2).

    Point-mass slices are constant: the structural zero is always observed as
    count 0, the high mass always lands in the C+ bucket.
    """
    ts = np.asarray(resolutions, dtype=float)
    if np.any(ts <= 0):
        raise ValidationError("resolutions must be positive")
    c = component_set.truncation_c
    n = ts.size
    m = len(component_set)
    tensor = np.zeros((m, n, c + 2))
    tensor[0, :, 0] = 1.0
    tensor[-1, :, -1] = 1.0
    alphas, betas = component_set.gamma_params()
    if alphas.size:
        tensor[1:-1] = pmf_grid(alphas, betas, ts, c)
    return tensor


def design_matrix(component_set: ComponentSet, resolutions) -> np.ndarray:
    """p_xm averaged over samples: column m is component m's outcome pmf."""
    return pmf_tensor(component_set, resolutions).mean(axis=1).T


def expected_aggregate(component_set: ComponentSet, weights, resolutions) -> np.ndarray:
    """Expected y_x under the mixture: I * sum_m w_m p_xm for x = 0..C, C+."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(component_set),):
        raise ValidationError("weight vector does not align with the component set")
    n = np.asarray(resolutions).size
    return n * design_matrix(component_set, resolutions) @ w


def _heuristic_start(component_set: ComponentSet, aggregate: AggregateCounts) -> np.ndarray:
    """Spread the empirical outcome frequencies over nearest-mode components."""
    c = aggregate.truncation_c
    modes = []
    for comp in component_set.components:
        if comp.kind == STRUCTURAL_ZERO:
            modes.append(0.0)
        elif comp.kind == HIGH_COUNT:
            modes.append(float(c + 1))
        else:
            modes.append(float(max(0, math.floor((comp.alpha - 1) / comp.beta))))
    modes = np.array(modes)
    freq = aggregate.y / aggregate.y.sum()
    start = np.zeros(len(component_set))
    for x in range(c + 2):
        gap = np.abs(modes - min(x, c + 1))
        nearest = np.flatnonzero(gap == gap.min())
        start[nearest] += freq[x] / nearest.size
    return start


def fit_weights(
    component_set: ComponentSet,
    aggregate: AggregateCounts,
    resolutions,
    extra_starts=None,
    max_iter: int = 4000,
) -> FittedMixture:
    """Least-squares simplex weights for one component set.

    Multi-start projected gradient: uniform weights plus the empirical
    frequency heuristic (plus any caller-provided warm starts). Raises
    FitFailureError carrying the best iterate if no start converges.
    """
    if aggregate.truncation_c != component_set.truncation_c:
        raise ValidationError("aggregate and component set disagree on the truncation point")
    n = np.asarray(resolutions).size
    design = n * design_matrix(component_set, resolutions)
    m = len(component_set)
    starts = [np.full(m, 1.0 / m), _heuristic_start(component_set, aggregate)]
    if extra_starts is not None:
        starts.extend(np.asarray(s, dtype=float) for s in extra_starts)
    w, obj, converged = solve_simplex_lsq(design, aggregate.y, np.array(starts), max_iter=max_iter)
    mixture = FittedMixture(component_set, w, float(obj))
    if not converged:
        raise FitFailureError("weight fit did not converge", best=mixture)
    return mixture


def _model_starts(family: NestedModelFamily, aggregate: AggregateCounts) -> np.ndarray:
    """(n_models, 2, n_union) start block: uniform and heuristic per model."""
    masks = family.masks()
    n_union = len(family.union)
    starts = np.zeros((family.n_models, 2, n_union))
    for l in range(family.n_models):
        active = masks[l]
        starts[l, 0, active] = 1.0 / active.sum()
        h = _heuristic_start(family.model(l), aggregate)
        starts[l, 1, list(family.model_indices[l])] = h
    return starts


def bootstrap_average(
    family: NestedModelFamily,
    counts,
    resolutions,
    b: int = 300,
    seed: int = 0,
    max_iter: int = 4000,
) -> FittedMixture:
    """Bootstrap-averaged mixture over the nested family.

    Each replicate resamples (count, resolution) pairs with replacement,
    refits every candidate model, and votes for the model whose refitted
    weights best explain the ORIGINAL aggregate counts (ties go to the model
    with fewer components). Final weights are the vote-weighted average of
    the candidates' fits on the original data, embedded in the union index.
    Deterministic given the seed.
    """
    if b < 1:
        raise ValidationError("bootstrap replicate count must be >= 1")
    counts = np.asarray(counts)
    ts = np.asarray(resolutions, dtype=float)
    n = counts.size
    c = family.union.truncation_c
    n_models = family.n_models
    masks = family.masks()
    n_union = len(family.union)

    tensor = pmf_tensor(family.union, ts)             # (M, I, X)
    design_orig = n * tensor.mean(axis=1).T           # (X, M)
    y_orig = aggregate_counts(counts, c).y
    outcome = np.minimum(counts, c + 1)               # sample -> aggregate bucket

    # fits of every model on the original data (these get averaged)
    agg = aggregate_counts(counts, c)
    starts = _model_starts(family, agg)
    q_orig = design_orig.T @ design_orig
    c_orig = design_orig.T @ y_orig
    y2_orig = float(y_orig @ y_orig)
    rows = n_models * 2
    sol = solve_simplex_lsq_batch(
        np.broadcast_to(q_orig, (rows, n_union, n_union)),
        np.broadcast_to(c_orig, (rows, n_union)),
        np.full(rows, y2_orig),
        starts.reshape(rows, n_union),
        mask=np.repeat(masks, 2, axis=0),
        max_iter=max_iter,
    )
    obj_by_model = sol.objective.reshape(n_models, 2)
    pick = obj_by_model.argmin(axis=1)
    w_models = sol.weights.reshape(n_models, 2, n_union)[np.arange(n_models), pick]
    conv_models = sol.converged.reshape(n_models, 2)[np.arange(n_models), pick]
    if not conv_models.all():
        bad = int(np.flatnonzero(~conv_models)[0])
        raise FitFailureError(
            f"model {bad + 1} did not converge on the observed data",
            best=FittedMixture(family.union, w_models[bad], float(obj_by_model[bad].min())),
        )

    if n_models == 1:
        v = np.array([1.0])
        weights = w_models[0]
        obj = float(np.sum((y_orig - design_orig @ weights) ** 2))
        return FittedMixture(family.union, weights, obj, model_weights=v)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(b, n))
    draws = np.stack([np.bincount(row, minlength=n) for row in idx]).astype(float)  # (B, I)

    # resampled designs and targets from the shared per-sample tensor
    design_b = np.einsum("bi,mix->bxm", draws, tensor)          # (B, X, M)
    onehot = np.zeros((n, c + 2))
    onehot[np.arange(n), outcome] = 1.0
    y_b = draws @ onehot                                        # (B, X)
    q_b = np.einsum("bxm,bxn->bmn", design_b, design_b)
    c_b = np.einsum("bxm,bx->bm", design_b, y_b)
    y2_b = np.einsum("bx,bx->b", y_b, y_b)

    # batch rows: (replicate, model, start)
    rep_q = np.repeat(q_b, n_models * 2, axis=0)
    rep_c = np.repeat(c_b, n_models * 2, axis=0)
    rep_y2 = np.repeat(y2_b, n_models * 2)
    rep_starts = np.tile(starts.reshape(n_models * 2, n_union), (b, 1))
    rep_mask = np.tile(np.repeat(masks, 2, axis=0), (b, 1))
    boot = solve_simplex_lsq_batch(rep_q, rep_c, rep_y2, rep_starts, mask=rep_mask, max_iter=max_iter)

    w_boot = boot.weights.reshape(b, n_models, 2, n_union)
    obj_boot = boot.objective.reshape(b, n_models, 2)
    best_start = obj_boot.argmin(axis=2)
    bb, ll = np.meshgrid(np.arange(b), np.arange(n_models), indexing="ij")
    w_sel = w_boot[bb, ll, best_start]                          # (B, L, M)
    conv_sel = boot.converged.reshape(b, n_models, 2)[bb, ll, best_start]
    if np.any(~conv_sel.any(axis=0)):
        bad = int(np.flatnonzero(~conv_sel.any(axis=0))[0])
        raise FitFailureError(f"model {bad + 1} failed on every bootstrap replicate")

    # score each replicate's model fits against the original aggregate
    resid = y_orig[None, None, :] - np.einsum("xm,blm->blx", design_orig, w_sel)
    score = np.sum(resid**2, axis=2)                            # (B, L)
    # ties go to the model with fewer components, i.e. the larger index;
    # nested fits often coincide to solver precision, so scores within a
    # hair of the minimum count as tied
    score_min = score.min(axis=1, keepdims=True)
    tied = score <= score_min + 1e-9 * np.maximum(score_min, 1.0)
    selected = (n_models - 1) - np.argmax(tied[:, ::-1], axis=1)
    v = np.bincount(selected, minlength=n_models) / b

    weights = np.einsum("l,lm->m", v, w_models)
    obj = float(np.sum((y_orig - design_orig @ weights) ** 2))
    return FittedMixture(family.union, np.clip(weights, 0.0, None), obj, model_weights=v)
