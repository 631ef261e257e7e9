import numpy as np
import pytest

from dcmd.errors import DegenerateOtuError, ValidationError
from dcmd.mixture import (
    AggregateCounts,
    Component,
    ComponentSet,
    FittedMixture,
    MixtureConfig,
    NestedModelFamily,
    aggregate_counts,
    bootstrap_average,
    build_nested_family,
    design_matrix,
    expected_aggregate,
    fit_weights,
    gamma,
    high_count,
    log_grid_alphas,
    make_component_set,
    pmf_tensor,
    structural_zero,
    truncation_point,
)
from dcmd.nbinom import nb_pmf


class TestComponents:
    def test_gamma_needs_positive_parameters(self):
        with pytest.raises(ValidationError):
            gamma(0.0, 1.0)
        with pytest.raises(ValidationError):
            gamma(1.0, -2.0)

    def test_point_masses_take_no_parameters(self):
        with pytest.raises(ValidationError):
            Component("structural_zero", alpha=1.0)

    def test_labels(self):
        assert structural_zero().label() == "zero"
        assert high_count().label() == "high"
        assert gamma(2.0, 1.0).label() == "gamma(2,1)"

    def test_component_set_ordering_enforced(self):
        with pytest.raises(ValidationError):
            ComponentSet((gamma(1, 1), structural_zero(), high_count()), 2)
        with pytest.raises(ValidationError):
            ComponentSet(
                (structural_zero(), gamma(3, 1), gamma(1, 1), high_count()), 2
            )

    def test_make_component_set_sorts_gammas(self):
        cs = make_component_set([(3.0, 1.0), (1.0, 2.0), (1.0, 1.0)], 4)
        assert [c.label() for c in cs.components] == [
            "zero",
            "gamma(1,2)",
            "gamma(1,1)",
            "gamma(3,1)",
            "high",
        ]

    def test_exactly_one_of_each_point_mass(self):
        with pytest.raises(ValidationError):
            ComponentSet((structural_zero(), structural_zero(), high_count()), 1)


class TestLogGridAlphas:
    def test_quantile_16_grid(self):
        assert log_grid_alphas(8.0, 16) == (11, 16)

    def test_empty_at_or_below_cutoff(self):
        assert log_grid_alphas(8.0, 8) == ()
        assert log_grid_alphas(8.0, 3) == ()

    def test_grid_properties(self):
        for c in (9, 12, 16, 23, 32, 64, 200):
            grid = log_grid_alphas(8.0, c)
            assert grid == tuple(sorted(set(grid)))
            assert all(8.0 < a <= c for a in grid)
            assert grid[-1] == c


class TestTruncationPoint:
    def test_ignores_zeros(self):
        counts = [0] * 50 + list(range(1, 21))
        expected = int(np.ceil(np.quantile(np.arange(1, 21), 0.85)))
        assert truncation_point(counts, 0.85) == expected

    def test_all_zero_is_degenerate(self):
        with pytest.raises(DegenerateOtuError):
            truncation_point([0, 0, 0], 0.85)

    def test_floor_of_one(self):
        assert truncation_point([1, 1, 1], 0.85) == 1


class TestNestedFamily:
    def family_with_c(self, c_target):
        counts = np.array([0, 0, 1, 2] + [c_target] * 30)
        ts = np.ones(counts.size)
        return build_nested_family(counts, ts)

    def test_union_components_at_c16(self):
        family = self.family_with_c(16)
        assert family.union.truncation_c == 16
        labels = [c.label() for c in family.union.components]
        assert labels == [
            "zero",
            "gamma(1,2)",
            "gamma(1,1)",
            "gamma(2,1)",
            "gamma(3,1)",
            "gamma(4,1)",
            "gamma(5,1)",
            "gamma(6,1)",
            "gamma(7,1)",
            "gamma(8,1)",
            "gamma(11,1)",
            "gamma(16,1)",
            "high",
        ]

    def test_five_models_drop_low_rate_gammas_in_turn(self):
        family = self.family_with_c(16)
        assert family.n_models == 5
        droppable = droppable_labels()
        for l in range(5):
            labels = {c.label() for c in family.model(l).components}
            assert labels & set(droppable) == set(droppable[l:]), l
        # the most reduced model still carries the last droppable gamma
        assert "gamma(4,1)" in {c.label() for c in family.model(4).components}

    def test_shared_components_in_every_model(self):
        family = self.family_with_c(16)
        shared = {"zero", "high", "gamma(5,1)", "gamma(6,1)", "gamma(7,1)", "gamma(8,1)",
                  "gamma(11,1)", "gamma(16,1)"}
        for model in family.models:
            assert shared <= {c.label() for c in model.components}

    def test_small_c_has_no_log_grid(self):
        family = self.family_with_c(3)
        labels = {c.label() for c in family.union.components}
        assert "gamma(8,1)" in labels
        assert not any(lbl.startswith("gamma(11") for lbl in labels)

    def test_all_zero_column_degenerate(self):
        with pytest.raises(DegenerateOtuError):
            build_nested_family(np.zeros(10, dtype=int), np.ones(10))

    def test_embed_round_trip(self):
        family = self.family_with_c(16)
        rng = np.random.default_rng(0)
        for l in range(family.n_models):
            idx = family.model_indices[l]
            w = rng.dirichlet(np.ones(len(idx)))
            lifted = family.embed(l, w)
            np.testing.assert_allclose(lifted[list(idx)], w)
            assert lifted.sum() == pytest.approx(1.0)
            off = np.setdiff1d(np.arange(len(family.union)), idx)
            assert np.all(lifted[off] == 0.0)

    def test_model_weights_must_be_simplex(self):
        family = self.family_with_c(4)
        with pytest.raises(ValidationError):
            NestedModelFamily(
                union=family.union,
                model_indices=family.model_indices,
                model_weights=np.full(family.n_models, 0.5),
            )


def droppable_labels():
    # configuration order of the droppable low-rate gammas
    return ["gamma(1,2)", "gamma(1,1)", "gamma(2,1)", "gamma(3,1)", "gamma(4,1)"]


class TestAggregateCounts:
    def test_tally_with_overflow(self):
        agg = aggregate_counts([0, 0, 1, 3, 9], c=3)
        assert agg.y.tolist() == [2, 1, 0, 1, 1]
        assert agg.n_samples == 5

    def test_no_overflow_when_capped(self):
        agg = aggregate_counts([0, 1, 2], c=4)
        assert agg.y.tolist() == [1, 1, 1, 0, 0, 0]
        assert agg.y[-1] == 0

    def test_empty_aggregate_rejected(self):
        with pytest.raises(ValidationError):
            AggregateCounts(y=np.zeros(4), truncation_c=2)


class TestExpectedAggregate:
    def single_gamma_set(self):
        return make_component_set([(1.0, 1.0)], truncation_c=1)

    def test_pure_structural_zero(self):
        cs = self.single_gamma_set()
        out = expected_aggregate(cs, [1.0, 0.0, 0.0], np.ones(7))
        np.testing.assert_allclose(out, [7.0, 0.0, 0.0])

    def test_pure_high_mass(self):
        cs = self.single_gamma_set()
        out = expected_aggregate(cs, [0.0, 0.0, 1.0], np.ones(7))
        np.testing.assert_allclose(out, [0.0, 0.0, 7.0])

    def test_unit_gamma_single_sample(self):
        cs = self.single_gamma_set()
        out = expected_aggregate(cs, [0.0, 1.0, 0.0], np.ones(1))
        np.testing.assert_allclose(out, [0.5, 0.25, 0.25])

    def test_probability_conservation(self):
        cs = make_component_set([(1.0, 2.0), (2.0, 1.0), (9.0, 1.0)], truncation_c=6)
        rng = np.random.default_rng(4)
        ts = rng.uniform(0.5, 2.0, size=40)
        for _ in range(20):
            w = rng.dirichlet(np.ones(len(cs)))
            out = expected_aggregate(cs, w, ts)
            assert abs(out.sum() - 40.0) < 1e-8

    def test_misaligned_weights_rejected(self):
        cs = self.single_gamma_set()
        with pytest.raises(ValidationError):
            expected_aggregate(cs, [0.5, 0.5], np.ones(3))


class TestDesignMatrix:
    def test_columns_are_average_outcome_pmfs(self):
        cs = make_component_set([(2.0, 1.0)], truncation_c=5)
        ts = np.array([0.5, 1.5])
        design = design_matrix(cs, ts)
        assert design.shape == (7, 3)
        np.testing.assert_allclose(design.sum(axis=0), 1.0, atol=1e-12)
        expected_gamma = 0.5 * (
            nb_pmf(np.arange(6), 2.0, 1.0, 0.5) + nb_pmf(np.arange(6), 2.0, 1.0, 1.5)
        )
        np.testing.assert_allclose(design[:6, 1], expected_gamma, rtol=1e-12)

    def test_point_mass_slices(self):
        cs = make_component_set([(1.0, 1.0)], truncation_c=2)
        tensor = pmf_tensor(cs, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(tensor[0, :, 0], [1.0, 1.0])
        np.testing.assert_array_equal(tensor[0, :, 1:], 0.0)
        np.testing.assert_array_equal(tensor[-1, :, -1], [1.0, 1.0])


class TestFitWeights:
    def test_pure_zero_data_puts_weight_on_zero_mass(self):
        cs = make_component_set([(1.0, 1.0), (4.0, 1.0)], truncation_c=2)
        agg = aggregate_counts(np.zeros(200, dtype=int), c=2)
        fit = fit_weights(cs, agg, np.ones(200))
        assert fit.weights[0] >= 0.99

    def test_truncation_mismatch_rejected(self):
        cs = make_component_set([(1.0, 1.0)], truncation_c=2)
        agg = aggregate_counts([0, 1, 2], c=3)
        with pytest.raises(ValidationError):
            fit_weights(cs, agg, np.ones(3))

    def test_objective_matches_weights(self):
        rng = np.random.default_rng(8)
        counts = rng.poisson(2.0, size=300)
        c = truncation_point(counts, 0.85)
        cs = make_component_set([(1.0, 1.0), (2.0, 1.0), (5.0, 1.0)], c)
        agg = aggregate_counts(counts, c)
        ts = np.ones(300)
        fit = fit_weights(cs, agg, ts)
        resid = agg.y - expected_aggregate(cs, fit.weights, ts)
        assert fit.objective_value == pytest.approx(float(resid @ resid), rel=1e-8)

    def test_simplex_constraints_hold(self):
        rng = np.random.default_rng(12)
        counts = rng.poisson(3.0, size=150)
        c = truncation_point(counts, 0.85)
        cs = make_component_set([(1.0, 2.0), (3.0, 1.0)], c)
        fit = fit_weights(cs, aggregate_counts(counts, c), np.ones(150))
        assert fit.weights.min() >= 0.0
        assert fit.weights.sum() == pytest.approx(1.0, abs=1e-8)

    def test_well_separated_recovery(self):
        rng = np.random.default_rng(3)
        n = 2000
        is_zero = rng.random(n) < 0.5
        rates = rng.gamma(8.0, 1.0, size=n)
        counts = np.where(is_zero, 0, rng.poisson(rates))
        c = truncation_point(counts, 0.85)
        cs = make_component_set([(1.0, 1.0), (8.0, 1.0)], c)
        fit = fit_weights(cs, aggregate_counts(counts, c), np.ones(n))
        assert abs(fit.weights[0] - 0.5) < 0.05
        assert abs(fit.weights[2] - 0.5) < 0.05

    def test_matches_brute_force_grid(self):
        rng = np.random.default_rng(17)
        n = 400
        pick = rng.choice(3, p=[0.3, 0.5, 0.2], size=n)
        rates = rng.gamma(1.0, 1.0, size=n)
        counts = np.where(pick == 0, 0, rng.poisson(rates))
        counts[pick == 2] = 50
        c = 3
        cs = make_component_set([(1.0, 1.0)], truncation_c=c)
        agg = aggregate_counts(counts, c)
        ts = np.ones(n)
        fit = fit_weights(cs, agg, ts)

        design = n * design_matrix(cs, ts)
        step = 1e-3
        w0 = np.arange(0, 1.0 + step / 2, step)
        grid = []
        for a in w0:
            b = np.arange(0, 1.0 - a + step / 2, step)
            grid.append(np.column_stack([np.full(b.size, a), b, 1.0 - a - b]))
        grid = np.vstack(grid)
        obj = np.sum((agg.y[None, :] - grid @ design.T) ** 2, axis=1)
        best = grid[np.argmin(obj)]
        np.testing.assert_allclose(fit.weights, best, atol=2e-3)


class TestBootstrapAverage:
    def counts_and_family(self, seed=0, n=300):
        rng = np.random.default_rng(seed)
        rates = rng.gamma(2.0, 1.0, size=n)
        counts = np.where(rng.random(n) < 0.3, 0, rng.poisson(rates))
        ts = np.ones(n)
        family = build_nested_family(counts, ts)
        return counts, ts, family

    def test_single_model_equals_direct_fit(self):
        counts, ts, family = self.counts_and_family()
        single = NestedModelFamily(
            union=family.union, model_indices=family.model_indices[:1]
        )
        averaged = bootstrap_average(single, counts, ts, b=10, seed=1)
        c = family.union.truncation_c
        direct = fit_weights(family.union, aggregate_counts(counts, c), ts)
        np.testing.assert_allclose(averaged.model_weights, [1.0])
        np.testing.assert_allclose(averaged.weights, direct.weights, atol=1e-6)

    def test_one_replicate_gives_one_hot_votes(self):
        counts, ts, family = self.counts_and_family(seed=5)
        fit = bootstrap_average(family, counts, ts, b=1, seed=2)
        v = fit.model_weights
        assert sorted(v.tolist(), reverse=True)[0] == 1.0
        assert v.sum() == pytest.approx(1.0)

    def test_reproducible_given_seed(self):
        counts, ts, family = self.counts_and_family(seed=9, n=150)
        a = bootstrap_average(family, counts, ts, b=25, seed=7)
        b = bootstrap_average(family, counts, ts, b=25, seed=7)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.model_weights, b.model_weights)

    def test_votes_favor_model_containing_needed_component(self):
        # half the mass sits on gamma(1,1); the second candidate drops it
        rng = np.random.default_rng(11)
        n = 2000
        pick = rng.random(n) < 0.5
        rates = np.where(pick, rng.gamma(1.0, 1.0, size=n), rng.gamma(8.0, 1.0, size=n))
        counts = rng.poisson(rates)
        ts = np.ones(n)
        c = truncation_point(counts, 0.85)
        union = make_component_set([(1.0, 1.0), (8.0, 1.0)], c)
        family = NestedModelFamily(
            union=union, model_indices=((0, 1, 2, 3), (0, 2, 3))
        )
        fit = bootstrap_average(family, counts, ts, b=50, seed=3)
        assert fit.model_weights[0] > 0.8

    def test_final_weights_on_simplex(self):
        counts, ts, family = self.counts_and_family(seed=21, n=200)
        fit = bootstrap_average(family, counts, ts, b=30, seed=4)
        assert fit.weights.min() >= 0.0
        assert fit.weights.sum() == pytest.approx(1.0, abs=1e-8)
        assert fit.model_weights.sum() == pytest.approx(1.0, abs=1e-12)


class TestFittedMixture:
    def test_rejects_off_simplex_weights(self):
        cs = make_component_set([(1.0, 1.0)], truncation_c=1)
        with pytest.raises(ValidationError):
            FittedMixture(cs, np.array([0.5, 0.5, 0.5]), 0.0)
        with pytest.raises(ValidationError):
            FittedMixture(cs, np.array([1.5, -0.5, 0.0]), 0.0)

    def test_clips_solver_noise(self):
        cs = make_component_set([(1.0, 1.0)], truncation_c=1)
        fit = FittedMixture(cs, np.array([0.5, 0.5 + 1e-13, -1e-13]), 0.0)
        assert fit.weights.min() == 0.0


def test_mixture_config_defaults():
    config = MixtureConfig()
    assert config.alpha_cutoff == 8.0
    assert config.quantile == 0.85
    assert len(config.low_rate_gammas) == 5
    assert len(config.shared_gammas) == 4
