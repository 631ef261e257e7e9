"""End-to-end acceptance gate.

Each test prints one CRITERION line with its measured numbers; the slow
benchmark fixture (scenarios 1-6 at reduced scale through the CLI) is
shared across the first four criteria.
"""

import itertools
import json
import time

import numpy as np
import pytest
from scipy import integrate, stats

from dcmd.cli import main
from dcmd.distances import build_gram, l2_cdf
from dcmd.evaluation import binary_metrics
from dcmd.mixture import (
    GAMMA,
    HIGH_COUNT,
    STRUCTURAL_ZERO,
    aggregate_counts,
    design_matrix,
    fit_weights,
    make_component_set,
    truncation_point,
)
from dcmd.nbinom import nb_pmf
from dcmd.screening import benjamini_hochberg, mann_whitney_u
from dcmd.simulate import generate_scenario, preset

DESK = ["--replicates", "10", "--class-size", "100", "--otus", "25",
        "--bootstrap", "50", "--seed", "0"]

# per scenario: (mean, sd) of the zero proportion for classes 1..3
ZP_REFERENCE = {
    1: ((0.30, 0.13), (0.23, 0.11), (0.17, 0.10)),
    2: ((0.37, 0.14), (0.23, 0.11), (0.15, 0.09)),
    3: ((0.70, 0.12), (0.61, 0.13), (0.53, 0.14)),
    4: ((0.87, 0.06), (0.67, 0.11), (0.50, 0.14)),
    5: ((0.92, 0.04), (0.84, 0.07), (0.72, 0.10)),
    6: ((0.37, 0.14), (0.23, 0.11), (0.15, 0.09)),
}


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")


def read_summary(path) -> dict:
    rows = {}
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    for line in lines[1:]:
        rec = dict(zip(header, line.split("\t")))
        rows[(int(rec["scenario"]), rec["method"])] = float(rec["mean"])
    return rows


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    """Scenario 4 timed on its own; the other five scenarios in one run."""
    root = tmp_path_factory.mktemp("acceptance-benchmark")
    t0 = time.monotonic()
    assert main(["benchmark", "--scenarios", "4", "--out", str(root / "s4"), *DESK]) == 0
    scenario4_seconds = time.monotonic() - t0
    assert main(
        ["benchmark", "--scenarios", "1,2,3,5,6", "--out", str(root / "rest"), *DESK]
    ) == 0
    rows = read_summary(root / "s4" / "summary.tsv")
    rows.update(read_summary(root / "rest" / "summary.tsv"))
    return {"rows": rows, "scenario4_seconds": scenario4_seconds}


class TestBenchmarkCriteria:
    def test_1_scenario4_separation(self, benchmark):
        rows = benchmark["rows"]
        l2pdf = rows[(4, "kmeans-l2pdf")]
        euclid = rows[(4, "kmeans-euclidean")]
        seconds = benchmark["scenario4_seconds"]
        ok = l2pdf >= 0.75 and l2pdf - euclid >= 0.10 and seconds < 900
        report(
            1, ok,
            f"kmeans-l2pdf {l2pdf:.3f} vs kmeans-euclidean {euclid:.3f}, "
            f"scenario-4 run {seconds:.0f}s",
        )
        assert ok

    def test_2_scenario5_sparsity_advantage(self, benchmark):
        rows = benchmark["rows"]
        l2pdf = rows[(5, "kmeans-l2pdf")]
        euclid = rows[(5, "kmeans-euclidean")]
        manhattan = rows[(5, "kmeans-manhattan")]
        ok = l2pdf - euclid >= 0.10 and l2pdf - manhattan >= 0.10
        report(
            2, ok,
            f"kmeans-l2pdf {l2pdf:.3f} vs euclidean {euclid:.3f} / manhattan {manhattan:.3f}",
        )
        assert ok

    def test_3_null_scenario_calibration(self, benchmark):
        rows = benchmark["rows"]
        methods = sorted(m for s, m in rows if s == 6)
        values = {m: rows[(6, m)] for m in methods}
        ok = all(abs(v - 1 / 3) <= 0.06 for v in values.values())
        lo, hi = min(values.values()), max(values.values())
        report(3, ok, f"scenario-6 accuracies span [{lo:.3f}, {hi:.3f}], all in 0.33 +/- 0.06")
        assert ok

    def test_4_centroid_beats_knn(self, benchmark):
        rows = benchmark["rows"]
        wins = sum(
            rows[(s, "kmeans-l2pdf")] >= rows[(s, "knn-l2pdf")] for s in (1, 2, 3, 4, 5)
        )
        ok = wins >= 4
        report(4, ok, f"kmeans-l2pdf >= knn-l2pdf in {wins} of 5 scenarios")
        assert ok


def component_cdfs(component_set):
    """Per-component rate CDF callables over [0, C)."""
    funcs = []
    for comp in component_set.components:
        if comp.kind == STRUCTURAL_ZERO:
            funcs.append(lambda x: np.ones_like(np.asarray(x, dtype=float)))
        elif comp.kind == HIGH_COUNT:
            funcs.append(lambda x: np.zeros_like(np.asarray(x, dtype=float)))
        else:
            funcs.append(
                lambda x, a=comp.alpha, b=comp.beta: stats.gamma.cdf(x, a=a, scale=1.0 / b)
            )
    return funcs


def test_5_gram_quadratic_form_matches_integration():
    rng = np.random.default_rng(50)
    worst = 0.0
    for _ in range(5):
        n_gammas = int(rng.integers(1, 5))
        params = sorted(
            (float(rng.uniform(0.5, 8.0)), float(rng.uniform(0.5, 3.0)))
            for _ in range(n_gammas)
        )
        c = int(rng.integers(2, 11))
        cs = make_component_set(params, truncation_c=c)
        gram = build_gram(cs)
        cdfs = component_cdfs(cs)
        for _ in range(100):
            wa = rng.dirichlet(np.ones(len(cs)))
            wb = rng.dirichlet(np.ones(len(cs)))
            via_gram = l2_cdf(wa, wb, gram)

            def gap(x):
                fa = sum(w * f(x) for w, f in zip(wa, cdfs))
                fb = sum(w * f(x) for w, f in zip(wb, cdfs))
                return (fa - fb) ** 2

            direct, _ = integrate.quad(gap, 0.0, c, epsabs=1e-12, epsrel=1e-10, limit=200)
            worst = max(worst, abs(via_gram - direct))
    ok = worst < 1e-6
    report(5, ok, f"max |quadratic form - direct integral| = {worst:.2e} over 500 pairs")
    assert ok


def test_6_nb_pmf_matches_monte_carlo():
    rng = np.random.default_rng(60)
    n_draws = 10**6
    worst = 0.0
    for _ in range(10):
        alpha = float(rng.uniform(0.5, 8.0))
        beta = float(rng.uniform(0.5, 4.0))
        t = float(rng.uniform(0.3, 3.0))
        lam = rng.gamma(alpha, 1.0 / beta, size=n_draws)
        draws = rng.poisson(lam * t)
        top = int(draws.max())
        empirical = np.bincount(draws, minlength=top + 1) / n_draws
        model = nb_pmf(np.arange(top + 1), alpha, beta, t)
        tv = 0.5 * (np.abs(empirical - model).sum() + max(0.0, 1.0 - model.sum()))
        worst = max(worst, tv)
    ok = worst < 0.01
    report(6, ok, f"max total-variation distance {worst:.4f} over 10 parameter triples")
    assert ok


def simplex_grid(step: float) -> np.ndarray:
    w0 = np.arange(0.0, 1.0 + step / 2, step)
    blocks = []
    for a in w0:
        b = np.arange(0.0, 1.0 - a + step / 2, step)
        blocks.append(np.column_stack([np.full(b.size, a), b, 1.0 - a - b]))
    return np.vstack(blocks)


def test_7_fit_matches_grid_search_and_recovers_truth():
    grid = simplex_grid(1e-3)
    worst_grid_gap = 0.0
    for seed, mix_p in ((70, (0.3, 0.5, 0.2)), (71, (0.6, 0.2, 0.2)), (72, (0.1, 0.7, 0.2))):
        rng = np.random.default_rng(seed)
        n = 400
        pick = rng.choice(3, p=mix_p, size=n)
        rates = rng.gamma(1.0, 1.0, size=n)
        counts = np.where(pick == 0, 0, rng.poisson(rates))
        counts[pick == 2] = 50
        c = 3
        cs = make_component_set([(1.0, 1.0)], truncation_c=c)
        agg = aggregate_counts(counts, c)
        ts = np.ones(n)
        fit = fit_weights(cs, agg, ts)
        design = n * design_matrix(cs, ts)
        objective = np.sum((agg.y[None, :] - grid @ design.T) ** 2, axis=1)
        best = grid[np.argmin(objective)]
        worst_grid_gap = max(worst_grid_gap, np.abs(fit.weights - best).max())

    worst_refit_gap = 0.0
    for seed in (73, 74, 75):
        rng = np.random.default_rng(seed)
        n = 2000
        is_zero = rng.random(n) < 0.5
        rates = rng.gamma(8.0, 1.0, size=n)
        counts = np.where(is_zero, 0, rng.poisson(rates))
        c = truncation_point(counts, 0.85)
        cs = make_component_set([(1.0, 1.0), (8.0, 1.0)], c)
        fit = fit_weights(cs, aggregate_counts(counts, c), np.ones(n))
        worst_refit_gap = max(
            worst_refit_gap, abs(fit.weights[0] - 0.5), abs(fit.weights[2] - 0.5)
        )

    ok = worst_grid_gap < 2e-3 and worst_refit_gap < 0.05
    report(
        7, ok,
        f"max gap to 1e-3 grid optimum {worst_grid_gap:.2e}, "
        f"max refit error on 2000-sample data {worst_refit_gap:.3f}",
    )
    assert ok


def reference_step_up(p_values):
    p = np.asarray(p_values, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    q = np.empty(m)
    running = 1.0
    for rank in range(m, 0, -1):
        running = min(running, m * p[order[rank - 1]] / rank)
        q[order[rank - 1]] = running
    return q


def enumeration_p(a, b):
    """Exact two-sided MWU p-value by brute force over group assignments."""
    pooled = np.concatenate([a, b])
    n1 = len(a)
    ranks = stats.rankdata(pooled)
    total = 0
    us = []
    for idx in itertools.combinations(range(len(pooled)), n1):
        u = ranks[list(idx)].sum() - n1 * (n1 + 1) / 2
        us.append(u)
        total += 1
    us = np.array(us)
    u_obs = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    u_min = min(u_obs, n1 * len(b) - u_obs)
    tail = np.sum(us <= u_min)
    return min(1.0, 2.0 * tail / total)


def test_8_formula_oracles():
    # binary metrics against every confusion table with entries <= 3
    metrics_ok = True
    for tp, fp, fn, tn in itertools.product(range(4), repeat=4):
        if tp + fp + fn + tn == 0:
            continue
        preds = ["+"] * (tp + fp) + ["-"] * (fn + tn)
        trues = ["+"] * tp + ["-"] * fp + ["+"] * fn + ["-"] * tn
        rep = binary_metrics(preds, trues, "+")
        want_precision = tp / (tp + fp) if tp + fp else None
        want_recall = tp / (tp + fn) if tp + fn else None
        if want_precision is None or want_recall is None or want_precision + want_recall == 0:
            want_f1 = None
        else:
            want_f1 = 2 * want_precision * want_recall / (want_precision + want_recall)
        metrics_ok &= (rep.confusion.tp, rep.confusion.fp, rep.confusion.fn, rep.confusion.tn) == (tp, fp, fn, tn)
        metrics_ok &= rep.precision == want_precision and rep.recall == want_recall
        metrics_ok &= (rep.f1 is None) == (want_f1 is None)
        if rep.f1 is not None:
            metrics_ok &= abs(rep.f1 - want_f1) < 1e-12

    # exact MWU p-values against full enumeration for group sizes <= 7
    rng = np.random.default_rng(80)
    mwu_worst = 0.0
    for n1, n2 in ((2, 2), (3, 4), (5, 5), (6, 7)):
        for _ in range(5):
            pooled = rng.permutation(np.arange(1.0, n1 + n2 + 1))
            a, b = pooled[:n1], pooled[n1:]
            _, p = mann_whitney_u(a, b)
            mwu_worst = max(mwu_worst, abs(p - enumeration_p(a, b)))

    # BH q-values against the explicit step-up recursion
    bh_worst = 0.0
    for _ in range(20):
        p = rng.uniform(size=rng.integers(1, 9))
        bh_worst = max(bh_worst, np.abs(benjamini_hochberg(p) - reference_step_up(p)).max())

    ok = metrics_ok and mwu_worst < 1e-12 and bh_worst < 1e-12
    report(
        8, ok,
        f"confusion tables exact: {metrics_ok}, MWU max gap {mwu_worst:.1e}, "
        f"BH max gap {bh_worst:.1e}",
    )
    assert ok


def test_9_simulator_zero_proportions_match_reference():
    worst_hits = 21
    worst_cell = None
    for scenario, bands in ZP_REFERENCE.items():
        hits = np.zeros(3, dtype=int)
        for rep in range(20):
            config = preset(scenario, class_size=100, n_otus=25, seed=9000 + rep)
            data = generate_scenario(config)
            for k in range(3):
                block = data.table.counts[data.gen_labels == k + 1]
                zp = float(np.mean(block == 0))
                mean, sd = bands[k]
                hits[k] += mean - 2 * sd <= zp <= mean + 2 * sd
        for k in range(3):
            if hits[k] < worst_hits:
                worst_hits = int(hits[k])
                worst_cell = (scenario, k + 1)
    ok = worst_hits >= 18
    report(
        9, ok,
        f"lowest in-band count {worst_hits}/20 (scenario/class {worst_cell})",
    )
    assert ok


def test_10_reruns_are_byte_identical(tmp_path):
    sim = ["simulate", "--scenario", "2", "--class-size", "12", "--otus", "3", "--seed", "1"]
    bench = ["benchmark", "--scenarios", "2", "--replicates", "2", "--class-size", "12",
             "--otus", "3", "--bootstrap", "5", "--k", "3", "--seed", "1",
             "--methods", "kmeans-l2pdf,knn-euclidean"]

    for name, argv in (("a", sim), ("b", sim)):
        assert main(argv + ["--out", str(tmp_path / f"sim-{name}")]) == 0
    table = tmp_path / "sim-a" / "table.csv"

    fit = ["fit", "--table", str(table), "--label-column", "label",
           "--bootstrap", "5", "--seed", "1"]
    for name, extra in (("a", []), ("b", []), ("w2", ["--workers", "2"])):
        assert main(fit + extra + ["--out", str(tmp_path / f"fit-{name}")]) == 0
    model = tmp_path / "fit-a" / "model.json"

    classify = ["classify", "--model", str(model), "--train", str(table),
                "--test", str(table), "--method", "knn", "--metric", "l2pdf",
                "--k", "3", "--seed", "1"]
    for name in ("a", "b"):
        assert main(classify + ["--out", str(tmp_path / f"cls-{name}")]) == 0

    for name, extra in (("a", []), ("b", []), ("w2", ["--workers", "2"])):
        assert main(bench + extra + ["--out", str(tmp_path / f"bench-{name}")]) == 0

    checks = [
        ("sim-a/table.csv", "sim-b/table.csv"),
        ("sim-a/truth.json", "sim-b/truth.json"),
        ("fit-a/model.json", "fit-b/model.json"),
        ("fit-a/model.json", "fit-w2/model.json"),
        ("cls-a/predictions.tsv", "cls-b/predictions.tsv"),
        ("cls-a/metrics.tsv", "cls-b/metrics.tsv"),
        ("bench-a/summary.tsv", "bench-b/summary.tsv"),
        ("bench-a/summary.tsv", "bench-w2/summary.tsv"),
        ("bench-a/replicates.tsv", "bench-b/replicates.tsv"),
        ("bench-a/replicates.tsv", "bench-w2/replicates.tsv"),
    ]
    mismatched = [
        f"{left} != {right}"
        for left, right in checks
        if (tmp_path / left).read_bytes() != (tmp_path / right).read_bytes()
    ]
    ok = not mismatched
    report(
        10, ok,
        "all rerun and worker-count outputs byte-identical"
        if ok else "; ".join(mismatched),
    )
    assert ok
