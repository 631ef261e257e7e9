"""Command-line interface.

Subcommands: simulate | fit | classify | benchmark | screen. Options can
come from flags or a JSON config file (flags win). Exit codes: 0 success,
1 invalid input or arguments, 2 runtime failure. Every run writes a
manifest with the fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .errors import DcmdError, TableFormatError, ValidationError
from .otu import filter_table, load_table, save_table
from .pipeline import (
    BenchmarkConfig,
    DEFAULT_METHODS,
    FitConfig,
    abundance_dataset,
    fit_table,
    parse_method,
    represent,
    run_benchmark,
    train_and_predict,
)
from .screening import screen_otus
from .serialize import (
    _dump_json,
    load_model_set,
    write_benchmark_replicates,
    write_benchmark_summary,
    write_manifest,
    write_model_set,
    write_predictions,
    write_rows,
    write_screening,
)
from .simulate import generate_scenario, preset

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as validation errors."""

    def error(self, message):
        raise ValidationError(message)


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return config


def _resolve(args, defaults: dict) -> dict:
    """Merge hard defaults, config-file values, and explicit flags (flags win)."""
    config = _read_config(getattr(args, "config", None))
    unknown = set(config) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config key {sorted(unknown)[0]!r}")
    resolved = dict(defaults)
    resolved.update(config)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _out_dir(resolved) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part != ""]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {text!r}") from None


def _parse_k(value):
    if value in (None, "cv"):
        return "cv"
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"--k must be 'cv' or an integer, got {value!r}") from None


def _load_maybe_labeled(path, label_column: str):
    try:
        return load_table(path, label_column=label_column)
    except TableFormatError as exc:
        if "label column" in str(exc):
            return load_table(path)
        raise


def cmd_simulate(args) -> None:
    started = time.time()
    defaults = {
        "scenario": 1,
        "class_size": 400,
        "otus": 25,
        "seed": 0,
        "out": "simulate-out",
    }
    resolved = _resolve(args, defaults)
    config = preset(
        int(resolved["scenario"]),
        class_size=int(resolved["class_size"]),
        n_otus=int(resolved["otus"]),
        seed=int(resolved["seed"]),
    )
    data = generate_scenario(config)
    out = _out_dir(resolved)
    table_path = out / "table.csv"
    truth_path = out / "truth.json"
    save_table(data.table, table_path)
    _dump_json(
        {
            "scenario": int(resolved["scenario"]),
            "gen_labels": data.gen_labels.tolist(),
            "resolutions": data.resolutions.tolist(),
            "otus": [
                {
                    "otu_id": data.table.otu_ids[j],
                    "alphas": list(t.alphas),
                    "beta": t.beta,
                    "n_bins": t.n_bins,
                    "data_range": t.data_range,
                    "rates": t.rates.tolist(),
                    "component_index": t.component_index.tolist(),
                }
                for j, t in enumerate(data.truths)
            ],
        },
        truth_path,
    )
    write_manifest(out / "manifest.json", "simulate", resolved, [], [table_path, truth_path], started)
    print(f"wrote {data.table.n_samples} samples x {data.table.n_otus} OTUs to {table_path}")


def cmd_fit(args) -> None:
    started = time.time()
    defaults = {
        "table": None,
        "label_column": None,
        "bootstrap": 300,
        "seed": 0,
        "workers": 1,
        "min_reads": 0,
        "min_abundance": 0.0,
        "out": "fit-out",
    }
    resolved = _resolve(args, defaults)
    if not resolved["table"]:
        raise ValidationError("--table is required")
    table = (
        load_table(resolved["table"], label_column=resolved["label_column"])
        if resolved["label_column"]
        else load_table(resolved["table"])
    )
    if resolved["min_reads"] or resolved["min_abundance"]:
        table = filter_table(
            table,
            min_reads=int(resolved["min_reads"]),
            min_mean_rel_abundance=float(resolved["min_abundance"]),
        )
    config = FitConfig(
        bootstrap=int(resolved["bootstrap"]),
        seed=int(resolved["seed"]),
        workers=int(resolved["workers"]),
    )
    models = fit_table(table, config)
    distributions = represent(models, table)
    out = _out_dir(resolved)
    model_path = out / "model.json"
    write_model_set(models, model_path, distributions=distributions)
    write_manifest(out / "manifest.json", "fit", resolved, [resolved["table"]], [model_path], started)
    print(f"fitted {len(models.models)} OTUs (skipped {len(models.skipped)}) -> {model_path}")


def cmd_classify(args) -> None:
    started = time.time()
    defaults = {
        "model": None,
        "train": None,
        "test": None,
        "label_column": "label",
        "method": "kmeans",
        "metric": "l2pdf",
        "k": "cv",
        "screen": False,
        "screen_threshold": 0.05,
        "positive_label": None,
        "seed": 0,
        "out": "classify-out",
    }
    resolved = _resolve(args, defaults)
    for key in ("model", "train", "test"):
        if not resolved[key]:
            raise ValidationError(f"--{key} is required")
    method = f"{resolved['method']}-{resolved['metric']}"
    parse_method(method)

    models = load_model_set(resolved["model"])
    train_table = load_table(resolved["train"], label_column=resolved["label_column"])
    test_table = _load_maybe_labeled(resolved["test"], resolved["label_column"])
    if train_table.labels is None:
        raise ValidationError("training table needs labels")

    otu_subset = list(train_table.otu_ids)
    screening = None
    if resolved["screen"]:
        screening = screen_otus(train_table, threshold=float(resolved["screen_threshold"]))
        otu_subset = [o for o, keep in zip(screening.otu_ids, screening.retained) if keep]
        if not otu_subset:
            raise DcmdError("screening retained no OTUs")

    distributional = resolved["metric"] in ("l2pdf", "l2cdf")
    if distributional:
        fitted_ids = set(models.otu_ids)
        fitted = [o for o in otu_subset if o in fitted_ids]
        if not fitted:
            raise ValidationError("no fitted model for any requested OTU")
        restricted = models.restrict(fitted)
        train_ds = represent(restricted, train_table)
        test_ds = represent(restricted, test_table)
    else:
        train_ds = abundance_dataset(train_table, otu_ids=otu_subset)
        test_ds = abundance_dataset(test_table, otu_ids=otu_subset)

    predictions, fitted_model = train_and_predict(
        method,
        train_ds,
        train_table.label_array(),
        test_ds,
        knn_k=_parse_k(resolved["k"]),
        seed=int(resolved["seed"]),
    )

    out = _out_dir(resolved)
    outputs = [out / "predictions.tsv"]
    truths = None if test_table.labels is None else list(test_table.labels)
    write_predictions(predictions, outputs[0], truths=truths)
    if screening is not None:
        outputs.append(out / "screening.tsv")
        write_screening(screening, outputs[-1])

    if truths is not None:
        from .evaluation import accuracy, binary_metrics

        predicted = [p.label for p in predictions]
        rows = [("accuracy", accuracy(predicted, truths))]
        if resolved["positive_label"] is not None:
            report = binary_metrics(predicted, truths, resolved["positive_label"])
            rows += [
                ("precision", report.precision),
                ("recall", report.recall),
                ("f1", report.f1),
            ]
        outputs.append(out / "metrics.tsv")
        write_rows(outputs[-1], ("metric", "value"), rows)
        for name, value in rows:
            print(f"{name}: {value:.4f}" if value is not None else f"{name}: NA")
    if resolved["method"] == "knn":
        print(f"k = {fitted_model.k}")

    write_manifest(
        out / "manifest.json",
        "classify",
        resolved,
        [resolved["model"], resolved["train"], resolved["test"]],
        outputs,
        started,
    )


def cmd_benchmark(args) -> None:
    started = time.time()
    defaults = {
        "scenarios": "1,2,3,4,5,6",
        "replicates": 10,
        "class_size": 400,
        "otus": 25,
        "bootstrap": 300,
        "methods": ",".join(DEFAULT_METHODS),
        "k": "cv",
        "train_fraction": 0.6,
        "seed": 0,
        "workers": 1,
        "out": "benchmark-out",
    }
    resolved = _resolve(args, defaults)
    methods = tuple(m for m in str(resolved["methods"]).split(",") if m)
    config = BenchmarkConfig(
        scenarios=tuple(_int_list(resolved["scenarios"])),
        replicates=int(resolved["replicates"]),
        class_size=int(resolved["class_size"]),
        n_otus=int(resolved["otus"]),
        bootstrap=int(resolved["bootstrap"]),
        methods=methods,
        knn_k=_parse_k(resolved["k"]),
        train_fraction=float(resolved["train_fraction"]),
        seed=int(resolved["seed"]),
        workers=int(resolved["workers"]),
    )
    result = run_benchmark(config)
    out = _out_dir(resolved)
    summary_path = out / "summary.tsv"
    replicate_path = out / "replicates.tsv"
    write_benchmark_summary(result, summary_path)
    write_benchmark_replicates(result, replicate_path)
    write_manifest(
        out / "manifest.json", "benchmark", resolved, [], [summary_path, replicate_path], started
    )
    for row in result.summary():
        sd = "NA" if row["sd"] is None else f"{row['sd']:.4f}"
        print(f"scenario {row['scenario']}  {row['method']:<18} {row['mean']:.4f} ({sd})")


def cmd_screen(args) -> None:
    started = time.time()
    defaults = {
        "table": None,
        "label_column": "label",
        "threshold": 0.05,
        "out": "screen-out",
    }
    resolved = _resolve(args, defaults)
    if not resolved["table"]:
        raise ValidationError("--table is required")
    table = load_table(resolved["table"], label_column=resolved["label_column"])
    result = screen_otus(table, threshold=float(resolved["threshold"]))
    out = _out_dir(resolved)
    path = out / "screening.tsv"
    write_screening(result, path)
    write_manifest(out / "manifest.json", "screen", resolved, [resolved["table"]], [path], started)
    print(f"retained {int(result.retained.sum())} of {len(result.otu_ids)} OTUs at q < {result.threshold}")


def build_parser() -> _Parser:
    parser = _Parser(prog="dcmd", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON file with option defaults (flags win)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    add_common(p)
    p.add_argument("--scenario", type=int, help="scenario id, 1-6")
    p.add_argument("--class-size", dest="class_size", type=int)
    p.add_argument("--otus", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit mixtures to a count table")
    add_common(p)
    p.add_argument("--table", help="input count table (csv/tsv)")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--min-reads", dest="min_reads", type=int)
    p.add_argument("--min-abundance", dest="min_abundance", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", help="classify test samples with a fitted model")
    add_common(p)
    p.add_argument("--model", help="model.json from fit")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--method", choices=("kmeans", "knn"))
    p.add_argument("--metric", choices=("l2pdf", "l2cdf", "euclidean", "manhattan"))
    p.add_argument("--k", help="'cv' or an integer")
    p.add_argument("--screen", action=argparse.BooleanOptionalAction)
    p.add_argument("--screen-threshold", dest="screen_threshold", type=float)
    p.add_argument("--positive-label", dest="positive_label")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("benchmark", help="run the simulation benchmark")
    add_common(p)
    p.add_argument("--scenarios", help="comma-separated scenario ids")
    p.add_argument("--replicates", type=int)
    p.add_argument("--class-size", dest="class_size", type=int)
    p.add_argument("--otus", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--methods", help="comma-separated algo-metric names")
    p.add_argument("--k", help="'cv' or an integer")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("screen", help="Mann-Whitney/BH OTU screening")
    add_common(p)
    p.add_argument("--table")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_screen)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return 1
        args.func(args)
        return 0
    except (ValidationError, TableFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DcmdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
