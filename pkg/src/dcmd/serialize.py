"""Readers and writers for models, reports, and run manifests.

All output is deterministic: JSON is written with sorted keys and full
float round-trip precision, delimited reports have a fixed header and row
order, so reruns with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import TableFormatError, ValidationError
from .mixture import Component, ComponentSet, FittedMixture, MixtureConfig
from .pipeline import ModelSet, OtuModel
from .distances import build_gram
from .sampledist import build_p_matrix

MODEL_FORMAT = "dcmd-model"
NA = "NA"


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def _dump_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _component_payload(comp: Component) -> dict:
    out = {"kind": comp.kind}
    if comp.alpha is not None:
        out["alpha"] = comp.alpha
        out["beta"] = comp.beta
    return out


def write_model_set(models: ModelSet, path, distributions=None) -> None:
    """Serialize fitted mixtures (and optionally the training sample weights).

    `distributions` is a DistributionDataset; its per-sample component
    weights are stored keyed by OTU then sample id.
    """
    otus = []
    for m in models.models:
        mix = m.mixture
        otus.append(
            {
                "otu_id": m.otu_id,
                "truncation_c": mix.component_set.truncation_c,
                "components": [_component_payload(c) for c in mix.component_set.components],
                "weights": mix.weights.tolist(),
                "model_weights": None if mix.model_weights is None else list(mix.model_weights),
                "objective": mix.objective_value,
            }
        )
    payload = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "n_bar": models.n_bar,
        "bootstrap": models.bootstrap,
        "seed": models.seed,
        "mixture_config": asdict(models.mixture_config),
        "skipped": list(models.skipped),
        "otus": otus,
    }
    if distributions is not None:
        payload["sample_weights"] = {
            otu: {
                sid: distributions.weights[otu][i].tolist()
                for i, sid in enumerate(distributions.sample_ids)
            }
            for otu in distributions.otu_ids
        }
    _dump_json(payload, path)


def _config_from_payload(raw: dict) -> MixtureConfig:
    return MixtureConfig(
        low_rate_gammas=tuple(tuple(g) for g in raw["low_rate_gammas"]),
        shared_gammas=tuple(tuple(g) for g in raw["shared_gammas"]),
        alpha_cutoff=raw["alpha_cutoff"],
        quantile=raw["quantile"],
        log_grid_step=raw["log_grid_step"],
    )


def load_model_set(path) -> ModelSet:
    """Rebuild a ModelSet (including derived matrices) from its JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise TableFormatError(f"{path}: not a model file")
    models = []
    for entry in payload["otus"]:
        comps = tuple(
            Component(
                kind=c["kind"],
                alpha=c.get("alpha"),
                beta=c.get("beta"),
            )
            for c in entry["components"]
        )
        component_set = ComponentSet(comps, int(entry["truncation_c"]))
        mw = entry.get("model_weights")
        mixture = FittedMixture(
            component_set=component_set,
            weights=np.array(entry["weights"], dtype=float),
            objective_value=float(entry["objective"]),
            model_weights=None if mw is None else np.array(mw, dtype=float),
        )
        models.append(
            OtuModel(
                otu_id=entry["otu_id"],
                mixture=mixture,
                p_matrix=build_p_matrix(mixture),
                gram=build_gram(mixture.component_set),
            )
        )
    return ModelSet(
        models=tuple(models),
        skipped=tuple(payload.get("skipped", ())),
        n_bar=float(payload["n_bar"]),
        bootstrap=int(payload["bootstrap"]),
        seed=int(payload["seed"]),
        mixture_config=_config_from_payload(payload["mixture_config"]),
    )


def format_cell(value) -> str:
    if value is None:
        return NA
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, header, rows, delimiter: str = "\t") -> None:
    """Delimited text with a header row; floats at full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValidationError("row width does not match the header")
            fh.write(delimiter.join(format_cell(v) for v in row) + "\n")


def write_benchmark_summary(result, path) -> None:
    header = ("scenario", "method", "metric", "mean", "sd", "replicates")
    rows = [
        (r["scenario"], r["method"], r["metric"], r["mean"], r["sd"], r["replicates"])
        for r in result.summary()
    ]
    write_rows(path, header, rows)


def write_benchmark_replicates(result, path) -> None:
    header = ("scenario", "replicate", "method", "accuracy", "knn_k", "n_train", "n_test")
    rows = []
    for rep in result.replicates:
        for method in result.config.methods:
            rows.append(
                (
                    rep.scenario,
                    rep.replicate,
                    method,
                    rep.accuracies[method],
                    rep.knn_k.get(method),
                    rep.n_train,
                    rep.n_test,
                )
            )
    write_rows(path, header, rows)


def write_predictions(predictions, path, truths=None) -> None:
    """One row per sample: id, truth (if known), prediction, detail column.

    The detail is the per-class distance list for centroid predictions or
    the neighbor list (id:label:distance) for k-NN.
    """
    header = ("sample_id", "truth", "predicted", "detail")
    rows = []
    for i, pred in enumerate(predictions):
        if pred.class_distances is not None:
            detail = ";".join(
                f"{cls}:{format_cell(d)}" for cls, d in sorted(pred.class_distances.items(), key=lambda kv: str(kv[0]))
            )
        else:
            detail = ";".join(f"{sid}:{lbl}:{format_cell(d)}" for sid, lbl, d in pred.neighbors)
        truth = None if truths is None else truths[i]
        rows.append((pred.sample_id, truth, pred.label, detail))
    write_rows(path, header, rows)


def write_screening(result, path) -> None:
    header = ("otu_id", "u_statistic", "p_value", "q_value", "retained")
    rows = [
        (
            result.otu_ids[i],
            result.u_statistics[i],
            result.p_values[i],
            result.q_values[i],
            int(result.retained[i]),
        )
        for i in range(len(result.otu_ids))
    ]
    write_rows(path, header, rows)


def write_manifest(path, command: str, config: dict, inputs, outputs, started: float) -> None:
    payload = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_seconds": round(time.time() - started, 3),
    }
    _dump_json(payload, path)
