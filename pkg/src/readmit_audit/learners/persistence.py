"""Versioned JSON model files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..tabular import PreprocessStats
from .base import ModelSpec, TrainedModel

MODEL_FORMAT = "readmit-audit-model"
MODEL_VERSION = 1


def model_to_dict(model: TrainedModel) -> dict:
    params = {}
    for name in sorted(model.params):
        arr = np.asarray(model.params[name])
        params[name] = {
            "dtype": "int" if arr.dtype.kind in "iu" else "float",
            "shape": list(arr.shape),
            "data": [x.item() for x in arr.ravel()],
        }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.spec.family,
        "hyperparameters": model.spec.hyperparameters,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "converged": model.converged,
        "final_grad_norm": model.final_grad_norm,
        "n_iter": model.n_iter,
        "parameters": params,
        "preprocess_stats": model.stats.to_dict() if model.stats is not None else None,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    params = {}
    for name, p in doc["parameters"].items():
        dtype = int if p["dtype"] == "int" else float
        params[name] = np.array(p["data"], dtype=dtype).reshape(p["shape"])
    stats = doc.get("preprocess_stats")
    return TrainedModel(
        spec=ModelSpec(doc["family"], dict(doc["hyperparameters"])),
        params=params,
        feature_names=list(doc["feature_names"]),
        seed=int(doc["seed"]),
        stats=PreprocessStats.from_dict(stats) if stats is not None else None,
        converged=bool(doc["converged"]),
        final_grad_norm=doc["final_grad_norm"],
        n_iter=int(doc["n_iter"]),
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
