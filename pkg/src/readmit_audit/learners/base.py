"""Model specs, trained-model container and the family-dispatching train /
predict entry points."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import (DimensionMismatch, InvalidHyperparameter, NonConvergenceWarning,
                      SingleClassTraining, TooFewRows)
from ..tabular import Dataset, PreprocessStats

FAMILIES = ("naive_bayes", "logistic", "glm", "mlp")
LINKS = ("logit", "probit", "cloglog")

DEFAULTS: dict[str, dict[str, Any]] = {
    "naive_bayes": {"alpha": 1.0},
    "logistic": {"l2": 1e-2, "max_iter": 20000, "tol": 1e-6},
    "glm": {"link": "logit", "l2": 1e-2, "max_iter": 100, "tol": 1e-9},
    "mlp": {
        "hidden": [32, 32],
        "activation": "relu",
        "optimizer": "adam",
        "lr_schedule": "constant",
        "learning_rate": 1e-3,
        "momentum": 0.9,
        "batch_size": 32,
        "max_epochs": 200,
        "patience": 10,
        "l2": 1e-4,
        "validation_fraction": 0.1,
    },
}

# Hyperparameter grids explored per family.
DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "naive_bayes": {"alpha": [0.1, 1.0, 10.0]},
    "logistic": {"l2": [1e-4, 1e-3, 1e-2, 1e-1, 1.0]},
    "glm": {"link": ["logit", "probit", "cloglog"], "l2": [1e-4, 1e-2, 1.0]},
    "mlp": {
        "hidden": [[8, 8], [32, 32], [128, 128], [32, 32, 32]],
        "activation": ["relu", "tanh"],
        "optimizer": ["adam", "sgd"],
        "lr_schedule": ["constant", "adaptive"],
    },
}


def _check(cond, family, name, value):
    if not cond:
        raise InvalidHyperparameter(f"{family}: invalid {name}={value!r}")


def validate_hyperparameters(family: str, hp: dict) -> dict:
    """Merge ``hp`` over the family defaults and range-check the result."""
    if family not in FAMILIES:
        raise InvalidHyperparameter(f"unknown family {family!r}; expected one of {FAMILIES}")
    unknown = set(hp) - set(DEFAULTS[family])
    if unknown:
        raise InvalidHyperparameter(f"{family}: unknown hyperparameters {sorted(unknown)}")
    out = {**DEFAULTS[family], **hp}
    if family == "naive_bayes":
        _check(out["alpha"] > 0, family, "alpha", out["alpha"])
    if family in ("logistic", "glm"):
        _check(out["l2"] >= 0, family, "l2", out["l2"])
        _check(int(out["max_iter"]) >= 1, family, "max_iter", out["max_iter"])
        _check(out["tol"] > 0, family, "tol", out["tol"])
    if family == "glm":
        _check(out["link"] in LINKS, family, "link", out["link"])
    if family == "mlp":
        hidden = out["hidden"]
        _check(isinstance(hidden, (list, tuple)) and 2 <= len(hidden) <= 3
               and all(isinstance(w, (int, np.integer)) and 8 <= w <= 128 for w in hidden),
               family, "hidden", hidden)
        out["hidden"] = [int(w) for w in hidden]
        _check(out["activation"] in ("relu", "tanh"), family, "activation", out["activation"])
        _check(out["optimizer"] in ("adam", "sgd"), family, "optimizer", out["optimizer"])
        _check(out["lr_schedule"] in ("constant", "adaptive"), family, "lr_schedule",
               out["lr_schedule"])
        _check(out["learning_rate"] > 0, family, "learning_rate", out["learning_rate"])
        _check(0 <= out["momentum"] < 1, family, "momentum", out["momentum"])
        _check(int(out["batch_size"]) >= 1, family, "batch_size", out["batch_size"])
        _check(int(out["max_epochs"]) >= 1, family, "max_epochs", out["max_epochs"])
        _check(int(out["patience"]) >= 1, family, "patience", out["patience"])
        _check(out["l2"] >= 0, family, "l2", out["l2"])
        _check(0 <= out["validation_fraction"] < 1, family, "validation_fraction",
               out["validation_fraction"])
    return out


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return validate_hyperparameters(self.family, dict(self.hyperparameters))


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    feature_names: list[str]
    seed: int
    stats: PreprocessStats | None = None
    converged: bool = True
    final_grad_norm: float | None = None
    n_iter: int = 0
    # Not persisted: per-iteration diagnostics such as the loss history.
    info: dict = field(default_factory=dict, compare=False)

    @property
    def family(self) -> str:
        return self.spec.family


def _training_arrays(dataset: Dataset):
    X = dataset.feature_matrix()
    y = np.asarray(dataset.label, dtype=float)
    if y.size == 0:
        raise TooFewRows("cannot train on an empty dataset")
    if np.unique(y).size < 2:
        raise SingleClassTraining(f"training labels contain only class {int(y[0])}")
    return X, y


def train(spec: ModelSpec, train_set: Dataset, seed: int = 0,
          stats: PreprocessStats | None = None) -> TrainedModel:
    from . import linear, mlp, naive_bayes

    hp = spec.resolved()
    X, y = _training_arrays(train_set)
    feature_specs = [train_set.spec(n) for n in train_set.feature_names]
    if spec.family == "naive_bayes":
        params, info = naive_bayes.fit(X, y, hp, feature_specs)
    elif spec.family == "logistic":
        params, info = linear.fit_logistic(X, y, hp)
    elif spec.family == "glm":
        params, info = linear.fit_glm(X, y, hp)
    else:
        params, info = mlp.fit(X, y, hp, seed)
    model = TrainedModel(
        spec=ModelSpec(spec.family, dict(spec.hyperparameters)),
        params=params,
        feature_names=list(train_set.feature_names),
        seed=int(seed),
        stats=stats,
        converged=info.pop("converged", True),
        final_grad_norm=info.pop("final_grad_norm", None),
        n_iter=int(info.pop("n_iter", 0)),
        info=info,
    )
    if not model.converged:
        warnings.warn(
            f"{spec.family} stopped after {model.n_iter} iterations without converging "
            f"(final gradient norm {model.final_grad_norm})", NonConvergenceWarning, stacklevel=2)
    return model


def proba_from_matrix(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    from . import linear, mlp, naive_bayes

    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"model expects {len(model.feature_names)} features, got shape {X.shape}")
    hp = model.spec.resolved()
    if model.family == "naive_bayes":
        p = naive_bayes.proba(model.params, X)
    elif model.family == "logistic":
        p = linear.proba(model.params, X, "logit")
    elif model.family == "glm":
        p = linear.proba(model.params, X, hp["link"])
    else:
        p = mlp.proba(model.params, X, hp["activation"])
    return np.clip(p, 0.0, 1.0)


def predict_proba(model: TrainedModel, rows: Dataset) -> np.ndarray:
    if rows.feature_names != model.feature_names:
        missing = sorted(set(model.feature_names) - set(rows.feature_names))
        extra = sorted(set(rows.feature_names) - set(model.feature_names))
        raise DimensionMismatch(f"feature columns differ from training: missing {missing}, "
                                f"unexpected {extra}")
    return proba_from_matrix(model, rows.feature_matrix())


def threshold_predictions(proba, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(proba) >= threshold).astype(np.int8)


def predict(model: TrainedModel, rows: Dataset, threshold: float = 0.5) -> np.ndarray:
    return threshold_predictions(predict_proba(model, rows), threshold)
