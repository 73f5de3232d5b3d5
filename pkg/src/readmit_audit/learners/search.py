"""Exhaustive hyperparameter grid search with k-fold cross-validation,
selecting on mean validation F1."""
from __future__ import annotations

import itertools
import warnings
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyGrid, NonConvergenceWarning, SingleClassFold, TooFewRows
from ..evalmetrics import confusion, scores
from ..tabular import Dataset
from .base import ModelSpec, predict, train, validate_hyperparameters

N_FOLDS = 5


def expand_grid(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product in key order; the list index is the tie-break order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise EmptyGrid("grid must name at least one value per hyperparameter")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def fold_indices(n: int, seed: int, k: int = N_FOLDS) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


@dataclass
class CandidateResult:
    hyperparameters: dict
    fold_scores: list[float]
    mean_score: float
    std_score: float

    def to_dict(self):
        return {"hyperparameters": self.hyperparameters, "fold_scores": self.fold_scores,
                "mean_score": self.mean_score, "std_score": self.std_score}


@dataclass
class CVResult:
    family: str
    candidates: list[CandidateResult]
    best_index: int
    fold_seed: int
    folds: list[np.ndarray] = field(repr=False)

    @property
    def best_spec(self) -> ModelSpec:
        return ModelSpec(self.family, dict(self.candidates[self.best_index].hyperparameters))

    def to_dict(self):
        return {
            "family": self.family,
            "best_index": self.best_index,
            "best_hyperparameters": self.candidates[self.best_index].hyperparameters,
            "fold_seed": self.fold_seed,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def _folds_have_both_classes(y, folds):
    for f in folds:
        mask = np.zeros(y.size, dtype=bool)
        mask[f] = True
        if np.unique(y[mask]).size < 2 or np.unique(y[~mask]).size < 2:
            return False
    return True


def _fold_score(family, hp, dataset, folds, ci, fi, seed):
    val = folds[fi]
    fit = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != fi]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        model = train(ModelSpec(family, hp), dataset.subset(fit), derive_seed(seed, ci, fi))
    val_set = dataset.subset(val)
    f1 = scores(confusion(val_set.label, predict(model, val_set))).f1
    # an undefined F1 (no positives predicted or present) ranks as 0
    return 0.0 if f1 is None else f1


def grid_search_cv(family: str, grid: Mapping[str, Sequence], train_set: Dataset, seed: int = 0,
                   n_jobs: int = 1) -> CVResult:
    """Score every grid point on 5 folds (80/20 fit/validation each) and pick
    the highest mean validation F1, ties going to the earlier grid point.

    Each (candidate, fold) fit is seeded from ``(seed, candidate, fold)``, so
    the result does not depend on ``n_jobs``.
    """
    candidates = expand_grid(grid)
    for hp in candidates:
        validate_hyperparameters(family, hp)
    y = np.asarray(train_set.label)
    if y.size < 10:
        raise TooFewRows(f"grid search needs at least 10 rows, got {y.size}")

    fold_seed = seed
    folds = fold_indices(y.size, fold_seed)
    if not _folds_have_both_classes(y, folds):
        fold_seed = seed + 1
        folds = fold_indices(y.size, fold_seed)
        if not _folds_have_both_classes(y, folds):
            raise SingleClassFold("a fold lacks one label class even after reshuffling")

    jobs = [(ci, fi) for ci in range(len(candidates)) for fi in range(N_FOLDS)]

    def run(job):
        ci, fi = job
        return _fold_score(family, candidates[ci], train_set, folds, ci, fi, seed)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    out = []
    for ci, hp in enumerate(candidates):
        fs = results[ci * N_FOLDS:(ci + 1) * N_FOLDS]
        out.append(CandidateResult(dict(hp), [float(s) for s in fs],
                                   float(np.mean(fs)), float(np.std(fs))))
    best = max(range(len(out)), key=lambda i: (out[i].mean_score, -i))
    return CVResult(family, out, best, fold_seed, folds)
