"""Grid-search each learner family on one synthetic cohort and compare test
precision, recall and F1 on the positive class.

Usage: python3 scripts/compare_learners.py [--rows N] [--seed S] [--full-grid]
"""
from __future__ import annotations

import argparse
import time
import warnings

from readmit_audit.cohortgen import clinical_config, generate_cohort
from readmit_audit.errors import NonConvergenceWarning
from readmit_audit.evalmetrics import confusion, scores
from readmit_audit.learners import DEFAULT_GRIDS, grid_search_cv, predict, train
from readmit_audit.learners.search import derive_seed
from readmit_audit.tabular import SplitSpec, preprocess, split

QUICK_GRIDS = {
    "naive_bayes": {"alpha": [0.1, 1.0, 10.0]},
    "logistic": {"l2": [1e-2, 1e-1, 1.0]},
    "glm": {"link": ["logit", "probit", "cloglog"], "l2": [1e-2]},
    "mlp": {"hidden": [[16, 16], [32, 32]], "max_epochs": [30], "batch_size": [128]},
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--signal", type=float, default=0.6)
    ap.add_argument("--full-grid", action="store_true", help="use the default (large) grids")
    args = ap.parse_args(argv)

    cohort, _ = generate_cohort(clinical_config(args.rows, seed=args.seed, balance_labels=True,
                                                feature_signal_strength=args.signal,
                                                noise_flip_rate_positive=0.1,
                                                noise_flip_rate_negative=0.1))
    train_raw, test_raw = split(cohort, SplitSpec(0.7, args.seed))
    train_set, stats = preprocess(train_raw)
    test_set, _ = preprocess(test_raw, stats)
    grids = DEFAULT_GRIDS if args.full_grid else QUICK_GRIDS

    print(f"{'family':<12}{'precision':>10}{'recall':>8}{'f1':>7}{'seconds':>9}  selected")
    for family in ("naive_bayes", "logistic", "glm", "mlp"):
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            cv = grid_search_cv(family, grids[family], train_set, args.seed)
            model = train(cv.best_spec, train_set, derive_seed(args.seed, 10**6))
        s = scores(confusion(test_set.label, predict(model, test_set)))
        elapsed = time.perf_counter() - start
        print(f"{family:<12}{s.precision:>10.3f}{s.recall:>8.3f}{s.f1:>7.3f}{elapsed:>9.1f}  "
              f"{cv.best_spec.hyperparameters}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
