"""Mixed naive Bayes: Gaussian likelihoods for numeric features, smoothed
categorical likelihoods for one-hot blocks and standalone booleans."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

VAR_FLOOR = 1e-9
# Standardised deviations beyond this are equally implausible under both
# classes; the bound keeps squared sums finite for extreme inputs.
Z_MAX = 1e100


def _layout(feature_specs):
    gauss, cat, block_of = [], [], []
    blocks: dict[str, int] = {}
    booleans = []
    for j, s in enumerate(feature_specs):
        if s.kind == "numeric":
            gauss.append(j)
        elif s.source is not None:
            cat.append(j)
            block_of.append(blocks.setdefault(s.source, len(blocks)))
        else:
            booleans.append(j)
    return np.array(gauss, dtype=int), np.array(cat, dtype=int), np.array(block_of, dtype=int), \
        np.array(booleans, dtype=int)


def _mean_var(col):
    """Mean and population variance from correctly rounded sums, so the
    estimates do not depend on summation order."""
    if col.size == 0:
        return 0.0, 0.0
    mean = math.fsum(col) / col.size
    return mean, math.fsum((col - mean) ** 2) / col.size


def fit(X, y, hp, feature_specs):
    alpha = float(hp["alpha"])
    gauss, cat, block_of, booleans = _layout(feature_specs)
    classes = (y == 0, y == 1)
    counts = np.array([c.sum() for c in classes], dtype=float)
    theta = np.zeros((2, gauss.size))
    var = np.zeros((2, gauss.size))
    for k, c in enumerate(classes):
        for i, j in enumerate(gauss):
            theta[k, i], var[k, i] = _mean_var(X[c, j])
    var = np.maximum(var, VAR_FLOOR)

    n_levels = np.bincount(block_of, minlength=block_of.max() + 1 if block_of.size else 0)
    cat_log_prob = np.zeros((2, cat.size))
    for k, c in enumerate(classes):
        active = X[c][:, cat].sum(axis=0)
        cat_log_prob[k] = np.log((active + alpha) / (counts[k] + alpha * n_levels[block_of]))
    # standalone booleans are two-level categoricals: log P(1 | class), log P(0 | class)
    bool_log_prob = np.zeros((2, booleans.size, 2))
    for k, c in enumerate(classes):
        ones = X[c][:, booleans].sum(axis=0)
        bool_log_prob[k, :, 0] = np.log((ones + alpha) / (counts[k] + 2 * alpha))
        bool_log_prob[k, :, 1] = np.log((counts[k] - ones + alpha) / (counts[k] + 2 * alpha))

    params = {
        "class_prior": counts / counts.sum(),
        "gauss_index": gauss,
        "theta": theta,
        "var": var,
        "cat_index": cat,
        "cat_log_prob": cat_log_prob,
        "bool_index": booleans,
        "bool_log_prob": bool_log_prob,
    }
    return params, {}


def joint_log_likelihood(params, X):
    gi = params["gauss_index"].astype(int)
    jll = np.tile(np.log(params["class_prior"]), (X.shape[0], 1))
    for k in range(2):
        theta, var = params["theta"][k], params["var"][k]
        z = np.clip((X[:, gi] - theta) / np.sqrt(var), -Z_MAX, Z_MAX)
        jll[:, k] += -0.5 * np.sum(np.log(2 * np.pi * var) + z * z, axis=1)
        jll[:, k] += X[:, params["cat_index"].astype(int)] @ params["cat_log_prob"][k]
        xb = X[:, params["bool_index"].astype(int)]
        lp = params["bool_log_prob"][k]
        jll[:, k] += xb @ lp[:, 0] + (1 - xb) @ lp[:, 1]
    return jll


def proba(params, X):
    jll = joint_log_likelihood(params, X)
    return np.exp(jll[:, 1] - logsumexp(jll, axis=1))
