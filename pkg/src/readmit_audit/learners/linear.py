"""Binomial linear models: L2-regularised logistic regression fitted by
preconditioned gradient descent, and a binomial GLM with logit/probit/cloglog link fitted by
penalised iteratively reweighted least squares.

Both minimise the same objective::

    J(w, b) = mean_i NLL(y_i, link^-1(x_i . w + b)) + l2 / 2 * ||w||^2

with the intercept unpenalised, so the logit GLM and logistic regression
share their optimum.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, log_ndtr

_ETA_MAX = 30.0
# Sufficient-decrease constant for the logistic line search. With a direction
# this close to Newton's, 1/2 only accepts steps up to the one-dimensional
# minimiser; small constants let doubled steps overshoot and oscillate.
ARMIJO_C = 0.5
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def _eta(X, w, b):
    return X @ w + b


def log_likelihood_terms(eta, link):
    """``(log mu, log(1 - mu))`` for the inverse link, computed stably."""
    if link == "logit":
        return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
    if link == "probit":
        return log_ndtr(eta), log_ndtr(-eta)
    if link == "cloglog":
        t = np.exp(np.minimum(eta, _ETA_MAX))
        return np.log(-np.expm1(-t)), -t
    raise ValueError(f"unknown link {link!r}")


def mean_response(eta, link):
    if link == "logit":
        return expit(eta)
    if link == "probit":
        return np.exp(log_ndtr(eta))
    if link == "cloglog":
        return -np.expm1(-np.exp(np.minimum(eta, _ETA_MAX)))
    raise ValueError(f"unknown link {link!r}")


def _derivative_ratios(eta, link):
    """``(mu' / mu, mu' / (1 - mu))`` where ``mu'`` is d mu / d eta."""
    if link == "logit":
        mu = expit(eta)
        return 1.0 - mu, mu
    if link == "probit":
        log_pdf = -0.5 * eta ** 2 - _LOG_SQRT_2PI
        return np.exp(log_pdf - log_ndtr(eta)), np.exp(log_pdf - log_ndtr(-eta))
    if link == "cloglog":
        t = np.exp(np.minimum(eta, _ETA_MAX))
        safe = np.clip(t, 1e-12, None)
        with np.errstate(over="ignore"):
            ratio = np.where(t < 1e-12, 1.0 - 0.5 * t, safe / np.expm1(safe))
        return ratio, t
    raise ValueError(f"unknown link {link!r}")


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def objective(w, b, X, y, link="logit", l2=0.0):
    """Penalised mean negative log-likelihood and its gradient ``(J, dw, db)``."""
    n = X.shape[0]
    eta = _eta(X, w, b)
    if link == "logit":
        # NLL = softplus(eta) - y * eta; one transcendental pass instead of two
        loss = np.mean(_softplus(eta) - y * eta)
        d_eta = (expit(eta) - y) / n
    else:
        log_mu, log_1m = log_likelihood_terms(eta, link)
        loss = -np.mean(y * log_mu + (1 - y) * log_1m)
        r_pos, r_neg = _derivative_ratios(eta, link)
        d_eta = (-y * r_pos + (1 - y) * r_neg) / n
    loss += 0.5 * l2 * np.dot(w, w)
    return loss, X.T @ d_eta + l2 * w, d_eta.sum()


def fit_logistic(X, y, hp):
    """Preconditioned full-batch gradient descent with Armijo backtracking.

    The metric is the fixed quadratic bound on the logistic Hessian,
    ``M = [X 1]^T [X 1] / (4 n) + diag(l2, ..., l2, 0)``, so the unit step
    ``-M^-1 grad`` already decreases J; backtracking keeps the recorded loss
    sequence non-increasing when the step grows past it.
    """
    n, d = X.shape
    l2 = float(hp["l2"])
    tol = float(hp["tol"])
    max_iter = int(hp["max_iter"])
    Xa = np.column_stack([X, np.ones(n)])
    metric = Xa.T @ Xa / (4 * n)
    metric[np.arange(d), np.arange(d)] += l2
    # jitter keeps the factorisation defined for collinear, unpenalised columns
    metric[np.diag_indices_from(metric)] += 1e-10 * max(1.0, float(np.max(np.diag(metric))))
    factor = cho_factor(metric)

    theta = np.zeros(d + 1)
    loss, gw, gb = objective(theta[:d], theta[d], X, y, "logit", l2)
    grad = np.append(gw, gb)
    history = [loss]
    t = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(grad)
        if gnorm < tol:
            converged = True
            it -= 1
            break
        direction = -cho_solve(factor, grad)
        decrease = -np.dot(grad, direction)
        t = min(2.0 * t, 1e6)
        while True:
            trial = theta + t * direction
            new_loss, gw, gb = objective(trial[:d], trial[d], X, y, "logit", l2)
            if new_loss <= loss - ARMIJO_C * t * decrease:
                break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            # no representable decrease left
            converged = gnorm < 1e3 * tol
            break
        theta, loss, grad = trial, new_loss, np.append(gw, gb)
        history.append(loss)
    else:
        converged = np.linalg.norm(grad) < tol
    params = {"coef": theta[:d].copy(), "intercept": np.array([theta[d]])}
    return params, {"converged": bool(converged), "final_grad_norm": float(np.linalg.norm(grad)),
                    "n_iter": it, "loss_history": history}


def fit_glm(X, y, hp):
    """Penalised Fisher scoring (IRLS) with step halving."""
    n, d = X.shape
    link = hp["link"]
    l2 = float(hp["l2"])
    tol = float(hp["tol"])
    max_iter = int(hp["max_iter"])
    Xa = np.column_stack([X, np.ones(n)])
    penalty = np.full(d + 1, l2)
    penalty[d] = 0.0

    theta = np.zeros(d + 1)
    if link != "logit":
        # start at the intercept-only fit of the marginal rate
        theta[d] = _link(np.clip(y.mean(), 1e-6, 1 - 1e-6), link)
    loss, gw, gb = objective(theta[:d], theta[d], X, y, link, l2)
    grad = np.append(gw, gb)
    history = [loss]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        eta = Xa @ theta
        r_pos, r_neg = _derivative_ratios(eta, link)
        weights = r_pos * r_neg
        fisher = (Xa * weights[:, None]).T @ Xa / n + np.diag(penalty)
        fisher[np.diag_indices_from(fisher)] += 1e-12
        step = -np.linalg.solve(fisher, grad)
        t = 1.0
        while True:
            trial = theta + t * step
            new_loss, gw, gb = objective(trial[:d], trial[d], X, y, link, l2)
            if np.isfinite(new_loss) and new_loss <= loss + 1e-12 * abs(loss):
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            converged = np.linalg.norm(grad) < 1e3 * tol
            break
        theta, loss, grad = trial, new_loss, np.append(gw, gb)
        history.append(loss)
    else:
        converged = np.linalg.norm(grad) < tol
    params = {"coef": theta[:d].copy(), "intercept": np.array([theta[d]])}
    return params, {"converged": bool(converged), "final_grad_norm": float(np.linalg.norm(grad)),
                    "n_iter": it, "loss_history": history}


def _link(mu, link):
    from scipy.special import logit, ndtri

    if link == "logit":
        return float(logit(mu))
    if link == "probit":
        return float(ndtri(mu))
    return float(np.log(-np.log1p(-mu)))


def proba(params, X, link):
    return mean_response(_eta(X, params["coef"], params["intercept"][0]), link)
