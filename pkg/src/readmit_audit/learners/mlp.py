"""Fully connected binary classifier trained by mini-batch backpropagation.

Hidden layers use relu or tanh; the output unit is a sigmoid on a single
logit. The training objective is mean binary cross-entropy plus
``l2 / 2 * sum ||W||^2`` over weight matrices (biases unpenalised).
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

PLATEAU_TOL = 1e-4
ADAPTIVE_PATIENCE = 5


def _act(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z, a, activation):
    if activation == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a ** 2


def init_params(sizes, rng):
    """Glorot-uniform weights, zero biases; ``sizes`` includes input and output."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X, activation):
    """Output logits and the cached (pre-activation, activation) pairs."""
    a = X
    cache = []
    n_layers = len(params) // 2
    for k in range(n_layers - 1):
        z = a @ params[2 * k] + params[2 * k + 1]
        a_next = _act(z, activation)
        cache.append((a, z, a_next))
        a = a_next
    logits = a @ params[-2] + params[-1]
    cache.append((a, None, None))
    return logits[:, 0], cache


def loss_and_grad(params, X, y, activation, l2=0.0, with_loss=True):
    n = X.shape[0]
    logits, cache = forward(params, X, activation)
    loss = None
    if with_loss:
        loss = np.mean(np.logaddexp(0.0, logits) - y * logits)
        loss += 0.5 * l2 * sum(np.sum(W * W) for W in params[0::2])

    grads = [None] * len(params)
    delta = ((expit(logits) - y) / n)[:, None]
    n_layers = len(params) // 2
    for k in range(n_layers - 1, -1, -1):
        a_in = cache[k][0]
        grads[2 * k] = a_in.T @ delta + l2 * params[2 * k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            _, z, a_out = cache[k - 1]
            delta = (delta @ params[2 * k].T) * _act_grad(z, a_out, activation)
    return loss, grads


def _mean_loss(params, X, y, activation, l2):
    logits, _ = forward(params, X, activation)
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits)
                 + 0.5 * l2 * sum(np.sum(W * W) for W in params[0::2]))


def _flat_views(params):
    """One contiguous buffer holding every parameter, plus per-layer views."""
    flat = np.concatenate([p.ravel() for p in params])
    views, start = [], 0
    for p in params:
        views.append(flat[start:start + p.size].reshape(p.shape))
        start += p.size
    return flat, views


class _Adam:
    def __init__(self, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, flat, grad, lr):
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        flat -= (lr / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)


class _SGD:
    def __init__(self, size, momentum):
        self.momentum = momentum
        self.vel = np.zeros(size)

    def step(self, flat, grad, lr):
        self.vel *= self.momentum
        self.vel -= lr * grad
        flat += self.vel


def fit(X, y, hp, seed):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    activation = hp["activation"]
    l2 = float(hp["l2"])
    batch = int(hp["batch_size"])
    patience = int(hp["patience"])
    lr = float(hp["learning_rate"])

    flat, params = _flat_views(init_params([d, *hp["hidden"], 1], rng))
    order = rng.permutation(n)
    n_val = int(round(hp["validation_fraction"] * n)) if n >= 20 else 0
    val_idx, fit_idx = order[:n_val], order[n_val:]
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]

    opt = _Adam(flat.size) if hp["optimizer"] == "adam" else _SGD(flat.size, float(hp["momentum"]))
    best = [p.copy() for p in params]
    best_score = np.inf
    since_best = 0
    best_train = np.inf
    since_train = 0
    history = []
    converged = False
    epoch = 0
    for epoch in range(1, int(hp["max_epochs"]) + 1):
        perm = rng.permutation(fit_idx.size)
        for start in range(0, perm.size, batch):
            idx = perm[start:start + batch]
            _, grads = loss_and_grad(params, Xf[idx], yf[idx], activation, l2, with_loss=False)
            opt.step(flat, np.concatenate([g.ravel() for g in grads]), lr)
        train_loss = _mean_loss(params, Xf, yf, activation, l2)
        val_loss = _mean_loss(params, Xv, yv, activation, l2) if n_val else train_loss
        history.append((train_loss, val_loss))

        if hp["lr_schedule"] == "adaptive":
            if train_loss < best_train - PLATEAU_TOL:
                best_train, since_train = train_loss, 0
            else:
                since_train += 1
                if since_train >= ADAPTIVE_PATIENCE:
                    lr *= 0.5
                    since_train = 0

        if not n_val:
            # nothing held out: train for the full epoch budget
            continue
        if val_loss < best_score - PLATEAU_TOL:
            best_score, since_best = val_loss, 0
            best = [p.copy() for p in params]
        else:
            since_best += 1
            if since_best >= patience:
                converged = True
                break
    if not n_val or (not converged and val_loss < best_score):
        best = [p.copy() for p in params]
    out = {}
    for k in range(len(best) // 2):
        out[f"W{k}"] = best[2 * k]
        out[f"b{k}"] = best[2 * k + 1]
    # Reaching max_epochs is the normal stopping rule for tiny problems
    # (no validation split); only flag non-convergence when one exists.
    return out, {"converged": converged or n_val == 0, "n_iter": epoch,
                 "final_grad_norm": None, "loss_history": history}


def unpack(params: dict) -> list[np.ndarray]:
    n_layers = sum(1 for k in params if k.startswith("W"))
    out = []
    for k in range(n_layers):
        out.append(np.asarray(params[f"W{k}"], dtype=float))
        out.append(np.asarray(params[f"b{k}"], dtype=float))
    return out


def proba(params, X, activation):
    logits, _ = forward(unpack(params), X, activation)
    return expit(logits)
