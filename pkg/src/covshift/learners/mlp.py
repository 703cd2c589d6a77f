"""Fully connected network with a sigmoid output, trained on weighted cross-entropy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import Model, log_loss_terms, sigmoid
from .._seeding import child_rng
from ..data import NormStats
from ..exceptions import NumericalError

_ACT = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(np.float64)),
}


@dataclass(frozen=True, eq=False)
class MLPModel(Model):
    weights: tuple  # (W_1, ..., W_L); W_k has shape (fan_in, fan_out)
    biases: tuple
    activation: str
    n_features: int
    l2: float = 0.0
    loss_history: tuple = field(default=())
    norm_stats: NormStats | None = None
    family: str = "mlp"
    warning: str | None = None

    @property
    def params(self):
        return list(self.weights) + list(self.biases)

    def logits(self, X):
        return _forward(self.weights, self.biases, self.activation, X)[0]

    def _proba(self, X):
        return sigmoid(self.logits(X))


def init_params(sizes, rng):
    """Glorot-uniform weights, zero biases."""
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return Ws, bs


def _forward(Ws, bs, activation, X):
    act = _ACT[activation][0]
    hs = [X]
    h = X
    for W, b in zip(Ws[:-1], bs[:-1]):
        h = act(h @ W + b)
        hs.append(h)
    z = (h @ Ws[-1] + bs[-1])[:, 0]
    return z, hs


def _objective(Ws, bs, activation, X, y, w, l2):
    z, _ = _forward(Ws, bs, activation, X)
    penalty = 0.5 * l2 * sum(float(np.sum(p * p)) for p in list(Ws) + list(bs))
    return float(np.sum(w * log_loss_terms(z, y)) / len(y)) + penalty


def loss_and_grad(Ws, bs, activation, X, y, w, l2):
    """Value and gradient of (1/n) sum w_i CE_i + (l2/2) |params|^2.

    ``w`` is used as given (no renormalization).
    """
    n = len(y)
    z, hs = _forward(Ws, bs, activation, X)
    data = float(np.sum(w * log_loss_terms(z, y)) / n)
    penalty = 0.5 * l2 * sum(float(np.sum(p * p)) for p in list(Ws) + list(bs))
    dact = _ACT[activation][1]
    delta = (w * (sigmoid(z) - y) / n)[:, None]
    gW = [None] * len(Ws)
    gb = [None] * len(bs)
    for k in range(len(Ws) - 1, -1, -1):
        gW[k] = hs[k].T @ delta + l2 * Ws[k]
        gb[k] = delta.sum(axis=0) + l2 * bs[k]
        if k:
            delta = (delta @ Ws[k].T) * dact(hs[k])
    return data + penalty, gW, gb


def mlp_loss_gradient(model: MLPModel, X, y, w=None):
    """Weighted objective and its gradient flattened in ``model.params`` order."""
    X = model._prepare(X)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=np.float64)
    loss, gW, gb = loss_and_grad(model.weights, model.biases, model.activation, X, y, w, model.l2)
    return loss, np.concatenate([g.ravel() for g in gW + gb])


def unflatten(model: MLPModel, flat) -> MLPModel:
    """Model with parameters replaced from a flat vector (``params`` order)."""
    out, pos = [], 0
    for p in model.params:
        out.append(np.asarray(flat[pos:pos + p.size]).reshape(p.shape))
        pos += p.size
    k = len(model.weights)
    return MLPModel(tuple(out[:k]), tuple(out[k:]), model.activation, model.n_features, model.l2)


def fit_mlp(X, y, w, p, seed) -> MLPModel:
    n, d = X.shape
    y = y.astype(np.float64)
    sizes = [d] + [int(h) for h in p["hidden"]] + [1]
    Ws, bs = init_params(sizes, child_rng(seed, "init"))
    shuffle_rng = child_rng(seed, "shuffle")
    lr, l2, act = p["learning_rate"], p["l2"], p["activation"]
    batch = min(int(p["batch_size"]), n)
    adam = p["optimizer"] == "adam"
    params = Ws + bs
    m = [np.zeros_like(q) for q in params]
    v = [np.zeros_like(q) for q in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    for _ in range(p["epochs"]):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            _, gW, gb = loss_and_grad(Ws, bs, act, X[rows], y[rows], w[rows], l2)
            grads = gW + gb
            step += 1
            for q, g, mq, vq in zip(params, grads, m, v):
                if adam:
                    mq *= b1
                    mq += (1 - b1) * g
                    vq *= b2
                    vq += (1 - b2) * g * g
                    mhat = mq / (1 - b1**step)
                    vhat = vq / (1 - b2**step)
                    q -= lr * mhat / (np.sqrt(vhat) + eps)
                else:
                    q -= lr * g
        loss = _objective(Ws, bs, act, X, y, w, l2)
        if not (np.isfinite(loss) and all(np.isfinite(q).all() for q in params)):
            raise NumericalError("MLP training loss became non-finite; lower the learning rate")
        history.append(loss)
    k = len(Ws)
    return MLPModel(tuple(params[:k]), tuple(params[k:]), act, d, l2, tuple(history))
