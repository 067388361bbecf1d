"""Online regression oracles for losses (squared loss) and graphs (log loss).

All models are trained by plain online gradient descent.  Every model keeps
its parameters in a ``params`` dict of float arrays so that analytic
gradients can be compared against finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graphs import BidGrid, GraphModel

#: Probabilities are clamped to ``[PROB_CLAMP, 1 - PROB_CLAMP]`` before log loss.
PROB_CLAMP = 1e-9

DEFAULT_LOSS_LR = 0.01
DEFAULT_GRAPH_LR = 0.05
HIDDEN_SIZE = 32


def log_loss(u, v):
    """Binary cross-entropy of prediction ``u`` against target ``v``."""
    u = np.clip(u, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(v * np.log(u) + (1.0 - v) * np.log1p(-u))


def triangular_discrimination(u, w):
    """``(u - w)^2 / (u + w)``, defined as 0 when both arguments are 0."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    s = u + w
    out = np.divide((u - w) ** 2, s, out=np.zeros(np.broadcast(u, w).shape), where=s > 0)
    return out if out.ndim else float(out)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class _Model:
    params: dict

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.params[k]) for k in sorted(self.params)])

    def set_flat_params(self, flat: np.ndarray):
        pos = 0
        for k in sorted(self.params):
            n = np.size(self.params[k])
            self.params[k] = np.asarray(flat[pos:pos + n], dtype=float).reshape(np.shape(self.params[k]))
            pos += n

    def _step(self, grads: dict, lr: float):
        for k, g in grads.items():
            self.params[k] = self.params[k] - lr * g


# --------------------------------------------------------------------------
# value models (scalar regression x -> v)


class LinearValueModel(_Model):
    """``v = theta . x`` with no bias or squashing; used as a hand-checkable probe."""

    def __init__(self, dim: int, theta=None):
        self.dim = dim
        self.params = {"theta": np.zeros(dim) if theta is None else np.array(theta, dtype=float)}

    def forward(self, x):
        return float(self.params["theta"] @ x), None

    def backward(self, x, cache, dv):
        return {"theta": dv * np.asarray(x, dtype=float)}


class TwoLayerValueNet(_Model):
    """``v = sigmoid(w2 . relu(W1 x + b1) + b2)``, hidden width 32 by default."""

    def __init__(self, dim: int, rng: np.random.Generator, hidden: int = HIDDEN_SIZE):
        self.dim = dim
        self.hidden = hidden
        self.params = {
            "W1": _uniform_init(rng, dim, (hidden, dim)),
            "b1": _uniform_init(rng, dim, hidden),
            "w2": _uniform_init(rng, hidden, hidden),
            "b2": _uniform_init(rng, hidden, ()),
        }

    def forward(self, x):
        p = self.params
        pre = p["W1"] @ x + p["b1"]
        h = np.maximum(pre, 0.0)
        v = float(_sigmoid(p["w2"] @ h + p["b2"]))
        return v, (pre, h, v)

    def backward(self, x, cache, dv):
        pre, h, v = cache
        p = self.params
        dz = dv * v * (1.0 - v)
        dh = dz * p["w2"] * (pre > 0)
        return {"W1": np.outer(dh, x), "b1": dh, "w2": dz * h, "b2": np.asarray(dz)}


def bidding_losses(bids: np.ndarray, price: float, value: float) -> np.ndarray:
    """Per-bid loss ``0.5 * (1 - 1[a >= price] * (value - a))`` clamped to [0, 1]."""
    win = bids >= price
    return np.clip(0.5 * (1.0 - win * (value - bids)), 0.0, 1.0)


# --------------------------------------------------------------------------
# loss oracle for the bidding application


class BiddingLossOracle:
    """Loss predictor built from a value model and a predicted competing price."""

    def __init__(self, model, lr: float = DEFAULT_LOSS_LR):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.model = model
        self.lr = lr
        self.n_updates = 0

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.model.dim,):
            raise ValueError(f"context dimension {x.shape} does not match model dimension {self.model.dim}")
        return x

    def predict_value(self, x) -> float:
        return self.model.forward(self._check(x))[0]

    def predict(self, x, grid: BidGrid, w_hat: float) -> np.ndarray:
        return bidding_losses(grid.bids, w_hat, self.predict_value(x))

    def objective(self, x, grid: BidGrid, w_hat: float, observations) -> float:
        f = self.predict(x, grid, w_hat)
        idx, target = _split_losses(observations)
        return float(np.mean((f[idx] - target) ** 2))

    def gradient(self, x, grid: BidGrid, w_hat: float, observations) -> dict:
        x = self._check(x)
        v, cache = self.model.forward(x)
        idx, target = _split_losses(observations)
        a = grid.bids[idx]
        win = (a >= w_hat).astype(float)
        raw = 0.5 * (1.0 - win * (v - a))
        # derivative through the clamp is zero outside [0, 1]
        active = (raw >= 0.0) & (raw <= 1.0)
        f = np.clip(raw, 0.0, 1.0)
        dv = float(np.mean(2.0 * (f - target) * (-0.5 * win) * active))
        return self.model.backward(x, cache, dv)

    def update(self, x, grid: BidGrid, w_hat: float, observations) -> None:
        """One gradient step on the mean squared loss; empty batches are no-ops."""
        if len(observations) == 0:
            return
        self.model._step(self.gradient(x, grid, w_hat, observations), self.lr)
        self.n_updates += 1


def _split_losses(observations):
    idx = np.fromiter((j for j, _ in observations), dtype=int, count=len(observations))
    target = np.fromiter((c for _, c in observations), dtype=float, count=len(observations))
    return idx, target


# --------------------------------------------------------------------------
# graph oracle for the bidding application


class PriceClassifierGraphOracle(_Model):
    """Linear softmax classifier over the bid grid for the competing price.

    The predicted graph is the bidding graph induced by a price sampled from
    the classifier; training uses the log loss of the expected graph.
    """

    def __init__(self, dim: int, grid: BidGrid, lr: float = DEFAULT_GRAPH_LR):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.dim = dim
        self.grid = grid
        self.lr = lr
        self.n_updates = 0
        self.params = {"W": np.zeros((grid.k, dim)), "c": np.zeros(grid.k)}

    def price_distribution(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context dimension {x.shape} does not match model dimension {self.dim}")
        return _softmax(self.params["W"] @ x + self.params["c"])

    def expected_graph(self, x) -> np.ndarray:
        return np.tensordot(self.price_distribution(x), self.grid.graph_stack, axes=1)

    def predict(self, x, rng: np.random.Generator):
        """Return ``(price distribution, sampled bin index, GraphModel)``."""
        pw = self.price_distribution(x)
        k = int(rng.choice(self.grid.k, p=pw))
        return pw, k, GraphModel(self.grid.graph_stack[k])

    def objective(self, x, edges) -> float:
        g = self.expected_graph(x)
        i, j, b = _split_edges(edges)
        return float(np.sum(log_loss(g[i, j], b)) / self.grid.k)

    def gradient(self, x, edges) -> dict:
        x = np.asarray(x, dtype=float)
        pw = self.price_distribution(x)
        stack = self.grid.graph_stack
        i, j, b = _split_edges(edges)
        cols = stack[:, i, j]                      # (bins, n_edges)
        g = pw @ cols
        gc = np.clip(g, PROB_CLAMP, 1.0 - PROB_CLAMP)
        # flat where the clamp is active
        inside = (g >= PROB_CLAMP) & (g <= 1.0 - PROB_CLAMP)
        dg = inside * (-b / gc + (1.0 - b) / (1.0 - gc)) / self.grid.k
        # d g_e / d z_k = p_k (G_k[e] - g_e)
        dz = pw * ((cols - g) @ dg)
        return {"W": np.outer(dz, x), "c": dz}

    def update(self, x, edges) -> None:
        if len(edges) == 0:
            return
        self._step(self.gradient(x, edges), self.lr)
        self.n_updates += 1


def _split_edges(edges):
    arr = np.asarray(edges, dtype=float).reshape(-1, 3)
    return arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2]


# --------------------------------------------------------------------------
# oracles for generic (non-bidding) environments


class ActionLossNet(_Model):
    """Two-layer network with one sigmoid output per action, ``f(x, i)``.

    Knows nothing about graph structure; trained on whatever (action, loss)
    pairs it is given.
    """

    def __init__(self, dim: int, k: int, rng: np.random.Generator, lr: float = DEFAULT_LOSS_LR,
                 hidden: int = HIDDEN_SIZE):
        self.dim = dim
        self.k = k
        self.lr = lr
        self.n_updates = 0
        self.params = {
            "W1": _uniform_init(rng, dim, (hidden, dim)),
            "b1": _uniform_init(rng, dim, hidden),
            "W2": _uniform_init(rng, hidden, (k, hidden)),
            "b2": _uniform_init(rng, hidden, k),
        }

    def _forward(self, x):
        p = self.params
        pre = p["W1"] @ x + p["b1"]
        h = np.maximum(pre, 0.0)
        return _sigmoid(p["W2"] @ h + p["b2"]), pre, h

    def predict(self, x) -> np.ndarray:
        return self._forward(np.asarray(x, dtype=float))[0]

    def objective(self, x, observations) -> float:
        f = self.predict(x)
        idx, target = _split_losses(observations)
        return float(np.mean((f[idx] - target) ** 2))

    def gradient(self, x, observations) -> dict:
        x = np.asarray(x, dtype=float)
        f, pre, h = self._forward(x)
        idx, target = _split_losses(observations)
        df = np.zeros(self.k)
        np.add.at(df, idx, 2.0 * (f[idx] - target) / len(idx))
        dz = df * f * (1.0 - f)
        dh = (self.params["W2"].T @ dz) * (pre > 0)
        return {"W1": np.outer(dh, x), "b1": dh, "W2": np.outer(dz, h), "b2": dz}

    def update(self, x, observations) -> None:
        if len(observations) == 0:
            return
        self._step(self.gradient(x, observations), self.lr)
        self.n_updates += 1


class LinearLossOracle(_Model):
    """Per-action linear regression ``f(x, i) = clip(theta_i . x + c_i, 0, 1)``."""

    def __init__(self, dim: int, k: int, lr: float = DEFAULT_LOSS_LR, init: float = 0.5):
        self.dim = dim
        self.k = k
        self.lr = lr
        self.n_updates = 0
        self.params = {"theta": np.zeros((k, dim)), "c": np.full(k, init)}

    def _raw(self, x):
        return self.params["theta"] @ x + self.params["c"]

    def predict(self, x) -> np.ndarray:
        return np.clip(self._raw(np.asarray(x, dtype=float)), 0.0, 1.0)

    def objective(self, x, observations) -> float:
        f = self.predict(x)
        idx, target = _split_losses(observations)
        return float(np.mean((f[idx] - target) ** 2))

    def gradient(self, x, observations) -> dict:
        x = np.asarray(x, dtype=float)
        raw = self._raw(x)
        f = np.clip(raw, 0.0, 1.0)
        idx, target = _split_losses(observations)
        dr = np.zeros(self.k)
        active = (raw[idx] >= 0.0) & (raw[idx] <= 1.0)
        np.add.at(dr, idx, 2.0 * (f[idx] - target) * active / len(idx))
        return {"theta": np.outer(dr, x), "c": dr}

    def update(self, x, observations) -> None:
        if len(observations) == 0:
            return
        self._step(self.gradient(x, observations), self.lr)
        self.n_updates += 1


class EdgeLogisticOracle(_Model):
    """Independent logistic regression per edge, ``g(x, i, j) = sigmoid(Theta_ij . x + c_ij)``."""

    def __init__(self, dim: int, k: int, lr: float = DEFAULT_GRAPH_LR):
        self.dim = dim
        self.k = k
        self.lr = lr
        self.n_updates = 0
        self.params = {"Theta": np.zeros((k, k, dim)), "c": np.zeros((k, k))}

    def expected_graph(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _sigmoid(self.params["Theta"] @ x + self.params["c"])

    def predict(self, x) -> GraphModel:
        return GraphModel(self.expected_graph(x))

    def objective(self, x, edges) -> float:
        g = self.expected_graph(x)
        i, j, b = _split_edges(edges)
        return float(np.sum(log_loss(g[i, j], b)) / self.k)

    def gradient(self, x, edges) -> dict:
        x = np.asarray(x, dtype=float)
        g = self.expected_graph(x)
        i, j, b = _split_edges(edges)
        dz = np.zeros((self.k, self.k))
        # sigmoid + cross-entropy; exact away from the probability clamp
        np.add.at(dz, (i, j), (g[i, j] - b) / self.k)
        return {"Theta": dz[:, :, None] * x, "c": dz}

    def update(self, x, edges) -> None:
        if len(edges) == 0:
            return
        self._step(self.gradient(x, edges), self.lr)
        self.n_updates += 1


# --------------------------------------------------------------------------
# regret accounting


@dataclass
class RegretLedger:
    """Running totals for learner regret and oracle excess losses.

    Oracle excess is measured against the ground-truth functions, which bound
    the class-infimum comparator from above under realizability.
    """

    rounds: int = 0
    cum_regret: float = 0.0
    sq_excess: float = 0.0
    log_excess: float = 0.0
    increments: list = field(default_factory=list)

    def update(self, f_star: Sequence[float], played: int, sq_excess: float = 0.0,
               log_excess: float = 0.0) -> float:
        f_star = np.asarray(f_star, dtype=float)
        inc = float(f_star[played] - f_star.min())
        self.rounds += 1
        self.cum_regret += inc
        self.sq_excess += sq_excess
        self.log_excess += log_excess
        self.increments.append(inc)
        return inc

    @property
    def normalized_regret(self) -> float:
        return self.cum_regret / self.rounds if self.rounds else 0.0


def squared_excess(f_pred, f_star, losses, observed) -> float:
    """Squared-loss excess of the predictor over the ground truth on observed actions."""
    idx = np.asarray(sorted(observed), dtype=int)
    if idx.size == 0:
        return 0.0
    losses = np.asarray(losses, dtype=float)
    return float(np.sum((np.asarray(f_pred)[idx] - losses[idx]) ** 2)
                 - np.sum((np.asarray(f_star)[idx] - losses[idx]) ** 2))


def log_excess(g_pred, g_star, edges) -> float:
    """Log-loss excess of the graph predictor over the ground truth on an edge batch."""
    if len(edges) == 0:
        return 0.0
    i, j, b = _split_edges(edges)
    g_pred = np.asarray(g_pred)
    g_star = np.asarray(g_star)
    return float(np.sum(log_loss(g_pred[i, j], b) - log_loss(g_star[i, j], b)))
