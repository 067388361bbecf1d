"""Central finite-difference checks for the oracle gradients."""
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from graphband.graphs import BidGrid
from graphband.oracles import (
    ActionLossNet,
    BiddingLossOracle,
    EdgeLogisticOracle,
    LinearLossOracle,
    PriceClassifierGraphOracle,
    TwoLayerValueNet,
)

FD_STEP = 1e-6


@dataclass
class Instance:
    oracle: Any
    model: Any
    objective: Callable[[], float]
    gradient: Callable[[], dict]
    update: Callable[[], None]


def _loss_batch(rng, k):
    idx = rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False)
    return [(int(j), float(rng.uniform())) for j in idx]


def _edge_batch(rng, k):
    n = int(rng.integers(1, k * k + 1))
    flat = rng.choice(k * k, size=n, replace=False)
    return [(int(e // k), int(e % k), float(rng.integers(2))) for e in flat]


def random_instance(kind: str, rng) -> Instance:
    dim = int(rng.integers(2, 6))
    x = rng.standard_normal(dim)
    if kind == "bidding":
        grid = BidGrid(1 / int(rng.integers(2, 10)))
        oracle = BiddingLossOracle(TwoLayerValueNet(dim, rng, hidden=8))
        w_hat = float(rng.uniform())
        obs = _loss_batch(rng, grid.k)
        return Instance(oracle, oracle.model,
                        lambda: oracle.objective(x, grid, w_hat, obs),
                        lambda: oracle.gradient(x, grid, w_hat, obs),
                        lambda: oracle.update(x, grid, w_hat, obs))
    if kind == "price":
        grid = BidGrid(1 / int(rng.integers(1, 8)))
        oracle = PriceClassifierGraphOracle(dim, grid)
        oracle.params["W"] = rng.standard_normal((grid.k, dim))
        oracle.params["c"] = rng.standard_normal(grid.k)
        edges = _edge_batch(rng, grid.k)
        return Instance(oracle, oracle, lambda: oracle.objective(x, edges),
                        lambda: oracle.gradient(x, edges), lambda: oracle.update(x, edges))
    k = int(rng.integers(2, 6))
    if kind == "action_net":
        oracle = ActionLossNet(dim, k, rng, hidden=8)
    elif kind == "linear":
        oracle = LinearLossOracle(dim, k)
        oracle.params["theta"] = 0.05 * rng.standard_normal((k, dim))
    elif kind == "edge_logistic":
        oracle = EdgeLogisticOracle(dim, k)
        oracle.params["Theta"] = rng.standard_normal((k, k, dim))
        oracle.params["c"] = rng.standard_normal((k, k))
        edges = _edge_batch(rng, k)
        return Instance(oracle, oracle, lambda: oracle.objective(x, edges),
                        lambda: oracle.gradient(x, edges), lambda: oracle.update(x, edges))
    else:
        raise ValueError(kind)
    obs = _loss_batch(rng, k)
    return Instance(oracle, oracle, lambda: oracle.objective(x, obs),
                    lambda: oracle.gradient(x, obs), lambda: oracle.update(x, obs))


def check_oracle_gradient(inst: Instance, h: float = FD_STEP) -> float:
    """Relative error ``|a - n| / max(|a|, |n|)`` between analytic and numeric gradients."""
    model = inst.model
    grads = inst.gradient()
    analytic = np.concatenate([np.ravel(grads[k]) for k in sorted(model.params)])
    theta = model.flat_params()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] += h
        model.set_flat_params(bumped)
        up = inst.objective()
        bumped[i] -= 2 * h
        model.set_flat_params(bumped)
        down = inst.objective()
        numeric[i] = (up - down) / (2 * h)
    model.set_flat_params(theta)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)
