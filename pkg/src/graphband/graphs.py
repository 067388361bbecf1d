"""Feedback graphs over a finite action set.

Actions are indexed ``0..K-1`` throughout the package; action ``0`` is the
lowest bid on a :class:`BidGrid`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

#: Largest K accepted by :func:`independence_number` (exhaustive search).
MAX_BRUTE_FORCE_K = 25


@dataclass(frozen=True, eq=False)
class FeedbackGraph:
    """Realized directed graph; ``adj[i, j] == 1`` iff playing i reveals j."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
        if not np.all((adj == 0) | (adj == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        adj = adj.astype(np.int8)
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def k(self) -> int:
        return self.adj.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeedbackGraph):
            return NotImplemented
        return np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(self.adj.tobytes())

    @classmethod
    def identity(cls, k: int) -> "FeedbackGraph":
        return cls(np.eye(k, dtype=np.int8))

    @classmethod
    def complete(cls, k: int) -> "FeedbackGraph":
        return cls(np.ones((k, k), dtype=np.int8))

    def as_model(self) -> "GraphModel":
        return GraphModel(self.adj.astype(float))


@dataclass(frozen=True, eq=False)
class GraphModel:
    """Edge probabilities ``probs[i, j] = g(x, i, j)`` at a fixed context."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != probs.shape[1] or probs.shape[0] < 1:
            raise ValueError(f"probabilities must be a non-empty square matrix, got shape {probs.shape}")
        if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
            raise ValueError("edge probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def k(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def identity(cls, k: int) -> "GraphModel":
        return cls(np.eye(k))

    def covers_every_column(self) -> bool:
        """True when every action is observed with positive probability."""
        return bool(np.all(self.probs.sum(axis=0) > 0))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.probs, np.eye(self.k)))


@dataclass(frozen=True, eq=False)
class BidGrid:
    """Uniform bid grid ``{0, eps, ..., 1 - eps, 1}`` with ``K = 1/eps + 1`` bids."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not 0 < eps <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        n = round(1.0 / eps)
        if abs(n * eps - 1.0) > 1e-9:
            raise ValueError(f"1/epsilon must be an integer, got epsilon={eps}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def k(self) -> int:
        return round(1.0 / self.epsilon) + 1

    @cached_property
    def bids(self) -> np.ndarray:
        bids = np.arange(self.k) / (self.k - 1)
        bids.setflags(write=False)
        return bids

    def threshold_action(self, price: float) -> int:
        """Smallest action whose bid is at least ``price``."""
        return int(np.searchsorted(self.bids, price, side="left"))

    @cached_property
    def graph_stack(self) -> np.ndarray:
        """``stack[k]`` is the bidding graph induced by a competing price ``bids[k]``."""
        return np.stack([build_bidding_graph(self, w).adj for w in self.bids]).astype(float)


def build_bidding_graph(grid: BidGrid, w: float) -> FeedbackGraph:
    """First-price-auction feedback graph for competing price ``w``.

    A losing bid (below ``w``) reveals every other losing bid; a winning bid
    reveals every higher bid.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"competing price must lie in [0, 1], got {w}")
    a = grid.bids
    lose = a < w
    idx = np.arange(grid.k)
    adj = (lose[:, None] & lose[None, :]) | (~lose[:, None] & (idx[None, :] >= idx[:, None]))
    return FeedbackGraph(adj.astype(np.int8))


def observed_set(g: FeedbackGraph, played: int) -> set[int]:
    if not 0 <= played < g.k:
        raise IndexError(f"action {played} out of range for K={g.k}")
    return set(np.flatnonzero(g.adj[played]).tolist())


def is_strongly_observable(g: FeedbackGraph) -> bool:
    """Every node either has a self-loop or is observed by all other nodes."""
    adj = g.adj.astype(bool)
    self_loop = np.diag(adj)
    off = adj | np.eye(g.k, dtype=bool)
    observed_by_all = off.all(axis=0)
    return bool(np.all(self_loop | observed_by_all))


def independence_number(g: FeedbackGraph) -> int:
    """Size of the largest set of mutually non-adjacent nodes.

    Exhaustive branch-and-bound over subsets; self-loops are ignored.
    Intended as a test oracle for K up to :data:`MAX_BRUTE_FORCE_K`.
    """
    k = g.k
    if k > MAX_BRUTE_FORCE_K:
        raise ValueError(f"brute-force independence number limited to K <= {MAX_BRUTE_FORCE_K}, got {k}")
    sym = (g.adj.astype(bool) | g.adj.T.astype(bool)) & ~np.eye(k, dtype=bool)
    nbr = [sum(1 << int(j) for j in np.flatnonzero(sym[i])) for i in range(k)]

    best = 0

    def search(candidates: int, size: int):
        nonlocal best
        if size + candidates.bit_count() <= best:
            return
        if candidates == 0:
            best = size
            return
        v = candidates.bit_length() - 1
        rest = candidates & ~(1 << v)
        search(rest & ~nbr[v], size + 1)
        search(rest, size)

    search((1 << k) - 1, 0)
    return best


def sample_graph(model: GraphModel, rng: np.random.Generator) -> FeedbackGraph:
    """Draw each edge independently with its modeled probability."""
    return FeedbackGraph((rng.random(model.probs.shape) < model.probs).astype(np.int8))
