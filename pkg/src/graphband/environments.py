"""Ground-truth environments: first-price auctions and generic stochastic graphs."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .graphs import (
    BidGrid,
    FeedbackGraph,
    GraphModel,
    build_bidding_graph,
    is_strongly_observable,
    sample_graph,
)
from .oracles import bidding_losses

log = logging.getLogger(__name__)

SYNTHETIC_DIM = 32
POOR_DIVERSE_COORDS = 8
NOISE_SD = 0.05
VALUE_SCALE = 40.0
DIVERSE, POOR = "diverse", "poor"


@dataclass(frozen=True)
class AuctionRound:
    x: np.ndarray
    w: float
    v: float


@dataclass
class AuctionDataset:
    rounds: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rounds)

    def __iter__(self):
        return iter(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    @property
    def dim(self) -> int:
        return self.rounds[0].x.size

    def write_metadata(self, path) -> None:
        Path(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")


def _minmax(a):
    lo, hi = float(a.min()), float(a.max())
    span = hi - lo
    if span == 0:
        return np.zeros_like(a), lo, hi
    return (a - lo) / span, lo, hi


JOINT, SEPARATE = "joint", "separate"


def generate_synthetic(mode: str, T: int, seed: int, dim: int = SYNTHETIC_DIM,
                       normalization: str = JOINT) -> AuctionDataset:
    """Synthetic first-price-auction stream with linear competing price.

    ``w = theta1 . x / sqrt(d) + noise`` and
    ``v = w + max(40 theta2 . x / sqrt(d), 0)``; prices and values are then
    mapped to [0, 1] by one shared min-max map over the whole dataset, which
    keeps ``v >= w`` after normalization.  ``normalization="separate"``
    instead maps prices and values to [0, 1] independently.  In ``poor``
    mode only the first 8 context coordinates are random, the rest are 1.
    """
    if mode not in (DIVERSE, POOR):
        raise ValueError(f"mode must be {DIVERSE!r} or {POOR!r}, got {mode!r}")
    if T < 1:
        raise ValueError("T must be positive")
    if mode == POOR and dim <= POOR_DIVERSE_COORDS:
        raise ValueError(f"poor mode needs dim > {POOR_DIVERSE_COORDS}, got {dim}")
    if normalization not in (JOINT, SEPARATE):
        raise ValueError(f"normalization must be {JOINT!r} or {SEPARATE!r}, got {normalization!r}")
    rng = np.random.default_rng(seed)
    theta1 = rng.standard_normal(dim)
    theta2 = rng.standard_normal(dim)
    if mode == DIVERSE:
        x = rng.standard_normal((T, dim))
    else:
        x = np.ones((T, dim))
        x[:, :POOR_DIVERSE_COORDS] = rng.standard_normal((T, POOR_DIVERSE_COORDS))
    noise = rng.normal(0.0, NOISE_SD, size=T)
    w_raw = x @ theta1 / np.sqrt(dim) + noise
    v_raw = w_raw + np.maximum(VALUE_SCALE * (x @ theta2) / np.sqrt(dim), 0.0)
    if normalization == JOINT:
        both, lo, hi = _minmax(np.concatenate([w_raw, v_raw]))
        w, v = both[:T], both[T:]
        constants = {"shared": [lo, hi]}
    else:
        w, w_lo, w_hi = _minmax(w_raw)
        v, v_lo, v_hi = _minmax(v_raw)
        constants = {"w": [w_lo, w_hi], "v": [v_lo, v_hi]}
    rounds = [AuctionRound(x[t].copy(), float(w[t]), float(v[t])) for t in range(T)]
    meta = {
        "source": "synthetic", "mode": mode, "seed": seed, "rows": T, "dim": dim,
        "normalization": normalization, "constants": constants,
    }
    return AuctionDataset(rounds, meta)


PRICE_WINDOW = (100.0, 300.0)
MAX_ROWS = 5000


def load_auction_csv(path, max_rows: int = MAX_ROWS, price_window=PRICE_WINDOW, seed: int = 0) -> AuctionDataset:
    """Load auction rows ``f0..f{d-1}, winning_price, competing_price``.

    Rows whose winning price falls outside ``price_window`` are dropped, a
    seeded random subset of at most ``max_rows`` is kept (in shuffled
    order), and values and competing prices are mapped to [0, 1] by one
    shared affine map.  Malformed rows are logged with their line number
    and skipped.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
        feat_cols.sort(key=lambda i: int(header[i][1:]))
        try:
            vi = header.index("winning_price")
            wi = header.index("competing_price")
        except ValueError:
            raise ValueError(f"{path}: header must contain winning_price and competing_price") from None
        if not feat_cols:
            raise ValueError(f"{path}: no feature columns f0..fN in header")
        xs, vs, ws = [], [], []
        skipped = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                x = np.array([float(row[i]) for i in feat_cols])
                v = float(row[vi])
                w = float(row[wi])
                if not (np.all(np.isfinite(x)) and np.isfinite(v) and np.isfinite(w)):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                log.warning("%s:%d: skipping malformed row (%s)", path, line_no, exc)
                skipped += 1
                continue
            if price_window[0] <= v <= price_window[1]:
                xs.append(x)
                vs.append(v)
                ws.append(w)
    if not xs:
        raise ValueError(f"{path}: no rows left after filtering winning price to {list(price_window)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(xs))[:max_rows]
    x = np.stack(xs)[order]
    v_raw = np.asarray(vs)[order]
    w_raw = np.asarray(ws)[order]
    lo = float(min(v_raw.min(), w_raw.min()))
    hi = float(max(v_raw.max(), w_raw.max()))
    span = hi - lo if hi > lo else 1.0
    v = np.clip((v_raw - lo) / span, 0.0, 1.0)
    w = np.clip((w_raw - lo) / span, 0.0, 1.0)
    rounds = [AuctionRound(x[t], float(w[t]), float(v[t])) for t in range(len(order))]
    meta = {
        "source": str(path), "seed": seed, "rows": len(rounds), "dim": x.shape[1],
        "skipped_rows": skipped, "price_window": list(price_window),
        "normalization": JOINT, "constants": {"shared": [lo, hi]},
    }
    return AuctionDataset(rounds, meta)


def realize_round(r: AuctionRound, grid: BidGrid):
    """Loss vector and feedback graph of one auction on the bid grid."""
    return bidding_losses(grid.bids, r.w, r.v), build_bidding_graph(grid, r.w)


# --------------------------------------------------------------------------
# environment streams consumed by the learners


@dataclass
class Observation:
    """What the learner sees after playing: revealed losses, optionally the whole graph."""

    losses: dict
    graph: np.ndarray | None = None
    won: bool | None = None


@dataclass
class Realized:
    x: np.ndarray
    losses: np.ndarray
    graph: FeedbackGraph
    f_star: np.ndarray
    g_star: np.ndarray
    price: float | None = None


class BiddingEnvironment:
    """Replays an auction dataset on a bid grid.

    Losses are deterministic given ``(w, v)``, so the ground-truth mean loss
    and mean graph equal the realized ones.
    """

    def __init__(self, dataset: AuctionDataset, grid: BidGrid):
        self.dataset = dataset
        self.grid = grid

    @property
    def k(self) -> int:
        return self.grid.k

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def __len__(self):
        return len(self.dataset)

    def realize(self, t: int) -> Realized:
        r = self.dataset[t]
        losses, graph = realize_round(r, self.grid)
        return Realized(r.x, losses, graph, losses, graph.adj.astype(float), r.w)

    def reveal(self, real: Realized, played: int, full: bool = False) -> Observation:
        row = real.graph.adj[played]
        revealed = {int(j): float(real.losses[j]) for j in np.flatnonzero(row)}
        won = bool(self.grid.bids[played] >= real.price)
        return Observation(revealed, real.graph.adj.copy() if full else None, won)


class GenericGraphEnvironment:
    """Realizable stochastic environment from ground-truth loss and graph functions.

    Contexts are standard normal.  Losses are Bernoulli with mean ``f_star(x)``
    (or ``f_star(x)`` plus clipped Gaussian noise) and every edge is an
    independent Bernoulli draw with mean ``g_star(x)``.
    """

    def __init__(self, f_star: Callable, g_star: Callable, T: int, seed: int, dim: int, k: int,
                 noise: str = "bernoulli", noise_sd: float = 0.1):
        if noise not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown noise model {noise!r}")
        self.f_star = f_star
        self.g_star = g_star
        self.T = T
        self.dim = dim
        self.k = k
        self.grid = None
        self.noise = noise
        self.noise_sd = noise_sd
        rng = np.random.default_rng(seed)
        self._contexts = rng.standard_normal((T, dim))
        self._seeds = np.random.SeedSequence(seed).spawn(T)

    def __len__(self):
        return self.T

    def realize(self, t: int) -> Realized:
        x = self._contexts[t]
        rng = np.random.default_rng(self._seeds[t])
        f = np.asarray(self.f_star(x), dtype=float)
        g = GraphModel(self.g_star(x))
        sure = FeedbackGraph((g.probs == 1).astype(np.int8))
        if not is_strongly_observable(sure):
            raise ValueError(f"round {t}: mean graph does not guarantee strong observability")
        if self.noise == "bernoulli":
            losses = (rng.random(self.k) < f).astype(float)
        else:
            losses = np.clip(f + rng.normal(0.0, self.noise_sd, self.k), 0.0, 1.0)
        graph = sample_graph(g, rng)
        return Realized(x, losses, graph, f, g.probs)

    def reveal(self, real: Realized, played: int, full: bool = False) -> Observation:
        row = real.graph.adj[played]
        revealed = {int(j): float(real.losses[j]) for j in np.flatnonzero(row)}
        return Observation(revealed, real.graph.adj.copy() if full else None, None)
