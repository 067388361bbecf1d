"""Learners for contextual bandits with feedback graphs, and the round loop that drives them.

A learner is an oracle bundle (loss and graph predictors) plus a policy that
turns predictions into an action distribution.  :func:`run` plays a learner
against an environment and keeps the regret ledger.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dec import (
    CLAMPED,
    RELAXED,
    DecProblem,
    ZeroObservationWeight,
    closed_form_bidding_policy,
    dec_value,
    minimize_dec,
)
from .graphs import GraphModel
from .oracles import (
    DEFAULT_GRAPH_LR,
    DEFAULT_LOSS_LR,
    ActionLossNet,
    BiddingLossOracle,
    EdgeLogisticOracle,
    LinearLossOracle,
    PriceClassifierGraphOracle,
    RegretLedger,
    TwoLayerValueNet,
    log_excess,
    squared_excess,
)

SQUARECB_UG = "squarecb_ug"
SQUARECB_UG_DOUBLING = "squarecb_ug_pf"
SQUARECB = "squarecb"
GREEDY = "greedy"
TRIVIAL = "trivial"
ALGORITHMS = (SQUARECB_UG, SQUARECB_UG_DOUBLING, SQUARECB, GREEDY, TRIVIAL)

PARTIAL, FULL = "partial", "full"
CLOSED_FORM, DEC_SOLVER = "closed_form_bidding", "dec_solver"

MIN_GAMMA = 4.0


def ug_gamma(scale: float, T: int) -> float:
    return max(MIN_GAMMA, scale * math.sqrt(T))


def squarecb_gamma(scale: float, k: int, T: int) -> float:
    return max(MIN_GAMMA, scale * math.sqrt(k * T))


@dataclass
class Prediction:
    f: np.ndarray
    g: GraphModel
    w_hat: float | None = None
    b: int | None = None
    expected_graph: np.ndarray | None = None


# --------------------------------------------------------------------------
# oracle bundles


class BiddingOracles:
    """Value network for losses and a price classifier for graphs."""

    uses_graph = True

    def __init__(self, dim, grid, rng, loss_lr=DEFAULT_LOSS_LR, graph_lr=DEFAULT_GRAPH_LR):
        self.grid = grid
        self.loss = BiddingLossOracle(TwoLayerValueNet(dim, rng), lr=loss_lr)
        self.graph = PriceClassifierGraphOracle(dim, grid, lr=graph_lr)

    def predict(self, x, rng_w) -> Prediction:
        pw, b, g = self.graph.predict(x, rng_w)
        w_hat = float(self.grid.bids[b])
        f = self.loss.predict(x, self.grid, w_hat)
        return Prediction(f, g, w_hat, b, np.tensordot(pw, self.grid.graph_stack, axes=1))

    def learn(self, x, played, obs, loss_batch, edge_batch):
        # the outcome of the played bid fixes which observed bids won
        price = self.grid.bids[played] if obs.won else math.inf
        self.loss.update(x, self.grid, price, loss_batch)
        self.graph.update(x, edge_batch)


class GenericOracles:
    """Per-action linear losses and per-edge logistic graph probabilities."""

    uses_graph = True

    def __init__(self, dim, k, rng, loss_lr=DEFAULT_LOSS_LR, graph_lr=DEFAULT_GRAPH_LR):
        self.loss = LinearLossOracle(dim, k, lr=loss_lr)
        self.graph = EdgeLogisticOracle(dim, k, lr=graph_lr)

    def predict(self, x, rng_w) -> Prediction:
        g = self.graph.expected_graph(x)
        return Prediction(self.loss.predict(x), GraphModel(g), expected_graph=g)

    def learn(self, x, played, obs, loss_batch, edge_batch):
        self.loss.update(x, loss_batch)
        self.graph.update(x, edge_batch)


class BanditOracles:
    """Loss-only predictor trained on the played action; assumes the identity graph."""

    uses_graph = False

    def __init__(self, dim, k, rng, loss_lr=DEFAULT_LOSS_LR, graph_lr=None, net=True):
        self.k = k
        self.loss = ActionLossNet(dim, k, rng, lr=loss_lr) if net else LinearLossOracle(dim, k, lr=loss_lr)
        self._identity = GraphModel.identity(k)

    def predict(self, x, rng_w) -> Prediction:
        return Prediction(self.loss.predict(x), self._identity)

    def learn(self, x, played, obs, loss_batch, edge_batch):
        self.loss.update(x, [(j, c) for j, c in loss_batch if j == played])


# --------------------------------------------------------------------------
# learner


@dataclass
class LearnerConfig:
    algorithm: str = SQUARECB_UG
    gamma_scale: float = 1.0
    horizon: int = 1000
    feedback_mode: str = PARTIAL
    policy_mode: str = CLOSED_FORM
    dec_mode: str | None = None
    reg_bound: float | None = None
    loss_lr: float = DEFAULT_LOSS_LR
    graph_lr: float = DEFAULT_GRAPH_LR

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.feedback_mode not in (PARTIAL, FULL):
            raise ValueError(f"feedback_mode must be {PARTIAL!r} or {FULL!r}")
        if self.policy_mode not in (CLOSED_FORM, DEC_SOLVER):
            raise ValueError(f"policy_mode must be {CLOSED_FORM!r} or {DEC_SOLVER!r}")
        if self.dec_mode is None:
            self.dec_mode = RELAXED if self.feedback_mode == PARTIAL else CLAMPED
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.gamma_scale <= 0:
            raise ValueError("gamma_scale must be positive")
        if self.reg_bound is None:
            self.reg_bound = math.sqrt(self.horizon)

    @property
    def doubling(self) -> bool:
        return self.algorithm == SQUARECB_UG_DOUBLING


@dataclass
class Decision:
    action: int
    p: np.ndarray
    dec: float
    prediction: Prediction | None


@dataclass
class RoundTranscript:
    t: int
    action: int
    bid: float | None
    p: np.ndarray
    observed: tuple
    regret: float
    dec: float
    epoch: int
    gamma: float
    loss_batch: int
    edge_batch: int


def _sample(p, rng) -> int:
    i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(i, p.size - 1)


class Learner:
    """One algorithm instance: oracle bundle, policy, and learning-rate parameter."""

    def __init__(self, config: LearnerConfig, env, seed: int):
        self.config = config
        self.k = env.k
        self.dim = env.dim
        self.grid = getattr(env, "grid", None)
        init_seq, w_seq, a_seq = np.random.SeedSequence(seed).spawn(3)
        self._init_seq = init_seq
        self.rng_w = np.random.default_rng(w_seq)
        self.rng_a = np.random.default_rng(a_seq)
        if config.policy_mode == CLOSED_FORM and self.grid is None and config.algorithm in (
                SQUARECB_UG, SQUARECB_UG_DOUBLING):
            raise ValueError("closed-form policy needs a bidding environment; use policy_mode='dec_solver'")
        self.epoch = 0
        self.gamma = self._initial_gamma()
        self._epoch_dec = 0.0
        self.oracles = self._build_oracles()

    def _initial_gamma(self) -> float:
        c, T = self.config.gamma_scale, self.config.horizon
        if self.config.doubling:
            return max(MIN_GAMMA, math.sqrt(T / self.config.reg_bound))
        if self.config.algorithm == SQUARECB:
            return squarecb_gamma(c, self.k, T)
        return ug_gamma(c, T)

    def _build_oracles(self):
        algo = self.config.algorithm
        if algo == TRIVIAL:
            return None
        rng = np.random.default_rng(self._init_seq)
        lr = dict(loss_lr=self.config.loss_lr, graph_lr=self.config.graph_lr)
        if algo == SQUARECB:
            return BanditOracles(self.dim, self.k, rng, net=self.grid is not None, **lr)
        if self.grid is not None:
            return BiddingOracles(self.dim, self.grid, rng, **lr)
        return GenericOracles(self.dim, self.k, rng, **lr)

    def act(self, x) -> Decision:
        algo = self.config.algorithm
        if algo == TRIVIAL:
            p = np.zeros(self.k)
            p[0] = 1.0
            return Decision(0, p, math.nan, None)
        pred = self.oracles.predict(x, self.rng_w)
        if algo == GREEDY:
            i = int(np.argmin(pred.f))
            p = np.zeros(self.k)
            p[i] = 1.0
            return Decision(i, p, math.nan, pred)
        if algo == SQUARECB or self.config.policy_mode == DEC_SOLVER:
            mode = RELAXED if algo == SQUARECB else self.config.dec_mode
            sol = minimize_dec(DecProblem(pred.f, pred.g, self.gamma, mode))
            p, dec = sol.p, sol.value
        else:
            p = closed_form_bidding_policy(pred.f[pred.b], pred.b, self.gamma, self.k)
            try:
                dec = dec_value(DecProblem(pred.f, pred.g, self.gamma, self.config.dec_mode), p)
            except ZeroObservationWeight:
                dec = math.inf
        return Decision(_sample(p, self.rng_a), p, dec, pred)

    def learn(self, x, decision: Decision, obs) -> tuple[list, list]:
        """Update the oracles; returns the loss and edge batches that were used."""
        loss_batch = sorted(obs.losses.items())
        if self.oracles is None:
            return loss_batch, []
        if self.config.feedback_mode == FULL and obs.graph is not None:
            adj = obs.graph
            edge_batch = [(i, j, float(adj[i, j])) for i in range(self.k) for j in range(self.k)]
        else:
            i = decision.action
            edge_batch = [(i, j, 1.0 if j in obs.losses else 0.0) for j in range(self.k)]
        if not self.oracles.uses_graph:
            edge_batch = []
        self.oracles.learn(x, decision.action, obs, loss_batch, edge_batch)
        return loss_batch, edge_batch

    def end_round(self, decision: Decision) -> bool:
        """Doubling controller: restart with doubled gamma when the epoch DEC budget is spent."""
        if not self.config.doubling:
            return False
        self._epoch_dec += decision.dec
        if self._epoch_dec > self.gamma * self.config.reg_bound:
            self.restart()
            return True
        return False

    def restart(self):
        self.gamma *= 2.0
        self.epoch += 1
        self._epoch_dec = 0.0
        self.oracles = self._build_oracles()


@dataclass
class RunResult:
    transcripts: list
    ledger: RegretLedger
    restarts: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum([tr.regret for tr in self.transcripts])


def run(learner: Learner, env, T: int | None = None, feedback_full: bool | None = None) -> RunResult:
    """Play ``learner`` for ``T`` rounds (default: the whole environment)."""
    T = len(env) if T is None else T
    if T > len(env):
        raise ValueError(f"requested {T} rounds but the environment has {len(env)}")
    full = learner.config.feedback_mode == FULL if feedback_full is None else feedback_full
    ledger = RegretLedger()
    transcripts, restarts = [], []
    start = time.perf_counter()
    for t in range(T):
        real = env.realize(t)
        decision = learner.act(real.x)
        i = decision.action
        obs = env.reveal(real, i, full=full)
        epoch, gamma = learner.epoch, learner.gamma
        loss_batch, edge_batch = learner.learn(real.x, decision, obs)
        sq = lg = 0.0
        pred = decision.prediction
        if pred is not None:
            sq = squared_excess(pred.f, real.f_star, real.losses, obs.losses.keys())
            if pred.expected_graph is not None:
                lg = log_excess(pred.expected_graph, real.g_star, edge_batch)
        inc = ledger.update(real.f_star, i, sq, lg)
        grid = getattr(env, "grid", None)
        transcripts.append(RoundTranscript(
            t=t, action=i, bid=None if grid is None else float(grid.bids[i]), p=decision.p,
            observed=tuple(sorted(obs.losses)), regret=inc, dec=decision.dec, epoch=epoch,
            gamma=gamma, loss_batch=len(loss_batch), edge_batch=len(edge_batch)))
        if learner.end_round(decision):
            restarts.append(t + 1)
    return RunResult(transcripts, ledger, restarts, time.perf_counter() - start)
