"""Decision-Estimation Coefficient (DEC) evaluation and minimization.

For an action distribution ``p``, loss predictions ``f`` and edge
probabilities ``g``, the DEC is

    sup_{i*, v}  sum_i p_i v_i - v_{i*} - gamma/4 * sum_i p_i sum_j g_ij (f_j - v_j)^2

with ``v`` ranging over ``[0, 1]^K`` ("clamped") or all of ``R^K``
("relaxed").  Writing ``W_j = sum_i p_i g_ij`` for the probability that
action ``j`` is observed, the bracket is separable and concave in ``v``, so
the inner supremum has a coordinate-wise closed form.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .graphs import BidGrid, GraphModel
from .oracles import bidding_losses, triangular_discrimination

log = logging.getLogger(__name__)

RELAXED = "relaxed"
CLAMPED = "clamped"
MODES = (RELAXED, CLAMPED)


class ZeroObservationWeight(ValueError):
    """Some action has zero probability of being observed under ``p`` and ``g``."""


class DecConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class DecProblem:
    f: np.ndarray
    g: np.ndarray
    gamma: float
    mode: str = RELAXED

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        g = self.g.probs if isinstance(self.g, GraphModel) else np.array(self.g, dtype=float)
        if f.ndim != 1 or g.shape != (f.size, f.size):
            raise ValueError(f"shape mismatch: f {f.shape}, g {g.shape}")
        if np.any(f < 0) or np.any(f > 1):
            raise ValueError("loss predictions must lie in [0, 1]")
        if np.any(g < 0) or np.any(g > 1):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if not self.gamma >= 4:
            raise ValueError(f"gamma must be at least 4, got {self.gamma}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def k(self) -> int:
        return self.f.size

    @property
    def floor(self) -> float:
        """Smallest probability the solver assigns to any action."""
        return 1.0 / (self.gamma * self.k)


@dataclass(frozen=True)
class DecInnerSolution:
    i_star: int
    v_star: np.ndarray
    value: float


@dataclass
class DecSolution:
    p: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool
    method: str = "eg"
    history: list = field(default_factory=list, repr=False)


def observation_weights(g: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``W_j = sum_i p_i g_ij``, the chance that action j is observed."""
    return np.asarray(p, dtype=float) @ g


def bracket(prob: DecProblem, p, i_star: int, v) -> float:
    """The DEC objective at fixed ``(i*, v)``, evaluated from the double sum."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    penalty = np.sum(p[:, None] * prob.g * (prob.f - v)[None, :] ** 2)
    return float(p @ v - v[i_star] - prob.gamma / 4.0 * penalty)


def _weights(prob: DecProblem, p) -> np.ndarray:
    w = observation_weights(prob.g, p)
    if np.any(w <= 0):
        bad = np.flatnonzero(w <= 0).tolist()
        raise ZeroObservationWeight(f"actions {bad} are never observed under p")
    return w


def _all_inner(prob: DecProblem, p):
    """Maximizers and values of the bracket for every ``i*`` at once.

    Returns ``(V, values, W)`` with ``V[i]`` the maximizing ``v`` for ``i* = i``.
    """
    p = np.asarray(p, dtype=float)
    w = _weights(prob, p)
    d = p[None, :] - np.eye(prob.k)
    v = prob.f[None, :] + 2.0 * d / (prob.gamma * w[None, :])
    if prob.mode == CLAMPED:
        v = np.clip(v, 0.0, 1.0)
    values = v @ p - np.diag(v) - prob.gamma / 4.0 * ((prob.f[None, :] - v) ** 2 @ w)
    return v, values, w


def inner_max(prob: DecProblem, p, i_star: int) -> DecInnerSolution:
    """Exact supremum over ``v`` for a fixed comparator action ``i*``."""
    p = np.asarray(p, dtype=float)
    w = _weights(prob, p)
    d = p.copy()
    d[i_star] -= 1.0
    v = prob.f + 2.0 * d / (prob.gamma * w)
    if prob.mode == CLAMPED:
        v = np.clip(v, 0.0, 1.0)
    value = float(p @ v - v[i_star] - prob.gamma / 4.0 * np.sum(w * (prob.f - v) ** 2))
    return DecInnerSolution(i_star, v, value)


def relaxed_closed_form(prob: DecProblem, p, i_star: int) -> float:
    """``<p, f> - f_{i*} + (1/gamma) sum_j (p_j - 1[j = i*])^2 / W_j``."""
    p = np.asarray(p, dtype=float)
    w = _weights(prob, p)
    d = p.copy()
    d[i_star] -= 1.0
    return float(p @ prob.f - prob.f[i_star] + np.sum(d ** 2 / w) / prob.gamma)


def dec_value(prob: DecProblem, p) -> float:
    return float(_all_inner(prob, p)[1].max())


def dec_argmax(prob: DecProblem, p) -> DecInnerSolution:
    """Active comparator (smallest index on ties) with its maximizer."""
    v, values, _ = _all_inner(prob, p)
    i = int(np.argmax(values))
    return DecInnerSolution(i, v[i], float(values[i]))


def _pieces(prob: DecProblem, p):
    """Values and gradients in ``p`` of every ``h_{i*}`` (Danskin)."""
    v, values, _ = _all_inner(prob, p)
    grads = v - prob.gamma / 4.0 * ((prob.f[None, :] - v) ** 2 @ prob.g.T)
    return values, grads


# --------------------------------------------------------------------------
# minimization over the floored simplex


def _lower_bound(prob: DecProblem, cuts_a: np.ndarray, cuts_g: np.ndarray) -> float:
    """Cutting-plane lower bound ``min_{p in P} max_c a_c + g_c . p``.

    Every cut is a supporting hyperplane of the convex objective, so the LP
    value never exceeds the true constrained minimum.
    """
    k = prob.k
    phi = prob.floor
    n = cuts_a.size
    # variables (p_1..p_K, u); minimize u
    c = np.zeros(k + 1)
    c[-1] = 1.0
    a_ub = np.hstack([cuts_g, -np.ones((n, 1))])
    b_ub = -cuts_a
    a_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
    bounds = [(phi, 1.0)] * k + [(None, None)]
    res = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds,
                           method="highs")
    if res.status != 0:
        return -math.inf
    return float(res.fun)


def _bandit_minimizer(prob: DecProblem) -> np.ndarray:
    """Exact relaxed-DEC minimizer when every action only observes itself.

    There ``h_i(p) = <p, f> - f_i + (1/(gamma p_i) - 1/gamma)``, so the problem
    is ``min_lam lam + min{<p, f> : p_i >= 1/(gamma (lam + f_i)), p_i >= floor}``.
    The inner problem puts the slack mass on the best action; the outer one
    is convex in ``lam`` and solved by a bracketed root search on its derivative.
    """
    f, gamma, phi = prob.f, prob.gamma, prob.floor
    best = int(np.argmin(f))
    gaps = f - f[best]

    def lower(lam):
        with np.errstate(divide="ignore"):
            r = np.where(lam + f > 0, 1.0 / (gamma * np.maximum(lam + f, 1e-300)), np.inf)
        return np.maximum(r, phi), r

    def slope(lam):
        lo, r = lower(lam)
        act = r > phi
        return 1.0 - gamma * np.sum(r[act] ** 2 * gaps[act])

    # smallest feasible lam: sum of lower bounds equals one
    hi = 1.0 / (gamma * phi) + 1.0
    lo_lam = -f.min() + 1e-12
    lam0 = optimize.brentq(lambda t: lower(t)[0].sum() - 1.0, lo_lam, hi, xtol=1e-15, rtol=1e-15) \
        if lower(lo_lam)[0].sum() > 1.0 else lo_lam
    if slope(lam0) >= 0:
        lam = lam0
    elif slope(hi) <= 0:
        lam = hi
    else:
        lam = optimize.brentq(slope, lam0, hi, xtol=1e-15, rtol=1e-15)
    p = lower(lam)[0]
    p[best] += max(0.0, 1.0 - p.sum())
    return p / p.sum()


def minimize_dec(prob: DecProblem, tol: float | None = None, max_iters: int = 2000,
                 step: float = 1.0, polish: bool = True) -> DecSolution:
    """Minimize the DEC over the simplex with every entry at least ``1/(gamma K)``.

    Runs exponentiated gradient on ``max_{i*} h_{i*}`` using the gradient of
    the active piece (smallest index on ties).  The floored simplex is
    parametrized as ``p = (1 - 1/gamma) q + 1/(gamma K)`` with ``q`` on the
    plain simplex, so multiplicative updates on ``q`` never leave the
    feasible set.  The step at iteration t is ``step / (sqrt(t) * spread)``
    where ``spread`` is the range of the gradient entries.

    Supporting hyperplanes collected along the way give a certified lower
    bound.  When the certified gap is still above ``tol`` once EG stalls or
    runs out of iterations, an SLSQP pass on the epigraph form refines the
    best iterate.  Self-loop-only graphs in relaxed mode are solved exactly.
    """
    k, gamma = prob.k, prob.gamma
    if tol is None:
        tol = 1e-3 / gamma
    phi = prob.floor
    scale = 1.0 - 1.0 / gamma

    if prob.mode == RELAXED and np.array_equal(prob.g, np.eye(k)):
        p = _bandit_minimizer(prob)
        return DecSolution(p, dec_value(prob, p), 0.0, 0, True, method="bandit-exact")

    if k == 1:
        p = np.ones(1)
        return DecSolution(p, dec_value(prob, p), 0.0, 0, True, method="trivial")

    q = np.full(k, 1.0 / k)
    best_p, best_val = None, math.inf
    cuts_a, cuts_g = [], []
    lb = -math.inf
    history = []
    last_progress = (0, math.inf)
    it = 0
    for it in range(1, max_iters + 1):
        p = phi + scale * q
        values, grads = _pieces(prob, p)
        i = int(np.argmax(values))
        val = float(values[i])
        if val < best_val:
            best_val, best_p = val, p.copy()
        near = np.flatnonzero(values >= val - 0.05 * max(abs(val), 1.0 / gamma))
        cuts_a.extend(values[near] - grads[near] @ p)
        cuts_g.extend(grads[near])
        if it % 25 == 0 or it == 1:
            lb = max(lb, _lower_bound(prob, np.asarray(cuts_a), np.asarray(cuts_g)))
            history.append((it, best_val, lb))
            if best_val - lb <= tol:
                break
            if len(cuts_a) > 40 * k:
                cuts_a, cuts_g = cuts_a[-20 * k:], cuts_g[-20 * k:]
            if last_progress[1] - best_val > tol:
                last_progress = (it, best_val)
            elif polish and it - last_progress[0] >= 200:
                break
        gq = scale * grads[i]
        spread = max(float(np.ptp(gq)), 1e-12)
        z = -step / (math.sqrt(it) * spread) * (gq - gq.max())
        q = q * np.exp(np.maximum(z, -50.0))
        q = q / q.sum()

    gap = best_val - lb
    method = "eg"
    if gap > tol and polish:
        p2 = _slsqp(prob, best_p)
        if p2 is not None:
            values, grads = _pieces(prob, p2)
            v2 = float(values.max())
            cuts_a.extend(values - grads @ p2)
            cuts_g.extend(grads)
            lb = max(lb, _lower_bound(prob, np.asarray(cuts_a), np.asarray(cuts_g)))
            if v2 < best_val:
                best_val, best_p = v2, p2
                method = "eg+slsqp"
            gap = best_val - lb
    converged = gap <= tol
    if not converged:
        log.debug("DEC minimization history: %s", history[-5:])
        warnings.warn(f"DEC minimization stopped with certified gap {gap:.3g} > tol {tol:.3g}",
                      DecConvergenceWarning, stacklevel=2)
    return DecSolution(best_p, best_val, max(gap, 0.0), it, converged, method, history)


def _slsqp(prob: DecProblem, p0: np.ndarray):
    k = prob.k
    phi = prob.floor

    def obj(z):
        return z[-1]

    def obj_jac(z):
        out = np.zeros(k + 1)
        out[-1] = 1.0
        return out

    def cons(z):
        values, _ = _pieces(prob, z[:k])
        return z[-1] - values

    def cons_jac(z):
        _, grads = _pieces(prob, z[:k])
        return np.hstack([-grads, np.ones((k, 1))])

    z0 = np.append(p0, dec_value(prob, p0))
    res = optimize.minimize(
        obj, z0, jac=obj_jac, method="SLSQP",
        bounds=[(phi, 1.0)] * k + [(None, None)],
        constraints=[
            {"type": "ineq", "fun": cons, "jac": cons_jac},
            {"type": "eq", "fun": lambda z: np.sum(z[:k]) - 1.0,
             "jac": lambda z: np.append(np.ones(k), 0.0)},
        ],
        options={"maxiter": 500, "ftol": 1e-12},
    )
    p = np.clip(res.x[:k], phi, 1.0)
    p = p / p.sum()
    if np.any(p < phi - 1e-12):
        return None
    return p


# --------------------------------------------------------------------------
# closed-form policy for the bidding graph


def closed_form_bidding_policy(f_b: float, b: int, gamma: float, k: int) -> np.ndarray:
    """Two-point distribution on the zero bid and the threshold bid ``b``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not 0 <= b < k:
        raise IndexError(f"threshold action {b} out of range for K={k}")
    p = np.zeros(k)
    if b == 0:
        p[0] = 1.0
        return p
    if f_b <= 0.5:
        p0 = 1.0 / (2.0 + gamma * (0.5 - f_b))
    else:
        p0 = 1.0 - 1.0 / (2.0 + gamma * (f_b - 0.5))
    p[0] = p0
    p[b] = 1.0 - p0
    return p


@dataclass
class ClosedFormReport:
    trials: int
    gammas: tuple
    violations: int
    max_ratio: float
    worst: dict | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_closed_form_bound(grid: BidGrid, trials: int, gammas, seed: int = 0) -> ClosedFormReport:
    """Check that the two-point bidding policy keeps the relaxed DEC below ``4/gamma``.

    Predicted value and price are drawn uniformly; the loss predictions and
    the predicted graph are the ones the bidding oracles would produce.
    Reports the largest observed ``dec * gamma / 4``.
    """
    rng = np.random.default_rng(seed)
    violations, max_ratio, worst = 0, -math.inf, None
    stack = grid.graph_stack
    for _ in range(trials):
        v_hat = rng.uniform()
        w_hat = grid.bids[rng.integers(grid.k)] if rng.uniform() < 0.5 else rng.uniform()
        b = grid.threshold_action(w_hat)
        f = bidding_losses(grid.bids, w_hat, v_hat)
        g = stack[b]
        for gamma in gammas:
            p = closed_form_bidding_policy(f[b], b, gamma, grid.k)
            val = dec_value(DecProblem(f, g, gamma, RELAXED), p)
            ratio = val * gamma / 4.0
            if ratio > max_ratio:
                max_ratio = ratio
                worst = {"v_hat": v_hat, "w_hat": w_hat, "gamma": gamma, "dec": val}
            if val > 4.0 / gamma + 1e-9:
                violations += 1
    return ClosedFormReport(trials, tuple(gammas), violations, float(max_ratio), worst)


# --------------------------------------------------------------------------
# numerical checks of the analysis inequalities


def check_amgm_inequality(z, z_prime, atol: float = 1e-12):
    """``3 z' + (z - z')^2 / (z + z') >= z`` (vectorized)."""
    z = np.asarray(z, dtype=float)
    zp = np.asarray(z_prime, dtype=float)
    ok = 3.0 * zp + (z - zp) ** 2 / (z + zp) >= z - atol
    return bool(ok) if ok.ndim == 0 else ok


def grid_points(k: int, step: float) -> np.ndarray:
    """All points of ``{0, step, ..., 1}^k`` as rows."""
    axis = np.linspace(0.0, 1.0, round(1.0 / step) + 1)
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def dec_p_grid(f, g, p, gamma1: float, gamma2: float, v_step: float, m_step: float) -> float:
    """Grid lower estimate of the DEC with a worst-case true graph ``M``.

    Maximizes over ``i*``, ``v`` on a grid, and each ``M_ij`` on a grid of
    ``[0, 1]``, of

        <p, v> - v_{i*} - gamma1 sum_ij p_i M_ij (f_j - v_j)^2
                        - gamma2 sum_ij p_i (M_ij - g_ij)^2 / (M_ij + g_ij).

    The bracket is separable in the entries of ``M`` once ``v`` is fixed.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    p = np.asarray(p, dtype=float)
    k = f.size
    vs = grid_points(k, v_step)                              # (n, K)
    ms = np.linspace(0.0, 1.0, round(1.0 / m_step) + 1)      # (m,)
    sq = (f[None, :] - vs) ** 2                              # (n, K)
    td = triangular_discrimination(ms[:, None, None], g[None, :, :])   # (m, K, K)
    # per (v, i, j): max over M of -gamma1 M sq_j - gamma2 td(M, g_ij); weight p_i >= 0 factors out
    inner = -gamma1 * ms[None, :, None, None] * sq[:, None, None, :] - gamma2 * td[None, :, :, :]
    best_m = inner.max(axis=1)                               # (n, K, K)
    penalty = np.einsum("i,nij->n", p, best_m)
    linear = vs @ p
    values = linear[:, None] - vs + penalty[:, None]         # column i* subtracts v_{i*}
    return float(values.max())


def check_dec_translation(f, g, p, gamma: float, v_step: float, m_step: float, slack: float) -> bool:
    """Grid check that the worst-case-graph DEC at (3/4 gamma, 1/4 gamma) is at most the DEC."""
    lhs = dec_p_grid(f, g, p, 0.75 * gamma, 0.25 * gamma, v_step, m_step)
    rhs = dec_value(DecProblem(f, g, gamma, CLAMPED), p)
    return lhs <= rhs + slack
