"""Fast property checks of the DEC machinery and the bidding graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dec import (
    RELAXED,
    DecProblem,
    check_amgm_inequality,
    check_dec_translation,
    inner_max,
    relaxed_closed_form,
    verify_closed_form_bound,
)
from ..graphs import BidGrid, build_bidding_graph, independence_number, is_strongly_observable


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def check_closed_form(trials=200, seed=0):
    worst = 0.0
    violations = 0
    for eps in (1 / 25, 1 / 50):
        rep = verify_closed_form_bound(BidGrid(eps), trials, (4, 16, 64), seed=seed)
        violations += rep.violations
        worst = max(worst, rep.max_ratio)
    return CheckResult("closed_form_bound", violations == 0,
                       f"{violations} violations, max dec*gamma/4 = {worst:.4f}")


def check_bidding_graphs(samples=200, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    worst_alpha = 0
    for eps in (1 / 4, 1 / 10, 1 / 20):
        grid = BidGrid(eps)
        for w in rng.uniform(size=samples):
            g = build_bidding_graph(grid, w)
            a = independence_number(g)
            worst_alpha = max(worst_alpha, a)
            bad += (not is_strongly_observable(g)) or a > 2
    return CheckResult("bidding_graph_structure", bad == 0, f"{bad} bad graphs, max alpha = {worst_alpha}")


def check_amgm(n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.exponential(size=n)
    zp = rng.exponential(size=n)
    ok = check_amgm_inequality(z, zp)
    return CheckResult("amgm_inequality", bool(np.all(ok)), f"{int(np.sum(~ok))} failures in {n} pairs")


def check_relaxed_inner(n=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 6))
        prob = DecProblem(rng.uniform(size=k), rng.uniform(0.05, 1, size=(k, k)), rng.uniform(4, 64), RELAXED)
        p = rng.dirichlet(np.ones(k))
        i = int(rng.integers(k))
        worst = max(worst, abs(inner_max(prob, p, i).value - relaxed_closed_form(prob, p, i)))
    return CheckResult("relaxed_inner_max", worst <= 1e-12, f"max |diff| = {worst:.2e}")


def check_translation(n=10, seed=0):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(n):
        f = rng.uniform(size=2)
        g = rng.uniform(0.05, 1, size=(2, 2))
        p = rng.dirichlet(np.ones(2))
        gamma = float(rng.choice([4.0, 8.0, 16.0]))
        fails += not check_dec_translation(f, g, p, gamma, v_step=0.02, m_step=0.02, slack=2e-2)
    return CheckResult("dec_translation", fails == 0, f"{fails} failures in {n} instances")


CHECKS = (check_closed_form, check_bidding_graphs, check_amgm, check_relaxed_inner, check_translation)


def run_checks() -> list[CheckResult]:
    return [c() for c in CHECKS]
