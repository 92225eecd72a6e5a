"""Comparison allocators sharing the solver's scenario -> allocation contract."""

from __future__ import annotations

import warnings
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from sklearn.exceptions import ConvergenceWarning

from .solver import (
    FEAS_TOL,
    MAX_BRACKET,
    SolverDiagnostics,
    solve_log_waterfill,
)
from .utility import Allocation, Mode, Scenario


class BaselineKind(str, Enum):
    RANDOM = "random"
    UNIFORM = "uniform"
    NUM_LOG = "num"
    DRF = "drf"
    LEXIMIN = "leximin"


def _simplex(rng: np.random.Generator, n: int, total: float) -> np.ndarray:
    # normalised exponential spacings are exactly uniform on the simplex
    e = rng.standard_exponential(n)
    return total * e / e.sum()


def allocate_random(scenario: Scenario, seed=None) -> Allocation:
    """Uniformly random point of each budget simplex, reproducible from ``seed``."""
    n = scenario.n_agents
    rng = np.random.default_rng(seed)
    rho = _simplex(rng, n, scenario.compute_budget)
    if scenario.mode is Mode.DL:
        alpha = _simplex(rng, n, scenario.label_budget)
    else:
        alpha = np.zeros(n)
    return Allocation(rho, alpha)


def allocate_uniform(scenario: Scenario) -> Allocation:
    n = scenario.n_agents
    rho = np.full(n, scenario.compute_budget / n)
    alpha = np.full(n, scenario.label_budget / n) if scenario.mode is Mode.DL else np.zeros(n)
    return Allocation(rho, alpha)


def allocate_num_log(scenario: Scenario) -> tuple[Allocation, SolverDiagnostics]:
    """Logarithmic NUM: water-fill each resource against the agents' own stock.

    Elasticities and scales are ignored by construction. In DL mode the two
    resources are filled independently.
    """
    rho, diag = solve_log_waterfill(scenario.local_compute, scenario.compute_budget)
    if scenario.mode is Mode.DL:
        alpha, diag_d = solve_log_waterfill(scenario.local_data, scenario.label_budget)
        diag.dual_data = diag_d.mu
        diag.kkt_residual_data = diag_d.kkt_residual
    else:
        alpha = np.zeros(scenario.n_agents)
    return Allocation(rho, alpha), diag


def drf_demands(scenario: Scenario) -> np.ndarray:
    """Per-agent demand directions ``(g_compute, g_data)``; elasticity as demand proxy."""
    return np.column_stack([scenario.gamma_compute, scenario.gamma_data])


def allocate_drf(scenario: Scenario) -> Allocation:
    """Continuous Dominant Resource Fairness by progressive filling.

    Every agent grows along its demand direction at a rate that keeps all
    dominant shares equal until one budget runs out. The other budget is
    then filled progressively among agents whose dominant resource it is
    (or among everyone if there are none), so DRF stays budget-tight.
    """
    n = scenario.n_agents
    if scenario.mode is Mode.RTI:
        return allocate_uniform(scenario)

    caps = np.array([scenario.compute_budget, scenario.label_budget])
    d = drf_demands(scenario)
    shares = d / caps  # per-unit-intensity share of each resource
    dom = shares.max(axis=1)
    dominant = shares.argmax(axis=1)
    # intensity k_i = s / dom_i makes every dominant share equal to s
    per_s_use = (d / dom[:, None]).sum(axis=0)
    s_limits = caps / per_s_use
    s = float(s_limits.min())
    exhausted = int(s_limits.argmin())
    alloc = d * (s / dom)[:, None]

    other = 1 - exhausted
    leftover = caps[other] - alloc[:, other].sum()
    if leftover > FEAS_TOL * caps[other]:
        takers = np.flatnonzero(dominant == other)
        if takers.size == 0:
            takers = np.arange(n)
        # takers share the same dominant share, so equal progressive increments
        alloc[takers, other] += leftover / takers.size
    alloc[:, exhausted] *= caps[exhausted] / alloc[:, exhausted].sum()
    return Allocation(alloc[:, 0], alloc[:, 1])


def leximin_single(
    weights: np.ndarray, exponents: np.ndarray, bases: np.ndarray, budget: float
) -> tuple[np.ndarray, float]:
    """Leximin split of one resource for utilities ``w * (b + x) ** g``.

    Agents are raised in order of their standing utility: the poorest one is
    lifted to the next agent's level, then both are lifted together, and so
    on, until the budget cannot reach the next level. The final common level
    among the lifted group is found by bisection. Agents already above that
    level get nothing.

    Returns ``(x, level)``.
    """
    w = np.asarray(weights, dtype=float)
    g = np.asarray(exponents, dtype=float)
    b = np.asarray(bases, dtype=float)
    n = w.size
    u0 = w * b**g
    order = np.argsort(u0, kind="stable")

    def cost(idx, u):
        return float(np.sum(np.maximum((u / w[idx]) ** (1.0 / g[idx]) - b[idx], 0.0)))

    k = n
    for j in range(1, n):
        # can the j poorest agents be lifted to the (j+1)-th standing utility?
        if cost(order[:j], u0[order[j]]) >= budget:
            k = j
            break
    group = order[:k]

    lo = float(u0[order[k - 1]])
    hi = lo if k == n else float(u0[order[k]])
    if k == n:
        hi = max(hi, lo) * 2.0 + 1.0
        while cost(group, hi) < budget:
            hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cost(group, mid) > budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    level = lo
    x = np.zeros(n)
    x[group] = np.maximum((level / w[group]) ** (1.0 / g[group]) - b[group], 0.0)
    spent = x.sum()
    if spent > 0:
        x *= budget / spent
    else:
        x[order[0]] = budget
    return x, level


_THETA_EPS = 1e-12


def _level_costs(c, g_c, g_d, lb, la, p, q):
    """Cheapest (rho, alpha) lifting each agent to log-utility ``c`` at prices (p, q).

    ``lb``/``la`` are the logs of the local bases. Interior optimum of the
    Cobb-Douglas cost problem, projected onto whichever base bound binds.
    """
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_lam = (c - g_c * np.log(g_c / p) - g_d * np.log(g_d / q)) / (g_c + g_d)
        lx = log_lam + np.log(g_c / p)
        ly = log_lam + np.log(g_d / q)
        low_x = lx < lb
        lx = np.where(low_x, lb, lx)
        ly = np.where(low_x, (c - g_c * lb) / g_d, ly)
        low_y = ~low_x & (ly < la)
        ly = np.where(low_y, la, ly)
        lx = np.where(low_y, (c - g_d * la) / g_c, lx)
        rho = np.maximum(np.exp(lx) - np.exp(lb), 0.0)
        alpha = np.maximum(np.exp(ly) - np.exp(la), 0.0)
    done = g_c * lb + g_d * la >= c
    rho[done] = 0.0
    alpha[done] = 0.0
    return np.nan_to_num(rho, nan=np.inf), np.nan_to_num(alpha, nan=np.inf)


def leximin_joint(scenario: Scenario, max_iter: int = MAX_BRACKET) -> tuple[Allocation, bool]:
    """Exact max-min split of compute and labels together.

    Log-utilities are concave, so a common level is reachable iff, for every
    price direction, the agents' cheapest ways of reaching it cost no more
    than the budgets. The worst price direction is where the minimisers use
    both budgets in the same proportion. Both that price and the level are
    monotone scalar roots; the minimisers at the final pair are the allocation.
    """
    P, T = scenario.compute_budget, scenario.label_budget
    g_c, g_d = scenario.gamma_compute, scenario.gamma_data
    with np.errstate(divide="ignore"):
        lb, la = np.log(scenario.local_compute), np.log(scenario.local_data)
    log_w = np.log(scenario.scales)
    n = scenario.n_agents

    def log_u(rho, alpha):
        return log_w + g_c * np.log(scenario.local_compute + rho) + g_d * np.log(scenario.local_data + alpha)

    def at_level(level):
        # the cost is concave in theta; its slope sum(rho)/P - sum(alpha)/T falls as theta rises
        c = level - log_w

        def split(theta):
            return _level_costs(c, g_c, g_d, lb, la, theta / P, (1.0 - theta) / T)

        def slope(theta):
            rho, alpha = split(theta)
            return rho.sum() / P - alpha.sum() / T

        if slope(_THETA_EPS) <= 0:
            theta = _THETA_EPS
        elif slope(1.0 - _THETA_EPS) >= 0:
            theta = 1.0 - _THETA_EPS
        else:
            theta = brentq(slope, _THETA_EPS, 1.0 - _THETA_EPS, xtol=1e-15, rtol=1e-15)
        rho, alpha = split(theta)
        return theta * rho.sum() / P + (1.0 - theta) * alpha.sum() / T, rho, alpha

    def excess(level):
        return at_level(level)[0] - 1.0

    lo = float(np.min(log_u(np.full(n, P / n), np.full(n, T / n))))
    hi = float(np.min(log_u(np.full(n, P), np.full(n, T))))
    converged = True
    if excess(lo) >= 0:
        level = lo
    elif excess(hi) <= 0:
        level = hi
    else:
        level, info = brentq(
            excess, lo, hi, xtol=1e-13 * max(1.0, abs(lo)), maxiter=max_iter,
            full_output=True, disp=False,
        )
        converged = info.converged
    _, rho, alpha = at_level(level)
    return Allocation(_fill(rho, P), _fill(alpha, T)), converged


def _fill(x, budget):
    # spend any rounding leftover pro rata; trim if the dual step overshot
    total = x.sum()
    if total <= 0:
        return np.full(x.size, budget / x.size)
    if total > budget:
        return x * (budget / total)
    return x + (budget - total) * x / total


def _leximin(scenario: Scenario):
    if scenario.mode is Mode.RTI:
        rho, _ = leximin_single(
            scenario.scales, scenario.gamma_compute, scenario.local_compute, scenario.compute_budget
        )
        return Allocation(rho, np.zeros(scenario.n_agents)), True
    if scenario.n_agents == 1:
        return Allocation([scenario.compute_budget], [scenario.label_budget]), True
    return leximin_joint(scenario)


def allocate_leximin(scenario: Scenario) -> Allocation:
    """Lexicographic max-min utility allocation.

    Exact for a single resource. For two resources the max-min level is
    found jointly (see ``leximin_joint``); a ``ConvergenceWarning`` is raised
    if its bisection does not settle within the iteration cap.
    """
    alloc, converged = _leximin(scenario)
    if not converged:
        warnings.warn("leximin level bisection did not converge", ConvergenceWarning, stacklevel=2)
    return alloc


def leximin_with_status(scenario: Scenario) -> tuple[Allocation, bool]:
    return _leximin(scenario)


__all__ = [
    "BaselineKind",
    "allocate_random",
    "allocate_uniform",
    "allocate_num_log",
    "allocate_drf",
    "allocate_leximin",
    "leximin_single",
    "leximin_joint",
    "drf_demands",
]
