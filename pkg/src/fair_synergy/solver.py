"""Exact solvers for the single-resource and two-resource allocation problems.

The single-resource problem

    maximize   sum_i w_i * (b_i + x_i) ** g_i
    subject to sum_i x_i <= B,  x >= 0

is solved through its dual: for a trial multiplier ``mu`` every agent's
stationarity condition can be inverted in closed form, so only the scalar
``mu`` has to be searched for. The search runs in ``log(mu)`` because the
inverse spans many orders of magnitude once ``g_i`` approaches 1.

The two-resource problem is biconcave; :func:`solve_dl_acs` alternates exact
solves of the compute and labeling blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .utility import Allocation, Mode, Scenario, clamp_gamma, scenario_marginals, scenario_utilities

FEAS_TOL = 1e-10
CONV_TOL = 1e-9
ACS_MAX_ITERS = 200
MAX_BRACKET = 200
ACTIVE_EPS = 1e-9
MU_FLOOR = 1e-12
# ACS also requires the compute block to be stationary at the final point
ACS_KKT_TOL = 1e-8

_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class SubproblemSpec:
    """``maximize sum w*(b+x)**g  s.t. sum x <= budget, x >= 0``."""

    weights: np.ndarray
    exponents: np.ndarray
    bases: np.ndarray
    budget: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        g = np.asarray(self.exponents, dtype=float).reshape(-1)
        b = np.asarray(self.bases, dtype=float).reshape(-1)
        if not (w.size == g.size == b.size):
            raise ValueError("weights, exponents and bases must have equal length")
        if w.size == 0:
            raise ValueError("empty subproblem")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be positive and finite")
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            raise ValueError("bases must be nonnegative and finite")
        if not (math.isfinite(self.budget) and self.budget > 0):
            raise ValueError(f"budget must be positive, got {self.budget!r}")
        g = np.array([clamp_gamma(v) for v in g])
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "exponents", g)
        object.__setattr__(self, "bases", b)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def n(self) -> int:
        return self.weights.size

    def objective(self, x: np.ndarray) -> float:
        return float(np.sum(self.weights * (self.bases + x) ** self.exponents))

    def marginals(self, x: np.ndarray) -> np.ndarray:
        base = self.bases + x
        with np.errstate(divide="ignore"):
            m = self.weights * self.exponents * base ** (self.exponents - 1.0)
        return np.where(base > 0, m, np.inf)


@dataclass
class SolverDiagnostics:
    """Dual estimate and optimality evidence for one solve.

    ``mu`` is the multiplier on the compute budget (or on the subproblem's
    budget). In DL solves ``dual_data`` and ``kkt_residual_data`` describe
    the labeling budget.
    """

    mu: float
    iterations: int
    kkt_residual: float
    active_set: list[int]
    objective: float
    converged: bool
    dual_data: float | None = None
    kkt_residual_data: float | None = None

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "iterations": self.iterations,
            "kkt_residual": _finite_or_none(self.kkt_residual),
            "active_set": list(self.active_set),
            "objective": self.objective,
            "converged": self.converged,
            "dual_data": self.dual_data,
            "kkt_residual_data": _finite_or_none(self.kkt_residual_data),
        }


@dataclass
class AcsTrace:
    """Objective after the initial point and after every half-step."""

    objective_per_iteration: list[float] = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "objective_per_iteration": list(self.objective_per_iteration),
            "outer_iterations": self.outer_iterations,
            "converged": self.converged,
        }


def _finite_or_none(v):
    if v is None or not math.isfinite(v):
        return None
    return v


def kkt_residual(marginals: np.ndarray, x: np.ndarray, mu: float, budget: float) -> tuple[float, list[int]]:
    """Relative KKT violation for a budget-constrained concave maximisation.

    Active agents must have marginal utility equal to ``mu``; inactive ones
    must not exceed it.
    """
    active = x > ACTIVE_EPS * budget
    m = marginals
    resid = 0.0
    if np.any(active):
        resid = float(np.max(np.abs(m[active] - mu))) / mu
    if np.any(~active):
        excess = float(np.max(m[~active] - mu)) / mu
        resid = max(resid, excess)
    return max(resid, 0.0), np.flatnonzero(active).tolist()


def bisect_dual(
    demand: Callable[[float], tuple[np.ndarray, np.ndarray]],
    budget: float,
    log_mu_hi: float,
) -> tuple[float, np.ndarray, int]:
    """Find the budget multiplier by bisection on ``log(mu)``.

    ``demand(log_mu)`` returns ``(x, sensitivity)`` where ``x`` is the
    per-agent demand at that price (nonincreasing in ``mu``) and
    ``sensitivity`` is ``|dx/dlog(mu)|`` used to spread the last rounding
    residual so the budget binds exactly.

    Returns ``(mu, x, iterations)``.
    """
    tol = FEAS_TOL * budget

    def total(log_mu):
        x, _ = demand(log_mu)
        return float(np.sum(x))

    lo, hi = math.log(MU_FLOOR), log_mu_hi
    if hi <= lo:
        hi = lo + _LOG2
    n_bracket = 0
    # demand at hi must fit the budget, at lo must exceed it
    while total(hi) > budget:
        lo = max(lo, hi)
        hi += _LOG2
        n_bracket += 1
        if n_bracket > MAX_BRACKET:
            raise ValueError("dual bisection failed to bracket the budget (degenerate subproblem)")
    while total(lo) < budget:
        hi = min(hi, lo)
        lo -= _LOG2
        n_bracket += 1
        if n_bracket > MAX_BRACKET:
            raise ValueError("dual bisection failed to bracket the budget (degenerate subproblem)")

    iterations = n_bracket
    mid = 0.5 * (lo + hi)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        s = total(mid)
        iterations += 1
        if abs(s - budget) <= tol:
            break
        if s > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break

    x, sens = demand(mid)
    x = _polish(x, sens, budget)
    return math.exp(mid), x, iterations


def _polish(x: np.ndarray, sens: np.ndarray, budget: float) -> np.ndarray:
    """Spread the residual ``budget - sum(x)`` over active agents to first order."""
    x = np.maximum(x, 0.0)
    active = x > 0
    r = budget - float(np.sum(x))
    if r == 0.0:
        return x
    if np.any(active):
        s = np.where(active, sens, 0.0)
        ssum = float(np.sum(s))
        if ssum > 0 and math.isfinite(ssum):
            x = np.maximum(x + r * s / ssum, 0.0)
    total = float(np.sum(x))
    if total > 0 and total != budget:
        x = x * (budget / total)
    elif total == 0:
        x = np.full_like(x, budget / x.size)
    return x


def _power_demand(spec: SubproblemSpec):
    log_wg = np.log(spec.weights * spec.exponents)
    inv = 1.0 / (spec.exponents - 1.0)
    one_minus_g = 1.0 - spec.exponents
    b = spec.bases

    def demand(log_mu):
        with np.errstate(over="ignore"):
            level = np.exp((log_mu - log_wg) * inv)
        x = np.maximum(level - b, 0.0)
        return x, level / one_minus_g

    return demand


def solve_weighted_concave(spec: SubproblemSpec) -> tuple[np.ndarray, SolverDiagnostics]:
    """Maximise ``sum w_i (b_i + x_i)^g_i`` subject to ``sum x <= B``, ``x >= 0``.

    Utilities are strictly increasing, so the budget always binds.
    """
    if spec.n == 1:
        x = np.array([spec.budget])
        mu = float(spec.marginals(x)[0])
        return x, SolverDiagnostics(
            mu=mu, iterations=0, kkt_residual=0.0, active_set=[0],
            objective=spec.objective(x), converged=True,
        )

    pos = spec.bases > 0
    if np.any(pos):
        # marginal at zero allocation; above the largest one nobody demands anything
        m0 = spec.weights[pos] * spec.exponents[pos] * spec.bases[pos] ** (spec.exponents[pos] - 1.0)
        log_mu_hi = math.log(float(np.max(m0)))
    else:
        log_mu_hi = 0.0

    mu, x, iterations = bisect_dual(_power_demand(spec), spec.budget, log_mu_hi)
    m = spec.marginals(x)
    resid, active = kkt_residual(m, x, mu, spec.budget)
    return x, SolverDiagnostics(
        mu=mu,
        iterations=iterations,
        kkt_residual=resid,
        active_set=active,
        objective=spec.objective(x),
        converged=True,
    )


def solve_log_waterfill(bases: np.ndarray, budget: float) -> tuple[np.ndarray, SolverDiagnostics]:
    """Classic water-filling: maximise ``sum log(b_i + x_i)`` under the budget.

    Same dual engine as :func:`solve_weighted_concave` with inverse
    ``x_i(mu) = max(0, 1/mu - b_i)``; the water level is ``1/mu``.
    """
    b = np.asarray(bases, dtype=float).reshape(-1)
    if b.size == 1:
        x = np.array([float(budget)])
        return x, SolverDiagnostics(
            mu=1.0 / (b[0] + budget), iterations=0, kkt_residual=0.0, active_set=[0],
            objective=float(np.log(b[0] + budget)), converged=True,
        )

    def demand(log_mu):
        level = math.exp(-log_mu)
        return np.maximum(level - b, 0.0), np.full(b.size, level)

    pos = b > 0
    log_mu_hi = -math.log(float(np.min(b[pos]))) if np.any(pos) else 0.0
    mu, x, iterations = bisect_dual(demand, float(budget), log_mu_hi)
    base = b + x
    with np.errstate(divide="ignore"):
        m = np.where(base > 0, 1.0 / base, np.inf)
    resid, active = kkt_residual(m, x, mu, budget)
    with np.errstate(divide="ignore"):
        obj = float(np.sum(np.log(base)))
    return x, SolverDiagnostics(
        mu=mu, iterations=iterations, kkt_residual=resid, active_set=active,
        objective=obj, converged=True,
    )


def compute_subproblem(scenario: Scenario, data: np.ndarray | None = None) -> SubproblemSpec:
    """Compute-block subproblem with the labeling factor frozen into the weights."""
    w = scenario.scales
    if scenario.mode is Mode.DL:
        w = w * (scenario.local_data + data) ** scenario.gamma_data
    return SubproblemSpec(w, scenario.gamma_compute, scenario.local_compute, scenario.compute_budget)


def data_subproblem(scenario: Scenario, compute: np.ndarray) -> SubproblemSpec:
    """Labeling-block subproblem with the compute factor frozen into the weights."""
    w = scenario.scales * (scenario.local_compute + compute) ** scenario.gamma_compute
    return SubproblemSpec(w, scenario.gamma_data, scenario.local_data, scenario.label_budget)


def solve_rti(scenario: Scenario) -> tuple[Allocation, SolverDiagnostics]:
    """Maximise total accuracy of a single-resource (RTI) scenario."""
    if scenario.mode is not Mode.RTI:
        raise ValueError("solve_rti needs an RTI scenario")
    x, diag = solve_weighted_concave(compute_subproblem(scenario))
    return Allocation(compute=x, data=np.zeros(scenario.n_agents)), diag


def total_utility(scenario: Scenario, allocation: Allocation) -> float:
    return float(np.sum(scenario_utilities(scenario, allocation)))


def solve_dl_acs(
    scenario: Scenario,
    init: Allocation | None = None,
    *,
    max_iter: int = ACS_MAX_ITERS,
    tol: float = CONV_TOL,
    n_restarts: int = 0,
    random_state=None,
) -> tuple[Allocation, SolverDiagnostics, AcsTrace]:
    """Alternate Convex Search for the two-resource (DL) problem.

    Starting from ``init`` (uniform split by default), alternately solves the
    compute block with labels frozen and the labeling block with compute
    frozen, each exactly. Stops once a full sweep improves the objective by
    less than ``tol`` relative and the compute block is still stationary
    (relative KKT residual at most ``ACS_KKT_TOL``) after the labels moved,
    or after ``max_iter`` sweeps; in the latter case the best iterate is
    returned with ``converged=False``.

    ``n_restarts`` adds that many extra runs from random simplex starting
    points drawn from ``random_state``; the best local optimum is kept.
    """
    if scenario.mode is not Mode.DL:
        raise ValueError("solve_dl_acs needs a DL scenario")
    n = scenario.n_agents
    if init is None:
        init = Allocation(
            compute=np.full(n, scenario.compute_budget / n),
            data=np.full(n, scenario.label_budget / n),
        )
    elif len(init) != n:
        raise ValueError(f"init has {len(init)} entries, scenario has {n} agents")

    best = _acs_run(scenario, init, max_iter, tol)
    if n_restarts > 0:
        rng = np.random.default_rng(random_state)
        for _ in range(n_restarts):
            start = Allocation(
                compute=scenario.compute_budget * rng.dirichlet(np.ones(n)),
                data=scenario.label_budget * rng.dirichlet(np.ones(n)),
            )
            cand = _acs_run(scenario, start, max_iter, tol)
            if cand[1].objective > best[1].objective:
                best = cand
    return best


def _acs_run(scenario: Scenario, init: Allocation, max_iter: int, tol: float):
    n = scenario.n_agents
    if n == 1:
        alloc = Allocation([scenario.compute_budget], [scenario.label_budget])
        f = total_utility(scenario, alloc)
        m_c = scenario_marginals(scenario, alloc, "compute")
        m_d = scenario_marginals(scenario, alloc, "data")
        diag = SolverDiagnostics(
            mu=float(m_c[0]), iterations=1, kkt_residual=0.0, active_set=[0], objective=f,
            converged=True, dual_data=float(m_d[0]), kkt_residual_data=0.0,
        )
        return alloc, diag, AcsTrace([f], 1, True)

    rho = np.asarray(init.compute, dtype=float).copy()
    alpha = np.asarray(init.data, dtype=float).copy()
    trace = AcsTrace()
    f_prev = total_utility(scenario, Allocation(rho, alpha))
    trace.objective_per_iteration.append(f_prev)

    best = (f_prev, rho.copy(), alpha.copy(), None, None)
    diag_c = diag_d = None
    for it in range(1, max_iter + 1):
        rho, diag_c = solve_weighted_concave(compute_subproblem(scenario, alpha))
        trace.objective_per_iteration.append(total_utility(scenario, Allocation(rho, alpha)))
        alpha, diag_d = solve_weighted_concave(data_subproblem(scenario, rho))
        f = total_utility(scenario, Allocation(rho, alpha))
        trace.objective_per_iteration.append(f)
        trace.outer_iterations = it
        if f >= best[0]:
            best = (f, rho.copy(), alpha.copy(), diag_c, diag_d)
        if f - f_prev < tol * abs(f_prev):
            stale = _describe_block(scenario, Allocation(rho, alpha), "compute")
            if stale.kkt_residual <= ACS_KKT_TOL:
                trace.converged = True
                break
        f_prev = f

    f, rho, alpha, diag_c, diag_d = best
    alloc = Allocation(rho, alpha)
    if diag_c is None:
        # initial point was never improved upon; describe it directly
        diag_c = _describe_block(scenario, alloc, "compute")
        diag_d = _describe_block(scenario, alloc, "data")
    else:
        # compute-block multipliers drift once labels move; re-measure at the final point
        diag_c = _describe_block(scenario, alloc, "compute")
    diag = SolverDiagnostics(
        mu=diag_c.mu,
        iterations=trace.outer_iterations,
        kkt_residual=diag_c.kkt_residual,
        active_set=diag_c.active_set,
        objective=f,
        converged=trace.converged,
        dual_data=diag_d.mu,
        kkt_residual_data=diag_d.kkt_residual,
    )
    return alloc, diag, trace


def _describe_block(scenario: Scenario, alloc: Allocation, wrt: str) -> SolverDiagnostics:
    x = alloc.compute if wrt == "compute" else alloc.data
    budget = scenario.compute_budget if wrt == "compute" else scenario.label_budget
    m = scenario_marginals(scenario, alloc, wrt)
    active = x > ACTIVE_EPS * budget
    finite = active & np.isfinite(m)
    mu = float(np.mean(m[finite])) if np.any(finite) else float(np.min(m))
    resid, act = kkt_residual(m, x, mu, budget)
    return SolverDiagnostics(
        mu=mu, iterations=0, kkt_residual=resid, active_set=act,
        objective=total_utility(scenario, alloc), converged=True,
    )
