"""Optimality and equity checks for any (scenario, allocation) pair."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .solver import ACTIVE_EPS, FEAS_TOL
from .utility import Allocation, Mode, Scenario, scenario_marginals, scenario_utilities

KKT_TOL = 1e-6
ENVY_TOL = 1e-6


class InfeasibleAllocationError(ValueError):
    """An allocation violates a budget, sign or length constraint."""


@dataclass
class FairnessReport:
    kkt_residual_compute: float
    kkt_residual_data: float
    dual_estimate: float
    proportional_fairness_margin: float
    min_utility: float
    max_utility: float
    mean_utility: float
    per_agent_utilities: list[float]
    envy_flag: bool
    dual_estimate_data: float | None = None
    inactive_violations: list[int] = field(default_factory=list)

    @property
    def kkt_ok(self) -> bool:
        return self.kkt_residual_compute <= KKT_TOL and self.kkt_residual_data <= KKT_TOL

    def to_dict(self) -> dict:
        # JSON has no infinity; an unbounded residual is reported as null
        return {k: _jsonable(v) for k, v in asdict(self).items()}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def check_allocation(scenario: Scenario, allocation: Allocation) -> None:
    """Raise :class:`InfeasibleAllocationError` naming the violated constraint."""
    n = scenario.n_agents
    if len(allocation) != n:
        raise InfeasibleAllocationError(
            f"length mismatch: allocation has {len(allocation)} entries, scenario has {n} agents"
        )
    if not (np.all(np.isfinite(allocation.compute)) and np.all(np.isfinite(allocation.data))):
        raise InfeasibleAllocationError("allocation contains non-finite entries")
    if np.any(allocation.compute < 0):
        raise InfeasibleAllocationError(
            f"nonnegative compute violated at agent {int(np.argmin(allocation.compute))}"
        )
    if np.any(allocation.data < 0):
        raise InfeasibleAllocationError(
            f"nonnegative labeling violated at agent {int(np.argmin(allocation.data))}"
        )
    total_c = float(allocation.compute.sum())
    if total_c > scenario.compute_budget * (1.0 + FEAS_TOL):
        raise InfeasibleAllocationError(
            f"compute budget exceeded: sum={total_c!r} > {scenario.compute_budget!r}"
        )
    total_d = float(allocation.data.sum())
    limit_d = scenario.label_budget if scenario.mode is Mode.DL else 0.0
    if total_d > limit_d * (1.0 + FEAS_TOL):
        raise InfeasibleAllocationError(f"label budget exceeded: sum={total_d!r} > {limit_d!r}")


def _residual(m: np.ndarray, x: np.ndarray, budget: float):
    if m.size == 1:
        return 0.0, float(m[0]), []
    active = x > ACTIVE_EPS * budget
    finite_active = active & np.isfinite(m)
    if np.any(finite_active):
        mu = float(np.mean(m[finite_active]))
    else:
        # nobody active: the cheapest marginal is the only sensible price
        mu = float(np.min(m))
    if not math.isfinite(mu) or mu <= 0:
        return math.inf, mu, np.flatnonzero(~active).tolist()
    resid = 0.0
    if np.any(active):
        resid = float(np.max(np.abs(m[active] - mu))) / mu
    violators = np.flatnonzero(~active & (m > mu * (1.0 + KKT_TOL))).tolist()
    if violators:
        resid = max(resid, float(np.max(m[violators] - mu)) / mu)
    return resid, mu, violators


def proportional_fairness_margin(
    scenario: Scenario, candidate: Allocation, reference: Allocation
) -> float:
    """First-order change in total utility when moving from ``reference`` to ``candidate``.

    ``sum_i m_i(reference) * (candidate_i - reference_i)`` over the compute
    shares, with ``m_i`` the marginal utility. Nonpositive for every
    feasible candidate exactly when ``reference`` is optimal.
    """
    if len(candidate) != len(reference) or len(reference) != scenario.n_agents:
        raise ValueError(
            f"length mismatch: candidate={len(candidate)}, reference={len(reference)}, "
            f"agents={scenario.n_agents}"
        )
    m = scenario_marginals(scenario, reference, "compute")
    delta = candidate.compute - reference.compute
    # an unbounded marginal only matters if the candidate actually moves that agent
    terms = np.where(delta == 0, 0.0, m * np.where(delta == 0, 1.0, delta))
    return float(np.sum(terms))


def _envy(scenario: Scenario, allocation: Allocation) -> bool:
    n = scenario.n_agents
    if n == 1:
        return False
    rho0, g_c, w = scenario.local_compute, scenario.gamma_compute, scenario.scales
    # own[i, j]: agent i's utility holding agent j's bundle
    own = w[:, None] * (rho0[:, None] + allocation.compute[None, :]) ** g_c[:, None]
    if scenario.mode is Mode.DL:
        a0, g_d = scenario.local_data, scenario.gamma_data
        own = own * (a0[:, None] + allocation.data[None, :]) ** g_d[:, None]
    mine = np.diag(own)
    return bool(np.any(own > mine[:, None] * (1.0 + ENVY_TOL)))


def equity_summary(scenario: Scenario, allocation: Allocation, reference: Allocation | None = None) -> FairnessReport:
    """Per-agent utilities, their spread, the envy probe and KKT residuals.

    Envy is probed by handing each agent every other agent's whole bundle.
    """
    u = scenario_utilities(scenario, allocation)
    m_c = scenario_marginals(scenario, allocation, "compute")
    res_c, mu_c, viol = _residual(m_c, allocation.compute, scenario.compute_budget)
    res_d, mu_d = 0.0, None
    if scenario.mode is Mode.DL:
        m_d = scenario_marginals(scenario, allocation, "data")
        res_d, mu_d, viol_d = _residual(m_d, allocation.data, scenario.label_budget)
        viol = sorted(set(viol) | set(viol_d))
    margin = 0.0
    if reference is not None:
        margin = proportional_fairness_margin(scenario, allocation, reference)
    return FairnessReport(
        kkt_residual_compute=res_c,
        kkt_residual_data=res_d,
        dual_estimate=mu_c,
        proportional_fairness_margin=margin,
        min_utility=float(u.min()),
        max_utility=float(u.max()),
        mean_utility=float(u.mean()),
        per_agent_utilities=u.tolist(),
        envy_flag=_envy(scenario, allocation),
        dual_estimate_data=mu_d,
        inactive_violations=viol,
    )


def verify_kkt(scenario: Scenario, allocation: Allocation) -> FairnessReport:
    """Check stationarity of ``allocation`` after validating feasibility.

    The dual is estimated as the mean marginal utility over active agents
    (share above ``ACTIVE_EPS * budget``); the residual is the largest
    relative deviation from it, also counting inactive agents whose
    marginal exceeds the estimate. DL checks both resources.
    """
    check_allocation(scenario, allocation)
    return equity_summary(scenario, allocation)
