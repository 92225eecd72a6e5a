import numpy as np
import pytest

from fair_synergy import AgentProfile, Scenario


def rti_scenario(rho0, gamma, budget, scale=None):
    scale = scale if scale is not None else [1.0] * len(rho0)
    agents = [
        AgentProfile(local_compute=b, gamma_compute=g, scale=w)
        for b, g, w in zip(rho0, gamma, scale)
    ]
    return Scenario(tuple(agents), budget)


def dl_scenario(rho0, alpha0, g_rho, g_alpha, P, T):
    agents = [
        AgentProfile(local_compute=b, local_data=a, gamma_compute=gc, gamma_data=gd)
        for b, a, gc, gd in zip(rho0, alpha0, g_rho, g_alpha)
    ]
    return Scenario(tuple(agents), P, T, "dl")


def random_rti(rng, n, budget=None):
    rho0 = np.exp(rng.uniform(np.log(0.1), np.log(10), n))
    gamma = rng.uniform(0.1, 0.9, n)
    return rti_scenario(rho0, gamma, float(n) if budget is None else budget)


def grid_best_rti(scenario, steps):
    """Brute-force best total utility over a simplex grid (n <= 3)."""
    P = scenario.compute_budget
    b, g, w = scenario.local_compute, scenario.gamma_compute, scenario.scales
    n = scenario.n_agents
    grid = np.linspace(0.0, P, steps + 1)
    if n == 1:
        return float(w[0] * (b[0] + P) ** g[0])
    if n == 2:
        f = w[0] * (b[0] + grid) ** g[0] + w[1] * (b[1] + P - grid) ** g[1]
        return float(f.max())
    best = -np.inf
    u0 = w[0] * (b[0] + grid) ** g[0]
    u1 = w[1] * (b[1] + grid) ** g[1]
    for i, x1 in enumerate(grid):
        rest = P - x1 - grid[: steps + 1 - i]
        rest = np.maximum(rest, 0.0)
        f = u0[i] + u1[: steps + 1 - i] + w[2] * (b[2] + rest) ** g[2]
        best = max(best, float(f.max()))
    return best


def grid_best_dl(scenario, steps=1000):
    """Brute-force over (rho_1, alpha_1) for two agents; the rest goes to agent 2."""
    P, T = scenario.compute_budget, scenario.label_budget
    b, a = scenario.local_compute, scenario.local_data
    gc, gd = scenario.gamma_compute, scenario.gamma_data
    r = np.linspace(0.0, P, steps + 1)[:, None]
    al = np.linspace(0.0, T, steps + 1)[None, :]
    f = (b[0] + r) ** gc[0] * (a[0] + al) ** gd[0] + (b[1] + P - r) ** gc[1] * (a[1] + T - al) ** gd[1]
    return float(f.max())


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


def pytest_terminal_summary(terminalreporter):
    lines = [
        text
        for key in ("passed", "failed")
        for rep in terminalreporter.stats.get(key, [])
        if rep.when == "call"
        for name, text in rep.user_properties
        if name == "criterion"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for text in sorted(lines, key=lambda t: t.split(" ", 2)[1]):
            terminalreporter.write_line(text)
