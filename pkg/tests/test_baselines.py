import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import ConvergenceWarning

from fair_synergy.baselines import (
    BaselineKind,
    allocate_drf,
    allocate_leximin,
    allocate_num_log,
    allocate_random,
    allocate_uniform,
    leximin_single,
)
from fair_synergy.solver import FEAS_TOL, solve_rti
from fair_synergy.utility import Allocation, scenario_utilities

from conftest import dl_scenario, random_rti, rti_scenario


def test_kind_names():
    assert [k.value for k in BaselineKind] == ["random", "uniform", "num", "drf", "leximin"]


def test_random_single_agent_and_simplex():
    assert allocate_random(rti_scenario([1], [0.5], 4.0), seed=3).compute.tolist() == [4.0]
    a = allocate_random(rti_scenario([1, 2], [0.5, 0.5], 4.0), seed=12345)
    assert a.compute.sum() == pytest.approx(4.0, rel=1e-15)
    assert np.all(a.compute >= 0)


def test_random_is_deterministic_and_dl_independent():
    s = dl_scenario([1, 2, 3], [1, 2, 3], [0.5] * 3, [0.5] * 3, 3.0, 30.0)
    a = allocate_random(s, seed=99)
    b = allocate_random(s, seed=99)
    np.testing.assert_array_equal(a.compute, b.compute)
    np.testing.assert_array_equal(a.data, b.data)
    assert a.data.sum() == pytest.approx(30.0)
    assert not np.allclose(a.compute / 3.0, a.data / 30.0)


def test_random_uniform_on_simplex_mean():
    s = rti_scenario([1, 1, 1], [0.5] * 3, 3.0)
    rng = np.random.default_rng(0)
    draws = np.array([allocate_random(s, rng).compute for _ in range(100_000)])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(mean - 1.0) <= 3 * se)
    # uniform on the 2-simplex: each coordinate / P ~ Beta(1, 2), variance 1/18
    assert draws[:, 0].var() / 9 == pytest.approx(1 / 18, rel=0.02)


def test_uniform_examples():
    np.testing.assert_array_equal(allocate_uniform(rti_scenario([1] * 4, [0.5] * 4, 8.0)).compute, [2] * 4)
    a = allocate_uniform(dl_scenario([1, 2], [1, 2], [0.5] * 2, [0.5] * 2, 4.0, 10.0))
    assert a.compute.tolist() == [2, 2] and a.data.tolist() == [5, 5]
    a = allocate_uniform(rti_scenario([1] * 3, [0.5] * 3, 1.0))
    assert abs(a.compute.sum() - 1.0) <= FEAS_TOL
    assert a.compute[0] == pytest.approx(1 / 3)


def test_num_examples():
    a, diag = allocate_num_log(rti_scenario([1, 3], [0.2, 0.8], 4.0))
    np.testing.assert_allclose(a.compute, [3, 1], atol=1e-9)
    assert 1 / diag.mu == pytest.approx(4.0)
    a, _ = allocate_num_log(rti_scenario([0, 10], [0.5, 0.5], 2.0))
    np.testing.assert_allclose(a.compute, [2, 0], atol=1e-12)
    a, _ = allocate_num_log(rti_scenario([2, 2, 2], [0.1, 0.5, 0.9], 3.0))
    np.testing.assert_allclose(a.compute, [1, 1, 1], atol=1e-9)


def test_num_dl_fills_each_resource():
    s = dl_scenario([1, 3], [10, 0], [0.5, 0.5], [0.5, 0.5], 4.0, 6.0)
    a, diag = allocate_num_log(s)
    np.testing.assert_allclose(a.compute, [3, 1], atol=1e-9)
    np.testing.assert_allclose(a.data, [0, 6], atol=1e-9)
    assert diag.dual_data is not None


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30))
def test_num_equals_fair_synergy_for_equal_gamma(seed, n):
    rng = np.random.default_rng(seed)
    rho0 = np.exp(rng.uniform(np.log(0.1), np.log(10), n))
    g = float(rng.uniform(0.1, 0.9))
    s = rti_scenario(rho0, [g] * n, float(n))
    a_num, _ = allocate_num_log(s)
    a_fs, _ = solve_rti(s)
    np.testing.assert_allclose(a_num.compute, a_fs.compute, rtol=0, atol=1e-8)


def _drf_simulation(d, caps, step=1e-5):
    """Discrete progressive filling: always grow the lowest dominant share by one step."""
    alloc = np.zeros_like(d)
    used = np.zeros(2)
    unit = d / d.max(axis=1, keepdims=True) * step  # one step raises the demand's max entry by `step`
    active = np.ones(len(d), bool)
    while active.any():
        shares = (alloc / caps).max(axis=1)
        shares[~active] = np.inf
        i = int(np.argmin(shares))
        if np.any(used + unit[i] > caps + 1e-12):
            active[i] = False
            continue
        alloc[i] += unit[i]
        used += unit[i]
    return alloc


def test_drf_rti_is_uniform():
    a = allocate_drf(rti_scenario([0.1, 1, 2, 5, 9], [0.1, 0.3, 0.5, 0.7, 0.9], 10.0))
    np.testing.assert_allclose(a.compute, [2] * 5)


def test_drf_identical_demands():
    a = allocate_drf(dl_scenario([1, 2], [3, 4], [0.5, 0.5], [0.5, 0.5], 4.0, 6.0))
    np.testing.assert_allclose(a.compute, [2, 2])
    np.testing.assert_allclose(a.data, [3, 3])


def test_drf_complementary_demands_match_simulation():
    s = dl_scenario([1, 1], [1, 1], [0.8, 0.2], [0.2, 0.8], 1.0, 1.0)
    a = allocate_drf(s)
    sim = _drf_simulation(np.array([[0.8, 0.2], [0.2, 0.8]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(np.column_stack([a.compute, a.data]), sim, atol=1e-4)
    shares = np.maximum(a.compute / 1.0, a.data / 1.0)
    assert shares[0] == pytest.approx(shares[1])
    assert a.compute[0] > a.data[0] and a.data[1] > a.compute[1]


def test_drf_asymmetric_matches_simulation_before_leftover():
    d = np.array([[0.6, 0.3], [0.2, 0.7], [0.5, 0.5]])
    caps = np.array([2.0, 3.0])
    s = dl_scenario([1, 1, 1], [1, 1, 1], d[:, 0], d[:, 1], *caps)
    a = allocate_drf(s)
    sim = _drf_simulation(d, caps)
    # the exhausted resource's first phase agrees with the discrete simulation
    np.testing.assert_allclose(a.compute, sim[:, 0], atol=1e-3)
    assert a.compute.sum() == pytest.approx(2.0) and a.data.sum() == pytest.approx(3.0)


def test_drf_leftover_goes_to_everyone_when_no_taker():
    # both agents are compute-dominant, so labels are left over after phase one
    s = dl_scenario([1, 1], [1, 1], [0.9, 0.8], [0.1, 0.2], 1.0, 1.0)
    a = allocate_drf(s)
    assert a.compute.sum() == pytest.approx(1.0)
    assert a.data.sum() == pytest.approx(1.0)


def test_leximin_examples():
    a = allocate_leximin(rti_scenario([0, 5], [0.5, 0.5], 5.0))
    np.testing.assert_allclose(a.compute, [5, 0], atol=1e-9)
    u = scenario_utilities(rti_scenario([0, 5], [0.5, 0.5], 5.0), a)
    np.testing.assert_allclose(u, [np.sqrt(5), np.sqrt(5)], rtol=1e-9)
    a = allocate_leximin(rti_scenario([2, 2, 2], [0.4] * 3, 3.0))
    np.testing.assert_allclose(a.compute, [1, 1, 1], atol=1e-9)


def test_leximin_unreachable_agent_gets_nothing(rng):
    s = rti_scenario([0, 100], [0.5, 0.5], 1.0)
    a = allocate_leximin(s)
    np.testing.assert_allclose(a.compute, [1, 0], atol=1e-12)
    best_min = scenario_utilities(s, a).min()
    for _ in range(10_000):
        x = rng.dirichlet(np.ones(2))
        assert scenario_utilities(s, Allocation(x)).min() <= best_min + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_leximin_maximises_minimum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    s = random_rti(rng, n)
    best = scenario_utilities(s, allocate_leximin(s)).min()
    cands = s.compute_budget * rng.dirichlet(np.ones(n), size=10_000)
    u = (s.local_compute + cands) ** s.gamma_compute
    assert u.min(axis=1).max() <= best + 1e-9


def test_leximin_single_level():
    x, level = leximin_single(np.ones(3), np.full(3, 0.5), np.array([0.0, 1.0, 9.0]), 3.0)
    # lift the two poorest to a common level L: (L^2 - 0) + (L^2 - 1) = 3 -> L = sqrt(2)
    assert level == pytest.approx(np.sqrt(2.0))
    np.testing.assert_allclose(x, [2.0, 1.0, 0.0], atol=1e-9)


def test_leximin_dl_feasible_and_improves_min():
    s = dl_scenario([0.5, 2, 5], [20, 200, 800], [0.3, 0.6, 0.8], [0.4, 0.5, 0.2], 3.0, 300.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        a = allocate_leximin(s)
    assert a.compute.sum() == pytest.approx(3.0) and a.data.sum() == pytest.approx(300.0)
    assert scenario_utilities(s, a).min() >= scenario_utilities(s, allocate_uniform(s)).min()


@pytest.mark.parametrize("mode", ["rti", "dl"])
def test_all_baselines_budget_feasible(mode):
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(1, 12))
        s = dl_scenario(
            np.exp(rng.uniform(-2, 2, n)), np.exp(rng.uniform(2, 7, n)),
            rng.uniform(0.1, 0.9, n), rng.uniform(0.1, 0.9, n), float(n), 100.0 * n,
        )
        if mode == "rti":
            s = rti_scenario(s.local_compute, s.gamma_compute, float(n))
        for alloc in (
            allocate_random(s, 1), allocate_uniform(s), allocate_num_log(s)[0],
            allocate_drf(s), allocate_leximin(s),
        ):
            assert abs(alloc.compute.sum() - s.compute_budget) <= FEAS_TOL * s.compute_budget
            assert np.all(alloc.compute >= 0) and np.all(alloc.data >= 0)
            if mode == "dl":
                assert abs(alloc.data.sum() - s.label_budget) <= FEAS_TOL * s.label_budget
            else:
                assert not alloc.data.any()


def test_uniform_beats_random_in_expectation():
    rng = np.random.default_rng(11)
    diffs = []
    for t in range(1000):
        s = rti_scenario([1.0] * 5, [0.5] * 5, 5.0)
        u_uni = scenario_utilities(s, allocate_uniform(s)).sum()
        u_rnd = scenario_utilities(s, allocate_random(s, rng)).sum()
        diffs.append(u_uni - u_rnd)
    diffs = np.array(diffs)
    assert diffs.mean() > 3 * diffs.std(ddof=1) / np.sqrt(diffs.size)


@pytest.mark.parametrize("seed", range(6))
def test_leximin_dl_matches_maxmin_grid(seed):
    rng = np.random.default_rng(100 + seed)
    s = dl_scenario(
        np.exp(rng.uniform(np.log(0.1), np.log(10), 2)), np.exp(rng.uniform(np.log(10), np.log(1000), 2)),
        rng.uniform(0.1, 0.9, 2), rng.uniform(0.1, 0.9, 2), 2.0, 200.0,
    )
    best = scenario_utilities(s, allocate_leximin(s)).min()
    r = np.linspace(0, 2.0, 1001)[:, None]
    al = np.linspace(0, 200.0, 1001)[None, :]
    b, a, gc, gd = s.local_compute, s.local_data, s.gamma_compute, s.gamma_data
    u1 = (b[0] + r) ** gc[0] * (a[0] + al) ** gd[0]
    u2 = (b[1] + 2.0 - r) ** gc[1] * (a[1] + 200.0 - al) ** gd[1]
    grid = np.minimum(u1, u2).max()
    assert best >= grid - 1e-12 * grid
    assert best <= grid * (1 + 1e-2)


def test_leximin_joint_beats_alternating_stall():
    # alternating per-resource max-min stalls here below the joint optimum
    s = dl_scenario([4.19045789, 0.27697473], [129.31906433, 513.77006988],
                    [0.65692262, 0.3253942], [0.41804715, 0.60880234], 2.0, 200.0)
    u = scenario_utilities(s, allocate_leximin(s))
    assert u.min() == pytest.approx(u.max(), rel=1e-9)
    assert u.min() >= scenario_utilities(s, allocate_random(s, 2)).min()
