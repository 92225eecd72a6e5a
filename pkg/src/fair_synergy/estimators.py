"""scikit-learn style front end for the allocators and the elasticity fit.

Allocators follow the estimator protocol with a :class:`Scenario` in place
of ``X``: ``fit`` solves the allocation and stores ``allocation_``;
``transform`` returns it as an ``(n_agents, 2)`` array; ``predict`` gives
per-agent utilities and ``score`` the total. Hyper-parameters live in
``__init__`` so ``get_params``/``set_params``/``clone`` work unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .baselines import (
    allocate_drf,
    allocate_num_log,
    allocate_random,
    allocate_uniform,
    leximin_with_status,
)
from .solver import ACS_MAX_ITERS, CONV_TOL, solve_dl_acs, solve_rti
from .utility import Allocation, Mode, Scenario, fit_gamma, scenario_utilities


def check_scenario(scenario) -> Scenario:
    """Coerce a :class:`Scenario` or its JSON-style dict; reject anything else."""
    if isinstance(scenario, Scenario):
        return scenario
    if isinstance(scenario, dict):
        try:
            return Scenario.from_dict(scenario)
        except KeyError as exc:
            raise ValueError(f"scenario is missing field {exc.args[0]!r}") from None
    raise TypeError(f"expected a Scenario or dict, got {type(scenario).__name__}")


class BaseAllocator(BaseEstimator):
    """Common fit/transform/predict plumbing; subclasses implement ``_allocate``."""

    def _allocate(self, scenario: Scenario):
        raise NotImplementedError

    def fit(self, scenario, y=None):
        scenario = check_scenario(scenario)
        result = self._allocate(scenario)
        self.allocation_ = result[0]
        self.diagnostics_ = result[1] if len(result) > 1 else None
        self.converged_ = bool(result[2]) if len(result) > 2 else True
        self.n_agents_ = scenario.n_agents
        self.mode_ = scenario.mode
        return self

    def _check_matching(self, scenario) -> Scenario:
        check_is_fitted(self, "allocation_")
        scenario = check_scenario(scenario)
        if scenario.n_agents != self.n_agents_:
            raise ValueError(
                f"scenario has {scenario.n_agents} agents, allocator was fit on {self.n_agents_}"
            )
        return scenario

    def transform(self, scenario=None) -> np.ndarray:
        check_is_fitted(self, "allocation_")
        if scenario is not None:
            self._check_matching(scenario)
        return np.column_stack([self.allocation_.compute, self.allocation_.data])

    def fit_transform(self, scenario, y=None) -> np.ndarray:
        return self.fit(scenario).transform()

    def predict(self, scenario) -> np.ndarray:
        scenario = self._check_matching(scenario)
        return scenario_utilities(scenario, self.allocation_)

    def score(self, scenario, y=None) -> float:
        return float(np.sum(self.predict(scenario)))


class FairSynergyAllocator(BaseAllocator):
    """Total-accuracy maximiser: exact in RTI, alternating convex search in DL."""

    def __init__(self, max_iter=ACS_MAX_ITERS, tol=CONV_TOL, n_restarts=0, random_state=None):
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _allocate(self, scenario):
        if scenario.mode is Mode.RTI:
            alloc, diag = solve_rti(scenario)
            return alloc, diag, True
        alloc, diag, trace = solve_dl_acs(
            scenario,
            max_iter=self.max_iter,
            tol=self.tol,
            n_restarts=self.n_restarts,
            random_state=self.random_state,
        )
        self.trace_ = trace
        return alloc, diag, diag.converged


class RandomAllocator(BaseAllocator):
    def __init__(self, random_state=None):
        self.random_state = random_state

    def _allocate(self, scenario):
        return (allocate_random(scenario, self.random_state),)


class UniformAllocator(BaseAllocator):
    def _allocate(self, scenario):
        return (allocate_uniform(scenario),)


class NumAllocator(BaseAllocator):
    """Logarithmic network-utility water-filling, blind to elasticities."""

    def _allocate(self, scenario):
        return allocate_num_log(scenario)


class DrfAllocator(BaseAllocator):
    def _allocate(self, scenario):
        return (allocate_drf(scenario),)


class LeximinAllocator(BaseAllocator):
    def _allocate(self, scenario):
        alloc, converged = leximin_with_status(scenario)
        return alloc, None, converged


ALLOCATORS: dict[str, type[BaseAllocator]] = {
    "fair-synergy": FairSynergyAllocator,
    "random": RandomAllocator,
    "uniform": UniformAllocator,
    "num": NumAllocator,
    "drf": DrfAllocator,
    "leximin": LeximinAllocator,
}

METHOD_NAMES = tuple(ALLOCATORS)


def make_allocator(method: str, **params) -> BaseAllocator:
    """Build an allocator from its CLI name; unknown parameters are dropped."""
    try:
        cls = ALLOCATORS[method]
    except KeyError:
        raise ValueError(
            f"unknown method {method!r}; choose from {', '.join(METHOD_NAMES)}"
        ) from None
    est = cls()
    accepted = est.get_params()
    return est.set_params(**{k: v for k, v in params.items() if k in accepted})


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Fit ``accuracy = scale * resource ** gamma`` on accuracy-resource curves.

    ``X`` is the resource (one column), ``y`` the accuracy. ``score`` is the
    usual R^2 on the original scale; ``r2_`` holds the log-log fit quality.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False)
        x = np.asarray(X, dtype=float).reshape(len(y), -1)
        if x.shape[1] != 1:
            raise ValueError("PowerLawRegressor expects a single resource column")
        self.gamma_, self.scale_, self.r2_ = fit_gamma(zip(x[:, 0], y))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "gamma_")
        x = check_array(X, ensure_2d=False).reshape(-1)
        return self.scale_ * x**self.gamma_


__all__ = [
    "ALLOCATORS",
    "METHOD_NAMES",
    "Allocation",
    "BaseAllocator",
    "DrfAllocator",
    "FairSynergyAllocator",
    "LeximinAllocator",
    "NumAllocator",
    "PowerLawRegressor",
    "RandomAllocator",
    "UniformAllocator",
    "check_scenario",
    "make_allocator",
]
