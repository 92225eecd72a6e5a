"""Cobb-Douglas accuracy utilities, agent/scenario types and elasticity fitting.

An agent's accuracy is modelled as a power law in each resource it holds::

    RTI:  U = w * (rho0 + rho) ** g_rho
    DL:   U = w * (rho0 + rho) ** g_rho * (alpha0 + alpha) ** g_alpha

where ``rho0``/``alpha0`` are the agent's own compute and labeled data and
``rho``/``alpha`` are the shares handed out by the cloud.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

GAMMA_EPS = 1e-3

#: Returned by :func:`marginal_utility` when the differentiated base is zero.
UNBOUNDED = math.inf


class Mode(str, Enum):
    RTI = "rti"
    DL = "dl"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected 'rti' or 'dl'") from None


def clamp_gamma(gamma: float) -> float:
    """Clamp an elasticity into ``[GAMMA_EPS, 1 - GAMMA_EPS]``."""
    if not math.isfinite(gamma):
        raise ValueError(f"elasticity must be finite, got {gamma!r}")
    return min(max(float(gamma), GAMMA_EPS), 1.0 - GAMMA_EPS)


@dataclass(frozen=True)
class CobbDouglasUtility:
    """Weighted Cobb-Douglas form ``scale * prod(x_k ** gamma_k)``."""

    elasticities: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        if len(self.elasticities) < 1:
            raise ValueError("need at least one factor")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale!r}")
        object.__setattr__(
            self, "elasticities", tuple(clamp_gamma(g) for g in self.elasticities)
        )

    @property
    def arity(self) -> int:
        return len(self.elasticities)

    def __call__(self, *inputs: float) -> float:
        if len(inputs) != self.arity:
            raise ValueError(f"expected {self.arity} inputs, got {len(inputs)}")
        value = self.scale
        for x, g in zip(inputs, self.elasticities):
            if x < 0:
                raise ValueError(f"negative input {x!r}")
            value *= x**g
        return value

    def partial(self, k: int, *inputs: float) -> float:
        """Partial derivative in factor ``k``; ``UNBOUNDED`` at a zero base."""
        if len(inputs) != self.arity:
            raise ValueError(f"expected {self.arity} inputs, got {len(inputs)}")
        if any(x < 0 for x in inputs):
            raise ValueError("negative input")
        if inputs[k] == 0:
            return UNBOUNDED
        g = self.elasticities[k]
        value = self.scale * g * inputs[k] ** (g - 1.0)
        for j, (x, gj) in enumerate(zip(inputs, self.elasticities)):
            if j != k:
                value *= x**gj
        return value


@dataclass(frozen=True)
class AgentProfile:
    """Exogenous parameters of one agent.

    Elasticities are clamped into the open unit interval on construction.
    """

    local_compute: float
    local_data: float = 0.0
    gamma_compute: float = 0.5
    gamma_data: float = 0.5
    scale: float = 1.0
    id: str | None = None

    def __post_init__(self):
        for name in ("local_compute", "local_data"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale!r}")
        object.__setattr__(self, "local_compute", float(self.local_compute))
        object.__setattr__(self, "local_data", float(self.local_data))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "gamma_compute", clamp_gamma(self.gamma_compute))
        object.__setattr__(self, "gamma_data", clamp_gamma(self.gamma_data))

    def utility(self, mode: Mode | str) -> CobbDouglasUtility:
        if Mode.parse(mode) is Mode.RTI:
            return CobbDouglasUtility((self.gamma_compute,), self.scale)
        return CobbDouglasUtility((self.gamma_compute, self.gamma_data), self.scale)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "local_compute": self.local_compute,
            "local_data": self.local_data,
            "gamma_compute": self.gamma_compute,
            "gamma_data": self.gamma_data,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentProfile":
        return cls(
            local_compute=float(d["local_compute"]),
            local_data=float(d.get("local_data", 0.0)),
            gamma_compute=float(d.get("gamma_compute", 0.5)),
            gamma_data=float(d.get("gamma_data", 0.5)),
            scale=float(d.get("scale", 1.0)),
            id=None if d.get("id") is None else str(d["id"]),
        )


@dataclass(frozen=True)
class Scenario:
    """Agent roster plus cloud budgets: everything an allocator consumes."""

    agents: tuple[AgentProfile, ...]
    compute_budget: float
    label_budget: float = 0.0
    mode: Mode = Mode.RTI

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 1:
            raise ValueError("scenario needs at least one agent")
        mode = Mode.parse(self.mode)
        if not (math.isfinite(self.compute_budget) and self.compute_budget > 0):
            raise ValueError(f"compute_budget must be positive, got {self.compute_budget!r}")
        if not (math.isfinite(self.label_budget) and self.label_budget >= 0):
            raise ValueError(f"label_budget must be >= 0, got {self.label_budget!r}")
        if mode is Mode.DL and not self.label_budget > 0:
            raise ValueError("DL scenarios need a positive label_budget")
        named = tuple(
            a if a.id is not None else _with_id(a, f"agent-{i}") for i, a in enumerate(agents)
        )
        ids = [a.id for a in named]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        object.__setattr__(self, "agents", named)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "compute_budget", float(self.compute_budget))
        object.__setattr__(self, "label_budget", float(self.label_budget))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def local_compute(self) -> np.ndarray:
        return np.array([a.local_compute for a in self.agents])

    @property
    def local_data(self) -> np.ndarray:
        return np.array([a.local_data for a in self.agents])

    @property
    def gamma_compute(self) -> np.ndarray:
        return np.array([a.gamma_compute for a in self.agents])

    @property
    def gamma_data(self) -> np.ndarray:
        return np.array([a.gamma_data for a in self.agents])

    @property
    def scales(self) -> np.ndarray:
        return np.array([a.scale for a in self.agents])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "compute_budget": self.compute_budget,
            "label_budget": self.label_budget,
            "agents": [a.to_dict() for a in self.agents],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            agents=tuple(AgentProfile.from_dict(a) for a in d["agents"]),
            compute_budget=float(d["compute_budget"]),
            label_budget=float(d.get("label_budget", 0.0)),
            mode=Mode.parse(d.get("mode", "rti")),
        )


def _with_id(agent: AgentProfile, ident: str) -> AgentProfile:
    d = agent.to_dict()
    d["id"] = ident
    return AgentProfile.from_dict(d)


@dataclass
class Allocation:
    """Per-agent cloud shares. ``data`` is all zeros in RTI mode."""

    compute: np.ndarray
    data: np.ndarray = field(default=None)

    def __post_init__(self):
        self.compute = np.asarray(self.compute, dtype=float).reshape(-1)
        if self.data is None:
            self.data = np.zeros_like(self.compute)
        self.data = np.asarray(self.data, dtype=float).reshape(-1)
        if self.data.shape != self.compute.shape:
            raise ValueError(
                f"compute and data lengths differ: {self.compute.size} vs {self.data.size}"
            )

    def __len__(self) -> int:
        return self.compute.size

    def to_dict(self) -> dict:
        return {"compute": self.compute.tolist(), "data": self.data.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(compute=d["compute"], data=d.get("data"))


@dataclass(frozen=True)
class CurveSample:
    resource: float
    accuracy: float

    def __post_init__(self):
        if not (math.isfinite(self.resource) and self.resource > 0):
            raise ValueError(f"resource must be positive, got {self.resource!r}")
        if not (math.isfinite(self.accuracy) and self.accuracy > 0):
            raise ValueError(f"accuracy must be positive, got {self.accuracy!r}")


def eval_utility(agent: AgentProfile, rho: float, alpha: float = 0.0, mode: Mode | str = Mode.RTI) -> float:
    """Accuracy of ``agent`` after receiving ``rho`` compute and ``alpha`` labels.

    In RTI mode ``alpha`` is ignored. A zero base gives utility 0; the
    matching marginal is reported as ``UNBOUNDED`` by :func:`marginal_utility`.
    """
    if rho < 0 or alpha < 0:
        raise ValueError(f"allocations must be nonnegative, got rho={rho!r}, alpha={alpha!r}")
    mode = Mode.parse(mode)
    value = agent.scale * (agent.local_compute + rho) ** agent.gamma_compute
    if mode is Mode.DL:
        value *= (agent.local_data + alpha) ** agent.gamma_data
    return value


def marginal_utility(
    agent: AgentProfile,
    rho: float,
    alpha: float = 0.0,
    mode: Mode | str = Mode.RTI,
    wrt: str = "compute",
) -> float:
    """Partial derivative of :func:`eval_utility` in ``wrt`` ('compute' or 'data')."""
    if rho < 0 or alpha < 0:
        raise ValueError(f"allocations must be nonnegative, got rho={rho!r}, alpha={alpha!r}")
    mode = Mode.parse(mode)
    if wrt not in ("compute", "data"):
        raise ValueError(f"wrt must be 'compute' or 'data', got {wrt!r}")
    if mode is Mode.RTI and wrt == "data":
        raise ValueError("RTI utilities have no data argument")
    base_c = agent.local_compute + rho
    if mode is Mode.RTI:
        return agent.utility(mode).partial(0, base_c)
    base_d = agent.local_data + alpha
    return agent.utility(mode).partial(0 if wrt == "compute" else 1, base_c, base_d)


def scenario_utilities(scenario: Scenario, allocation: Allocation) -> np.ndarray:
    """Vectorised per-agent utilities; the single scoring path for every method."""
    rho = np.maximum(allocation.compute, 0.0)
    u = scenario.scales * (scenario.local_compute + rho) ** scenario.gamma_compute
    if scenario.mode is Mode.DL:
        alpha = np.maximum(allocation.data, 0.0)
        u = u * (scenario.local_data + alpha) ** scenario.gamma_data
    return u


def scenario_marginals(scenario: Scenario, allocation: Allocation, wrt: str = "compute") -> np.ndarray:
    """Vectorised marginal utilities; ``inf`` where the differentiated base is 0."""
    base_c = scenario.local_compute + np.maximum(allocation.compute, 0.0)
    g_c = scenario.gamma_compute
    if scenario.mode is Mode.RTI:
        if wrt != "compute":
            raise ValueError("RTI utilities have no data argument")
        other = np.ones_like(base_c)
    else:
        base_d = scenario.local_data + np.maximum(allocation.data, 0.0)
        g_d = scenario.gamma_data
        if wrt == "compute":
            other = base_d**g_d
        elif wrt == "data":
            other = base_c**g_c
            base_c, g_c = base_d, g_d
        else:
            raise ValueError(f"wrt must be 'compute' or 'data', got {wrt!r}")
    with np.errstate(divide="ignore"):
        m = scenario.scales * g_c * base_c ** (g_c - 1.0) * other
    return np.where(base_c > 0, m, np.inf)


def fit_gamma(samples: Iterable[CurveSample | tuple[float, float]]) -> tuple[float, float, float]:
    """Fit ``accuracy = scale * resource ** gamma`` by least squares in log-log space.

    Returns ``(gamma, scale, r2)`` with ``gamma`` clamped into the open unit
    interval and ``r2`` measured on the log-transformed data.
    """
    pts = [s if isinstance(s, CurveSample) else CurveSample(*s) for s in samples]
    x = np.array([p.resource for p in pts], dtype=float)
    y = np.array([p.accuracy for p in pts], dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("fewer than 2 distinct abscissae")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_res = float(resid @ resid)
    centred = ly - ly.mean()
    ss_tot = float(centred @ centred)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return clamp_gamma(float(slope)), float(math.exp(intercept)), r2


def read_curve_csv(path) -> list[CurveSample]:
    """Read a ``resource,accuracy`` CSV into samples."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("empty CSV")
        missing = {"resource", "accuracy"} - {f.strip() for f in reader.fieldnames}
        if missing:
            raise ValueError(f"CSV header missing column(s): {', '.join(sorted(missing))}")
        samples = []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}
            try:
                samples.append(CurveSample(float(row["resource"]), float(row["accuracy"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    return samples

