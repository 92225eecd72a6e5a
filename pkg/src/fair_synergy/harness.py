"""Monte-Carlo comparison of allocators over randomly drawn fleets.

Every (agent count, trial) pair owns its own RNG stream seeded from
``(master_seed, n_agents, trial)``, so a trial's scenario does not depend on
which other trials ran, in what order, or on how many threads.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import METHOD_NAMES, make_allocator
from .utility import AgentProfile, Mode, Scenario, scenario_utilities

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "method", "agent_count", "mean_total", "std_total", "mean_min", "mean_max",
    "q25", "q50", "q75", "mean_solve_ms",
)

_RANDOM_STREAM = 0x5EED


@dataclass
class ExperimentConfig:
    """Definition of a Monte-Carlo sweep.

    Budgets scale with the fleet: ``P = per_agent_compute * n`` and
    ``T = per_agent_label * n``. ``hardness`` overrides the sampled compute
    elasticities: ``"uniform"`` sets every agent to ``hardness_levels[0]``,
    ``"heterogeneous"`` cycles through ``hardness_levels``.

    Wall-clock timing is off by default because it makes the CSV
    nondeterministic; enable ``record_timing`` for complexity checks.
    """

    mode: Mode = Mode.RTI
    trials: int = 100
    agent_counts: tuple[int, ...] = (10,)
    per_agent_compute: float = 1.0
    per_agent_label: float = 100.0
    local_compute_bounds: tuple[float, float] = (0.1, 10.0)
    local_data_bounds: tuple[float, float] = (10.0, 1000.0)
    gamma_bounds: tuple[float, float] = (0.1, 0.9)
    master_seed: int = 0
    methods: tuple[str, ...] = METHOD_NAMES
    hardness: str = "random"
    hardness_levels: tuple[float, ...] = ()
    acs_restarts: int = 0
    record_timing: bool = False

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        self.agent_counts = tuple(int(n) for n in self.agent_counts)
        self.methods = tuple(self.methods)
        self.hardness_levels = tuple(float(g) for g in self.hardness_levels)
        for name in ("local_compute_bounds", "local_data_bounds", "gamma_bounds"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.agent_counts or min(self.agent_counts) < 1:
            raise ValueError("agent_counts must be a nonempty list of positive counts")
        if not (self.per_agent_compute > 0 and self.per_agent_label > 0):
            raise ValueError("per-agent budgets must be positive")
        for name in ("local_compute_bounds", "local_data_bounds", "gamma_bounds"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.gamma_bounds[1] >= 1:
            raise ValueError("gamma_bounds must lie inside (0, 1)")
        unknown = [m for m in self.methods if m not in METHOD_NAMES]
        if unknown or not self.methods:
            raise ValueError(f"unknown method(s) {unknown}; choose from {', '.join(METHOD_NAMES)}")
        if self.hardness not in ("random", "uniform", "heterogeneous"):
            raise ValueError("hardness must be 'random', 'uniform' or 'heterogeneous'")
        if self.hardness != "random":
            if not self.hardness_levels:
                raise ValueError(f"hardness {self.hardness!r} needs hardness_levels")
            if any(not 0 < g < 1 for g in self.hardness_levels):
                raise ValueError("hardness_levels must lie inside (0, 1)")
        if self.acs_restarts < 0:
            raise ValueError("acs_restarts must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & (2**64 - 1) for k in key]))


def _log_uniform(rng, bounds, n):
    lo, hi = bounds
    if lo == hi:
        return np.full(n, lo)
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def generate_scenario(config: ExperimentConfig, n_agents: int, trial_index: int) -> Scenario:
    """Draw one fleet; identical for identical ``(master_seed, n_agents, trial_index)``."""
    rng = _stream(config.master_seed, n_agents, trial_index)
    rho0 = _log_uniform(rng, config.local_compute_bounds, n_agents)
    alpha0 = _log_uniform(rng, config.local_data_bounds, n_agents)
    g_lo, g_hi = config.gamma_bounds
    g_c = rng.uniform(g_lo, g_hi, n_agents) if g_lo < g_hi else np.full(n_agents, g_lo)
    g_d = rng.uniform(g_lo, g_hi, n_agents) if g_lo < g_hi else np.full(n_agents, g_lo)
    if config.hardness == "uniform":
        g_c = np.full(n_agents, config.hardness_levels[0])
    elif config.hardness == "heterogeneous":
        levels = config.hardness_levels
        g_c = np.array([levels[i % len(levels)] for i in range(n_agents)])
    agents = tuple(
        AgentProfile(
            local_compute=float(rho0[i]),
            local_data=float(alpha0[i]),
            gamma_compute=float(g_c[i]),
            gamma_data=float(g_d[i]),
            id=f"agent-{i}",
        )
        for i in range(n_agents)
    )
    dl = config.mode is Mode.DL
    return Scenario(
        agents,
        compute_budget=config.per_agent_compute * n_agents,
        label_budget=config.per_agent_label * n_agents if dl else 0.0,
        mode=config.mode,
    )


def method_seed(config: ExperimentConfig, method: str, n_agents: int, trial_index: int) -> int:
    """Seed for stochastic methods, independent of the scenario stream."""
    tag = METHOD_NAMES.index(method)
    ss = np.random.SeedSequence([config.master_seed, n_agents, trial_index, _RANDOM_STREAM, tag])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class TrialResult:
    total: float
    min_utility: float
    max_utility: float
    solve_ms: float
    converged: bool
    ok: bool = True


@dataclass
class ResultRow:
    method: str
    agent_count: int
    mean_total: float
    std_total: float
    mean_min: float
    mean_max: float
    q25: float
    q50: float
    q75: float
    mean_solve_ms: float
    n_failed: int = 0
    n_unconverged: int = 0


@dataclass
class ResultTable:
    """Aggregated statistics keyed by ``(method, agent_count)``.

    ``totals``/``mins`` keep the per-trial values (trial order, NaN for
    failed trials) so paired comparisons between methods stay possible.
    """

    rows: dict[tuple[str, int], ResultRow] = field(default_factory=dict)
    totals: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    mins: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    def sorted_rows(self) -> list[ResultRow]:
        return [self.rows[k] for k in sorted(self.rows)]

    def row(self, method: str, n: int) -> ResultRow:
        return self.rows[(method, n)]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.sorted_rows():
            writer.writerow([
                r.method, r.agent_count,
                *(repr(float(getattr(r, c))) for c in CSV_HEADER[2:]),
            ])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def format_summary(self) -> str:
        lines = [
            f"{'method':<13}{'n':>5}{'mean_total':>14}{'std_total':>12}"
            f"{'mean_min':>11}{'mean_max':>11}{'ms':>9}"
        ]
        for r in self.sorted_rows():
            ms = "-" if math.isnan(r.mean_solve_ms) else f"{r.mean_solve_ms:.3f}"
            lines.append(
                f"{r.method:<13}{r.agent_count:>5}{r.mean_total:>14.4f}{r.std_total:>12.4f}"
                f"{r.mean_min:>11.4f}{r.mean_max:>11.4f}{ms:>9}"
            )
            if r.n_failed or r.n_unconverged:
                lines.append(f"  ({r.n_failed} failed, {r.n_unconverged} unconverged)")
        return "\n".join(lines)


def run_trial(config: ExperimentConfig, method: str, n_agents: int, trial_index: int,
              scenario: Scenario | None = None) -> TrialResult:
    if scenario is None:
        scenario = generate_scenario(config, n_agents, trial_index)
    est = make_allocator(
        method,
        random_state=method_seed(config, method, n_agents, trial_index),
        n_restarts=config.acs_restarts,
    )
    start = time.perf_counter()
    est.fit(scenario)
    elapsed = (time.perf_counter() - start) * 1e3
    u = scenario_utilities(scenario, est.allocation_)
    return TrialResult(
        total=float(u.sum()),
        min_utility=float(u.min()),
        max_utility=float(u.max()),
        solve_ms=elapsed,
        converged=est.converged_,
    )


def _safe_trial(config, method, n, trial) -> TrialResult:
    try:
        return run_trial(config, method, n, trial)
    except Exception as exc:  # one bad instance must not abort a sweep
        try:
            dump = json.dumps(generate_scenario(config, n, trial).to_dict())
        except Exception:
            dump = "<scenario unavailable>"
        logger.warning("trial failed: method=%s n=%d trial=%d: %s; scenario=%s",
                       method, n, trial, exc, dump)
        nan = float("nan")
        return TrialResult(nan, nan, nan, nan, False, ok=False)


def _aggregate(method: str, n: int, results: list[TrialResult], timed: bool) -> ResultRow:
    ok = [r for r in results if r.ok]
    nan = float("nan")
    if not ok:
        return ResultRow(method, n, nan, nan, nan, nan, nan, nan, nan, nan, len(results), 0)
    totals = np.array([r.total for r in ok])
    q25, q50, q75 = np.percentile(totals, [25, 50, 75])
    return ResultRow(
        method=method,
        agent_count=n,
        mean_total=float(np.mean(totals)),
        std_total=float(np.std(totals, ddof=1)) if totals.size > 1 else 0.0,
        mean_min=float(np.mean([r.min_utility for r in ok])),
        mean_max=float(np.mean([r.max_utility for r in ok])),
        q25=float(q25),
        q50=float(q50),
        q75=float(q75),
        mean_solve_ms=float(np.mean([r.solve_ms for r in ok])) if timed else nan,
        n_failed=len(results) - len(ok),
        n_unconverged=sum(not r.converged for r in ok),
    )


def run_benchmark(config: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Run every (method, agent count, trial) combination and aggregate.

    Results are slotted by task index before reduction, so the table does
    not depend on ``threads``.
    """
    tasks = [
        (method, n, trial)
        for method in config.methods
        for n in config.agent_counts
        for trial in range(config.trials)
    ]
    threads = threads or os.cpu_count() or 1
    if threads == 1:
        results = [_safe_trial(config, *t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _safe_trial(config, *t), tasks))

    table = ResultTable()
    grouped: dict[tuple[str, int], list[TrialResult]] = {}
    for (method, n, _), res in zip(tasks, results):
        grouped.setdefault((method, n), []).append(res)
    for key, res in grouped.items():
        table.rows[key] = _aggregate(*key, res, config.record_timing)
        table.totals[key] = np.array([r.total for r in res])
        table.mins[key] = np.array([r.min_utility for r in res])
    return table


def run_scaling(config: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Agent-count sweep with budgets growing linearly in the fleet size."""
    if not config.agent_counts:
        raise ValueError("agent_counts must be nonempty")
    return run_benchmark(config, threads=threads)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


def dump_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
