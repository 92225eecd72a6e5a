"""Fair allocation of shared cloud resources across heterogeneous agents.

Each agent's accuracy is a Cobb-Douglas function of its compute (and, for
distributed learning, labeled data); the cloud's budgets are split to
maximise total accuracy, with five standard allocators for comparison.
"""

from .baselines import (
    BaselineKind,
    allocate_drf,
    allocate_leximin,
    allocate_num_log,
    allocate_random,
    allocate_uniform,
)
from .estimators import (
    ALLOCATORS,
    METHOD_NAMES,
    DrfAllocator,
    FairSynergyAllocator,
    LeximinAllocator,
    NumAllocator,
    PowerLawRegressor,
    RandomAllocator,
    UniformAllocator,
    check_scenario,
    make_allocator,
)
from .fairness import (
    FairnessReport,
    InfeasibleAllocationError,
    check_allocation,
    equity_summary,
    proportional_fairness_margin,
    verify_kkt,
)
from .harness import ExperimentConfig, ResultTable, generate_scenario, run_benchmark, run_scaling
from .solver import (
    AcsTrace,
    SolverDiagnostics,
    SubproblemSpec,
    solve_dl_acs,
    solve_rti,
    solve_weighted_concave,
)
from .utility import (
    AgentProfile,
    Allocation,
    CobbDouglasUtility,
    CurveSample,
    Mode,
    Scenario,
    eval_utility,
    fit_gamma,
    marginal_utility,
)

__version__ = "0.1.0"
