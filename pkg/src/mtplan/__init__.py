"""Affinity-aware task graphs and task execution ordering for multitask inference."""

from .affinity import (
    AffinityTensor,
    DegenerateDataWarning,
    DissimilarityProfile,
    RepresentationProfile,
    affinity_from_dissimilarity,
    affinity_tensor,
    dissimilarity_profile,
    pearson_dissimilarity,
    spearman,
)
from .costmodel import CostMatrix, cost_matrix, path_cost, switching_cost, total_execution_cost
from .errors import (
    CapacityError,
    ConstraintError,
    DegenerateInputError,
    InputError,
    MtplanError,
    PrecedenceCycleError,
)
from .ordering import (
    GaParams,
    Objective,
    OrderingProblem,
    OrderingSolution,
    fitness,
    hamiltonian_reduction,
    precedence_feasible,
    solve,
    solve_exact,
    solve_ga,
)
from .taskgraph import (
    Block,
    BlockCostProfile,
    BranchPointConfig,
    TaskGraph,
    blocks_of,
    count_task_graphs,
    enumerate_task_graphs,
    model_size,
    variety_at_branch,
    variety_score,
)
from .tradeoff import GraphScore, TradeoffCurve, score_graph, select_intersection, sweep

__version__ = "0.1.0"
