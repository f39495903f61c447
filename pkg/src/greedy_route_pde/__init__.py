"""Greedy solver routing for hybrid iterative PDE solvers.

A toolkit for mixing classical iterative solvers (weighted Jacobi,
Gauss-Seidel, geometric multigrid) with a learned neural surrogate inside one
fixed-point iteration, choosing the solver applied at each step with either an
omniscient greedy rule, a fixed alternation schedule, or a trained recurrent
router. Includes a numerical verification harness for the greedy
suboptimality bound and the routing-loss surrogate.
"""

from .errors import GreedyRouteError
from .grid import Field, GridSpec, load_field, save_field
from .operators import (
    DiscreteOperator,
    EquationKind,
    apply_operator,
    build_operator,
    operator_spectrum,
    reference_solution,
    residual,
)
from .solvers import (
    MgConfig,
    SolverHandle,
    apply_solver,
    build_hierarchy,
    gauss_seidel_handle,
    jacobi_handle,
    multigrid_handle,
    neural_handle,
    vcycle_apply,
)
from .grf import Dataset, GrfSpec, generate_dataset, load_dataset, sample_grf, save_dataset
from .routing import (
    Ensemble,
    GreedyOracle,
    Hints,
    Learned,
    RouteTrace,
    SingleSolver,
    routing_loss,
    run_hybrid,
    step_costs,
    surrogate_grad,
    surrogate_loss,
)
from .training import TrainConfig, evaluate, train_deeponet, train_router

__version__ = "0.1.0"

__all__ = [
    "GreedyRouteError", "Field", "GridSpec", "load_field", "save_field",
    "DiscreteOperator", "EquationKind", "apply_operator", "build_operator",
    "operator_spectrum", "reference_solution", "residual",
    "MgConfig", "SolverHandle", "apply_solver", "build_hierarchy",
    "jacobi_handle", "gauss_seidel_handle", "multigrid_handle",
    "neural_handle", "vcycle_apply",
    "Dataset", "GrfSpec", "generate_dataset", "load_dataset", "sample_grf",
    "save_dataset",
    "Ensemble", "SingleSolver", "Hints", "GreedyOracle", "Learned",
    "RouteTrace", "run_hybrid", "step_costs", "routing_loss",
    "surrogate_loss", "surrogate_grad",
    "TrainConfig", "train_deeponet", "train_router", "evaluate",
    "__version__",
]
