"""Matrix-free MPRGP solver for box-constrained QPs with expansion-step variants."""

from .linop import (LinearOperator, NormEstimate, dense_operator, estimate_norm,
                    gram_operator, shifted_operator)
from .problem import (ActiveSetSnapshot, BoxQP, GradientSplit, InfeasiblePointError,
                      active_set, cost, gradient, load_problem, project, split_gradient)
from .solver import (DEFAULT_STRATEGIES, ExpansionStrategy, SolveReport, SolverConfig,
                     SolverError, StepRecord, max_feasible_step, parse_strategy, solve,
                     strategy_name)

__version__ = "0.1.0"
