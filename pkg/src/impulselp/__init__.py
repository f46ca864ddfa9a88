"""Constrained impulse control of deterministic flows, solved through finite
occupation-measure linear programs."""
from .classifier import (AggregateValue, ClassificationError, DeterministicStationaryStrategy, VSet,
                         aggregate_value_iteration, compute_V, extract_fstar)
from .config import ConfigError, load_problem, problem_from_dict
from .extensions import (AggregatedMeasure, AuxPoint, aggregate_measure, g_map, metric_selftest, rho_hat)
from .lp import (LinearProgram, LPError, LPSolution, OccupationMeasure, build_restricted_lp, dump_lp,
                 lp_residuals, solve_lp)
from .mdp import CEMETERY, ActionGrid, FiniteMDP, build_mdp
from .pipeline import SolveOptions, SolveReport, solve, solve_problem
from .problem import (CriterionCost, DomainError, FiniteSpace, IntervalSpace, Problem, check_semigroup,
                      flow_eval, gradual_cost_integral, integrate_gradual)
from .simplex import simplex
from .strategy import (PerformanceVector, StationaryStrategy, disintegrate, evaluate_performance,
                       exact_occupation, monte_carlo_values, outperforms, simulate,
                       validate_optimality_certificate)
from .verify import (OracleReport, crosscheck, enumerate_deterministic_values, lagrangian_scan)

__version__ = "0.1.0"
