"""Regional infectious-ward capacity planning toolkit.

Occupancy forecasting for hospital wards treated as infinite-server queues,
two linked two-stage stochastic programs for room opening/closing and
patient assignment (with an in-repo MILP solver), heuristic baseline rules,
and a Monte-Carlo simulation study comparing them.
"""

from .forecasting import FractionEstimate, RichardsFit, ewma_rate, fit_richards, predict_rate, update_fractions
from .milp import (
    AssignmentPlan,
    CostWeights,
    HospitalRooms,
    MilpModel,
    RoomLedger,
    RoomPlan,
    SP_B,
    SP_O,
    SP_R,
    build_sp1,
    build_sp2,
    decode_sp1,
    decode_sp2,
)
from .occupancy import (
    LosDistribution,
    RateCurve,
    WardRoster,
    conditional_expected_occupancy,
    kaplan_meier,
    offered_load,
    poisson_occupancy_pmf,
)
from .policies import DailyDecision, DecisionContext, assignment_overflow, forecast_cost, ih_decide, pu_decide, sp_decide
from .scenarios import AssignCountPmf, ScenarioSet, assign_count_pmf, collapse_scenarios, generate_scenarios
from .simulator import KpiTable, RuleConfig, SimConfig, compare_rules, run_replication, run_study
from .solver import LpSolution, MilpResult, solve_lp, solve_milp

__version__ = "0.1.0"
