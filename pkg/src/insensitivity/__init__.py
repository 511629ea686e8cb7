"""Stationary laws, simulation and insensitivity checks for processor-sharing networks."""

from .balance import (
    OccupancyDistribution,
    check_finiteness,
    ctmc_oracle,
    solve_loss,
    solve_single_class,
    solve_spec,
    solve_traffic_equations,
    solve_whittle,
    verify_partial_balance,
)
from .distributions import EquilibriumDistribution, WorkloadDistribution, make_distribution
from .harness import (
    Arm,
    ExperimentPlan,
    Thresholds,
    estimate_occupancy,
    insensitivity_experiment,
    ks_statistic,
    residual_profile_check,
    sensitivity_control,
    tv_distance,
)
from .model import (
    Discipline,
    LinearConstraint,
    LossRates,
    NetworkSpec,
    SingleClassRates,
    TabulatedRates,
    WhittleRates,
    rate,
    transition,
    validate_spec,
)
from .sim import SimConfig, SimStats, SystemState, init_state, run, run_modified

__version__ = "0.1.0"
