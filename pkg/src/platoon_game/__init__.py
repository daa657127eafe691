"""Two-type (car/truck) departure-time congestion game.

Evaluates utilities, taxes and subsidies exactly; checks or refutes the
exact-potential property; learns pure Nash equilibria with joint and
average strategy fictitious play; and reproduces the full numerical
study behind the model (efficiency ratios, accident robustness,
platooning-coefficient sweeps, value-of-time groups, delayed taxes).
"""

from .game import (
    ActionProfile,
    AgentRef,
    CarAgent,
    GameConfig,
    GameError,
    InvalidProfileError,
    NashResult,
    Occupancy,
    PenaltyKind,
    PlatoonBenefit,
    PolicyMismatchError,
    Population,
    PricingPolicy,
    TruckAgent,
    VelocityModel,
    best_response,
    car_tax,
    car_utility,
    car_utility_table,
    is_nash,
    occupancy,
    penalty,
    truck_subsidy,
    truck_utility,
    truck_utility_table,
    velocity,
)
from .learning import (
    AsfpState,
    ForgettingSchedule,
    JsfpState,
    Perturbation,
    Trace,
    asfp_step,
    init_asfp,
    init_jsfp,
    jsfp_step,
    run,
)
from .metrics import Summary, car_group_counts, emit, optimal_social_cost, social_cost, summarize
from .potential import (
    CrossDifferenceReport,
    CycleWitness,
    PotentialDecision,
    SizeGuardError,
    cross_difference,
    delta_move,
    exact_potential_exists,
    potential_value,
    predicted_cross_mismatch,
)
from .runner import (
    ScenarioResult,
    SweepRow,
    VerifyReport,
    apply_sweep_param,
    run_scenario,
    run_sweep,
    verify_potential,
)
from .scenario import (
    AlphaDistribution,
    LearnerSettings,
    PreferenceDistribution,
    ScenarioError,
    ScenarioSpec,
    ValueOfTimeGroups,
    default_scenario,
    load_scenario,
    sample_population,
    save_scenario,
    scenario_from_document,
    scenario_to_document,
    with_seed,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
