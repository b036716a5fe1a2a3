"""Energetic resilience of discrete-time LTI systems under finite-trace
temporal logic tasks: polytope sets, horizon lifting, a specification
language with convex constraint-plan expansion, an embedded QP solver, and
experiment tooling for case studies, sweeps, heatmaps, and validation."""

from .polytope import Polytope, contains, lift_polytope, row_support
from .system import HorizonLift, LtiSystem, build_lift, check_controllable, simulate
from .formula import (
    And,
    Atom,
    Always,
    Eventually,
    FalseFormula,
    Formula,
    Next,
    Not,
    Or,
    SpecError,
    TrajectoryTooShortError,
    TrueFormula,
    UnboundAtomError,
    Until,
    evaluate,
    mandatory_horizon,
    required_horizon,
    to_text,
)
from .parser import SpecSyntaxError, parse_spec
from .plans import (
    ConstraintPlan,
    HorizonExceededError,
    PlanCapExceededError,
    SynthesisUnsupportedError,
    enumerate_plans,
)
from .qp import (
    INFEASIBLE,
    MAX_ITERS,
    OPTIMAL,
    Qp,
    QpSolution,
    SolverSettings,
    dump_qp,
    kkt_residuals,
    solve_qp,
)
from .energetics import (
    ComposedBound,
    EnergyReport,
    EnergySolve,
    TIGHTEN_ROWWISE,
    TIGHTEN_UNIFORM,
    build_plan_qp,
    chained_component_reports,
    compose_bounds,
    energetic_resilience,
    malfunctioning_energy,
    nominal_energy,
    set_extension,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config, spec_hash
from .experiment import (
    MissingSolutionError,
    ResilienceRecord,
    RunOptions,
    ValidationSummary,
    monte_carlo_validate,
    run_experiment,
    run_heatmap,
    sweep_wbar,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
