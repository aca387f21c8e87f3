"""Transit network design under two-level rider-choice uncertainty."""

from .network import (
    Arc,
    NetworkDesign,
    Node,
    TransitGraph,
    budget_cost,
    check_design_feasibility,
    check_flow_balance,
)
from .demand import Trip, TripPopulation, coverage
from .choice import (
    ChoiceModel,
    LogitModel,
    PathFeatures,
    StationProximityCoreRule,
    TableModel,
    TravelTimeAdoptRule,
    compose_usage,
    exact_usage_expectation,
    prob_adopt,
    prob_core,
    train_logit,
)
from .pathing import AccessGraph, PathSet, TransitPath, build_access_graph, enumerate_paths, path_feasible
from .scenario import Scenario, ScenarioBundle, coverage_bound, sample_scenarios
from .optimizer import (
    CompiledModel,
    SolveResult,
    compile_model,
    evaluate_in_sample,
    solve_exact,
    solve_heuristic,
)
from .modelio import export_model, read_solution, verify_solution
from .evalbench import (
    EvalConfig,
    EvalReport,
    benchmark_deterministic,
    benchmark_fd,
    benchmark_rulebased,
    eval_design,
    run_benchmarks,
)
from .instgen import GenSpec, generate, preset

__version__ = "0.1.0"
