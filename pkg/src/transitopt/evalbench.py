"""Out-of-sample design evaluation and the three benchmark pipelines.

``eval_design`` scores a design over fresh scenarios: served riders minus a
per-trip penalty for every scenario in which a core trip is left with no
feasible path. The benchmarks reuse the same compile/solve machinery with a
substituted scenario source: fixed-demand (current transit trips, one
deterministic scenario), threshold-deterministic (probabilities cut at 0.5),
and rule-based (hand-written choice models).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .choice import ChoiceModel, adopt_key, prob_adopt, prob_core
from .demand import TripPopulation
from .errors import StructureError
from .network import NetworkDesign, TransitGraph
from .optimizer import (
    CompiledModel,
    SolveResult,
    compile_model,
    solve_exact,
    solve_heuristic,
)
from .pathing import PathSet, path_feasible
from .scenario import (
    ADOPT_SLOT_BASE,
    CORE_SLOT,
    Scenario,
    ScenarioBundle,
    counter_uniforms,
    coverage_bound,
    sample_scenarios,
    trip_stream_key,
)


@dataclass
class EvalConfig:
    """Out-of-sample evaluation settings; seed must be disjoint from solve seeds."""

    i_prime: int = 1000
    penalty: float = 1.0
    per_trip_penalty: dict[str, float] = field(default_factory=dict)
    seed: int = 10_007
    chunk_size: int = 4096

    def penalty_for(self, trip_id: str) -> float:
        return self.per_trip_penalty.get(trip_id, self.penalty)


@dataclass
class EvalReport:
    eval_value: float
    violations: int               # scenario-trip pairs with an unserved core trip
    mean_coverage: float
    mean_core: float
    mean_latent: float
    mean_adopted: float
    adopted_pct: float
    mean_best_time_min: float
    n_scenarios: int


@dataclass
class _TripEvalData:
    riders: int
    penalty: float
    p_core: float
    has_feasible: bool
    best_time: float
    feasible_adopt_probs: list[float]
    feasible_ranks: list[int]
    stream_key: int


def _prepare_trips(design, population, pathset, core_model, adopt_model, config):
    prepared = []
    for trip in population.ordered():
        paths = pathset.paths(trip.id)
        feas_probs, feas_ranks = [], []
        best_time = float("inf")
        for rank, p in enumerate(paths):
            if not path_feasible(design, p):
                continue
            best_time = min(best_time, p.total_min)
            feas_probs.append(
                prob_adopt(adopt_model, trip.context, p.features, key=adopt_key(trip.id, p.id))
            )
            feas_ranks.append(rank)
        prepared.append(
            _TripEvalData(
                riders=trip.riders,
                penalty=config.penalty_for(trip.id),
                p_core=prob_core(core_model, trip.context, key=trip.id),
                has_feasible=bool(feas_ranks),
                best_time=best_time,
                feasible_adopt_probs=feas_probs,
                feasible_ranks=feas_ranks,
                stream_key=trip_stream_key(trip.id),
            )
        )
    return prepared


def eval_design(
    design: NetworkDesign,
    population: TripPopulation,
    pathset: PathSet,
    core_model: ChoiceModel,
    adopt_model: ChoiceModel,
    config: EvalConfig,
    bundle: ScenarioBundle | None = None,
) -> EvalReport:
    """Score a design over fresh scenarios (or replay a given bundle exactly).

    Per scenario and trip: a served core trip counts its riders; an unserved
    core trip counts zero and pays the penalty; a latent trip counts iff some
    feasible path was adopted. Scenario draws reuse the counter-based streams,
    vectorized over scenarios.
    """
    if bundle is not None:
        return _eval_on_bundle(design, population, pathset, config, bundle)
    if config.i_prime < 1:
        raise StructureError("i_prime must be >= 1")
    prepared = _prepare_trips(design, population, pathset, core_model, adopt_model, config)

    eval_sum = 0.0
    coverage_sum = 0.0
    violations = 0
    core_sum = 0
    latent_sum = 0
    adopted_sum = 0
    time_weight = 0.0
    time_sum = 0.0

    for lo in range(0, config.i_prime, config.chunk_size):
        idx = np.arange(lo, min(lo + config.chunk_size, config.i_prime))
        for data in prepared:
            core = counter_uniforms(config.seed, idx, data.stream_key, CORE_SLOT) < data.p_core
            n_core = int(core.sum())
            core_sum += n_core
            latent_sum += len(idx) - n_core
            if data.has_feasible:
                served_core = n_core
            else:
                served_core = 0
                violations += n_core
                eval_sum -= data.riders * data.penalty * n_core
            if data.feasible_ranks:
                adopt_any = np.zeros(len(idx), dtype=bool)
                for q, rank in zip(data.feasible_adopt_probs, data.feasible_ranks):
                    if q <= 0.0:
                        continue
                    draws = counter_uniforms(
                        config.seed, idx, data.stream_key, ADOPT_SLOT_BASE + rank
                    )
                    adopt_any |= draws < q
                n_adopted = int((adopt_any & ~core).sum())
            else:
                n_adopted = 0
            adopted_sum += n_adopted
            using = served_core + n_adopted
            coverage_sum += data.riders * using
            eval_sum += data.riders * using
            if using:
                time_weight += data.riders * using
                time_sum += data.riders * using * data.best_time

    n = config.i_prime
    mean_latent = latent_sum / n
    return EvalReport(
        eval_value=eval_sum / n,
        violations=violations,
        mean_coverage=coverage_sum / n,
        mean_core=core_sum / n,
        mean_latent=mean_latent,
        mean_adopted=adopted_sum / n,
        adopted_pct=(adopted_sum / n) / mean_latent if mean_latent > 0 else 0.0,
        mean_best_time_min=time_sum / time_weight if time_weight > 0 else 0.0,
        n_scenarios=n,
    )


def _eval_on_bundle(design, population, pathset, config, bundle):
    feasible: dict[str, list] = {}
    best_time: dict[str, float] = {}
    for trip in population.ordered():
        feas = [p for p in pathset.paths(trip.id) if path_feasible(design, p)]
        feasible[trip.id] = feas
        best_time[trip.id] = min((p.total_min for p in feas), default=float("inf"))

    eval_sum = coverage_sum = time_sum = time_weight = 0.0
    violations = core_sum = latent_sum = adopted_sum = 0
    for scenario in bundle.scenarios:
        for trip in population.ordered():
            feas = feasible[trip.id]
            if scenario.core[trip.id]:
                core_sum += 1
                if feas:
                    coverage_sum += trip.riders
                    eval_sum += trip.riders
                    time_weight += trip.riders
                    time_sum += trip.riders * best_time[trip.id]
                else:
                    violations += 1
                    eval_sum -= trip.riders * config.penalty_for(trip.id)
            else:
                latent_sum += 1
                if any(scenario.adopt.get((trip.id, p.id), False) for p in feas):
                    adopted_sum += 1
                    coverage_sum += trip.riders
                    eval_sum += trip.riders
                    time_weight += trip.riders
                    time_sum += trip.riders * best_time[trip.id]
    n = bundle.n_scenarios
    mean_latent = latent_sum / n
    return EvalReport(
        eval_value=eval_sum / n,
        violations=violations,
        mean_coverage=coverage_sum / n,
        mean_core=core_sum / n,
        mean_latent=mean_latent,
        mean_adopted=adopted_sum / n,
        adopted_pct=(adopted_sum / n) / mean_latent if mean_latent > 0 else 0.0,
        mean_best_time_min=time_sum / time_weight if time_weight > 0 else 0.0,
        n_scenarios=n,
    )


def closed_form_eval(
    design: NetworkDesign,
    population: TripPopulation,
    pathset: PathSet,
    core_model: ChoiceModel,
    adopt_model: ChoiceModel,
    config: EvalConfig,
) -> float:
    """Exact expectation of the eval score under the given choice models.

    Serves as the Monte-Carlo oracle: for trips with a feasible path this is
    riders * (p_core + (1-p_core)(1 - prod(1-q))); a trip with no feasible
    path contributes -penalty * p_core * riders.
    """
    from .choice import exact_usage_expectation

    total = 0.0
    for trip in population.ordered():
        feas = [p for p in pathset.paths(trip.id) if path_feasible(design, p)]
        p = prob_core(core_model, trip.context, key=trip.id)
        if feas:
            qs = [
                prob_adopt(adopt_model, trip.context, f.features, key=adopt_key(trip.id, f.id))
                for f in feas
            ]
            total += trip.riders * exact_usage_expectation(p, qs)
        else:
            total -= trip.riders * config.penalty_for(trip.id) * p
    return total


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def _solve(model: CompiledModel, solver: str, time_limit_s: float, seed: int,
           portfolio_size: int = 1) -> SolveResult:
    if solver == "exact":
        return solve_exact(model, time_limit_s=time_limit_s)
    if solver == "heuristic":
        return solve_heuristic(
            model, time_limit_s=time_limit_s, seed=seed, portfolio_size=portfolio_size
        )
    raise StructureError(f"unknown solver {solver!r}")


def benchmark_fd(
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    budget: float,
    solver: str = "exact",
    time_limit_s: float = 60.0,
    seed: int = 0,
) -> tuple[SolveResult, CompiledModel, ScenarioBundle]:
    """Fixed-demand: serve as many current transit trips as possible, no uncertainty.

    One deterministic scenario: every current transit trip is latent with all
    its paths adopted (used iff one stays feasible); driving trips are pruned
    away and never enter the model.
    """
    core: dict[str, bool] = {}
    adopt: dict[tuple[str, str], bool] = {}
    pruned: list[tuple[int, str]] = []
    for trip in population.ordered():
        core[trip.id] = False
        paths = pathset.paths(trip.id)
        if trip.current_mode != "transit" or not paths:
            pruned.append((0, trip.id))
            continue
        for p in paths:
            adopt[(trip.id, p.id)] = True
    bundle = ScenarioBundle(
        scenarios=[Scenario(0, core, adopt)],
        master_seed=0,
        scenario_seeds=[0],
        pruned=pruned,
        pre_infeasible=[],
        model_fingerprints={"source": "benchmark_fd"},
    )
    model = compile_model(graph, population, pathset, bundle, budget)
    return _solve(model, solver, time_limit_s, seed), model, bundle


def benchmark_deterministic(
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    core_model: ChoiceModel,
    adopt_model: ChoiceModel,
    budget: float,
    threshold: float = 0.5,
    solver: str = "exact",
    time_limit_s: float = 60.0,
    seed: int = 0,
) -> tuple[SolveResult, CompiledModel, ScenarioBundle]:
    """Threshold the choice probabilities at a fixed cut to get one scenario."""
    if not 0.0 <= threshold <= 1.0:
        raise StructureError("threshold must lie in [0, 1]")
    core: dict[str, bool] = {}
    adopt: dict[tuple[str, str], bool] = {}
    pruned: list[tuple[int, str]] = []
    pre_infeasible: list[tuple[int, str]] = []
    for trip in population.ordered():
        paths = pathset.paths(trip.id)
        p = prob_core(core_model, trip.context, key=trip.id)
        is_core = p >= threshold
        core[trip.id] = is_core
        if is_core:
            if not paths:
                pre_infeasible.append((0, trip.id))
            continue
        any_adopt = False
        for path in paths:
            q = prob_adopt(
                adopt_model, trip.context, path.features, key=adopt_key(trip.id, path.id)
            )
            d = q >= threshold
            adopt[(trip.id, path.id)] = d
            any_adopt = any_adopt or d
        if not any_adopt:
            pruned.append((0, trip.id))
    bundle = ScenarioBundle(
        scenarios=[Scenario(0, core, adopt)],
        master_seed=0,
        scenario_seeds=[0],
        pruned=pruned,
        pre_infeasible=pre_infeasible,
        model_fingerprints={"source": "benchmark_deterministic"},
    )
    model = compile_model(graph, population, pathset, bundle, budget)
    return _solve(model, solver, time_limit_s, seed), model, bundle


def benchmark_rulebased(
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    core_rule: ChoiceModel,
    adopt_rule: ChoiceModel,
    budget: float,
    n_scenarios: int = 50,
    solve_seed: int = 1,
    solver: str = "exact",
    time_limit_s: float = 60.0,
) -> tuple[SolveResult, CompiledModel, ScenarioBundle]:
    """Identical pipeline to the full method with rule models substituted."""
    bundle = sample_scenarios(population, pathset, core_rule, adopt_rule, n_scenarios, solve_seed)
    model = compile_model(graph, population, pathset, bundle, budget)
    return _solve(model, solver, time_limit_s, seed=solve_seed), model, bundle


# ---------------------------------------------------------------------------
# Comparison runs and the report rows
# ---------------------------------------------------------------------------


@dataclass
class BenchRow:
    name: str
    run_time_s: float
    opened_bus_arcs: int
    mean_core: float | None
    mean_latent: float | None
    mean_adopted: float | None
    adopted_pct: float | None
    coverage: float
    coverage_bound: float | None
    travel_time_min: float
    eval_value: float
    violations: int
    status: str


def _count_open_bus(design: NetworkDesign, graph: TransitGraph) -> int:
    return sum(
        1 for a, is_open in design.open.items() if is_open and graph.arcs[a].mode == "bus"
    )


def summarize_run(
    name: str,
    result: SolveResult,
    model: CompiledModel,
    bundle: ScenarioBundle,
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    eval_core_model: ChoiceModel,
    eval_adopt_model: ChoiceModel,
    eval_config: EvalConfig,
    demand_columns: bool = True,
) -> BenchRow:
    """One report row: in-sample stats from the solve bundle, Eval from I' scenarios.

    All runs are evaluated against the same pair of evaluation models so the
    Eval columns are a common yardstick; fixed-demand rows omit the
    core/latent/adopted columns (their solve model has no such split).
    """
    if result.design is None:
        raise StructureError(f"run {name} produced no design to summarize")
    in_sample = eval_design(
        result.design, population, pathset, eval_core_model, eval_adopt_model,
        eval_config, bundle=bundle,
    )
    out_sample = eval_design(
        result.design, population, pathset, eval_core_model, eval_adopt_model, eval_config
    )
    return BenchRow(
        name=name,
        run_time_s=result.wall_time_s,
        opened_bus_arcs=_count_open_bus(result.design, graph),
        mean_core=in_sample.mean_core if demand_columns else None,
        mean_latent=in_sample.mean_latent if demand_columns else None,
        mean_adopted=in_sample.mean_adopted if demand_columns else None,
        adopted_pct=in_sample.adopted_pct if demand_columns else None,
        coverage=result.objective if demand_columns else out_sample.mean_coverage,
        coverage_bound=coverage_bound(bundle, population, pathset) if demand_columns else None,
        travel_time_min=out_sample.mean_best_time_min,
        eval_value=out_sample.eval_value,
        violations=out_sample.violations,
        status=result.status,
    )


def run_benchmarks(
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    core_model: ChoiceModel,
    adopt_model: ChoiceModel,
    core_rule: ChoiceModel,
    adopt_rule: ChoiceModel,
    budget: float,
    n_scenarios: int = 50,
    solve_seed: int = 1,
    eval_config: EvalConfig | None = None,
    solver: str = "exact",
    time_limit_s: float = 120.0,
) -> list[BenchRow]:
    """Run FD, rule-based, deterministic, and the full pipeline; summarize rows."""
    eval_config = eval_config or EvalConfig()
    rows = []

    fd_result, fd_model, fd_bundle = benchmark_fd(
        graph, population, pathset, budget, solver=solver,
        time_limit_s=time_limit_s, seed=solve_seed,
    )
    rows.append(
        summarize_run(
            "fd", fd_result, fd_model, fd_bundle, graph, population, pathset,
            core_model, adopt_model, eval_config, demand_columns=False,
        )
    )

    rb_result, rb_model, rb_bundle = benchmark_rulebased(
        graph, population, pathset, core_rule, adopt_rule, budget,
        n_scenarios=n_scenarios, solve_seed=solve_seed, solver=solver,
        time_limit_s=time_limit_s,
    )
    rows.append(
        summarize_run(
            "rule_based", rb_result, rb_model, rb_bundle, graph, population, pathset,
            core_model, adopt_model, eval_config,
        )
    )

    det_result, det_model, det_bundle = benchmark_deterministic(
        graph, population, pathset, core_model, adopt_model, budget,
        solver=solver, time_limit_s=time_limit_s, seed=solve_seed,
    )
    rows.append(
        summarize_run(
            "deterministic", det_result, det_model, det_bundle, graph, population,
            pathset, core_model, adopt_model, eval_config,
        )
    )

    full_bundle = sample_scenarios(
        population, pathset, core_model, adopt_model, n_scenarios, solve_seed
    )
    full_model = compile_model(graph, population, pathset, full_bundle, budget)
    full_result = _solve(full_model, solver, time_limit_s, seed=solve_seed)
    rows.append(
        summarize_run(
            "full", full_result, full_model, full_bundle, graph, population, pathset,
            core_model, adopt_model, eval_config,
        )
    )
    return rows
