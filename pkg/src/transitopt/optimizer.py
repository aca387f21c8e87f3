"""Compile the scenario-averaged design model and solve it.

The compiled form keeps three variable groups: one open/close decision per
non-fixed arc, one feasibility indicator per distinct transit arc sequence
appearing in any considered path, and one adoption indicator per (scenario,
latent trip) that sampled at least one adopted path. Core trips contribute a
constant to the objective but impose the hard requirement that at least one
of their considered paths stays feasible.

Two solvers are provided: an exact branch-and-bound over the free arcs
(intended for small instances) and a greedy construction plus
large-neighborhood-search heuristic built on flow-balanced move units
(reverse arc pairs and short same-mode cycles).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .demand import TripPopulation
from .errors import InfeasibleError, StructureError
from .network import NetworkDesign, TransitGraph, check_design_feasibility
from .pathing import PathSet
from .scenario import ScenarioBundle


@dataclass(frozen=True)
class PathVar:
    """Feasibility variable for one distinct transit arc sequence."""

    index: int
    arc_ids: tuple[str, ...]        # all transit arcs, fixed included
    needed_free: tuple[str, ...]    # the non-fixed subset; empty means constant-open


@dataclass(frozen=True)
class LatentTerm:
    """Objective term e_r * d for one (scenario, latent trip) with adopted paths."""

    scenario: int
    trip_id: str
    riders: int
    adopted: tuple[int, ...]  # PathVar indexes of adopted paths with transit legs
    always: bool              # some adopted path is constant-open (pure walk)


@dataclass(frozen=True)
class CoreRequirement:
    """A trip that is core in >= 1 scenario must keep one considered path open."""

    trip_id: str
    options: tuple[int, ...]  # PathVar indexes over the full considered set
    always: bool              # a pure-walk path serves it under any design
    scenarios: tuple[int, ...]


@dataclass
class CompiledModel:
    graph: TransitGraph
    budget: float
    n_scenarios: int
    free_arcs: tuple[str, ...]
    path_vars: list[PathVar]
    core_reqs: list[CoreRequirement]
    latent_terms: list[LatentTerm]
    scen_core: list[tuple[str, ...]]        # core trip ids per scenario (export/replay)
    riders: dict[str, int]
    const_weight_int: int                    # served-core weight + always-adopt weight
    pruned: list[tuple[int, str]]
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def root_bound_int(self) -> int:
        return self.const_weight_int + sum(t.riders for t in self.latent_terms if not t.always)

    def objective_value(self, objective_int: int) -> float:
        if self.n_scenarios == 0:
            return 0.0
        return objective_int / self.n_scenarios


@dataclass
class SolveResult:
    design: NetworkDesign | None
    objective: float
    objective_int: int
    bound: float
    status: str  # optimal | feasible | infeasible | timeout
    wall_time_s: float
    stats: dict[str, int] = field(default_factory=dict)


def compile_model(
    graph: TransitGraph,
    population: TripPopulation,
    pathset: PathSet,
    bundle: ScenarioBundle,
    budget: float,
) -> CompiledModel:
    """Build the solver form of the design model for one scenario bundle."""
    if bundle.pre_infeasible:
        raise InfeasibleError(
            "core trips with empty path sets can never be served: "
            f"{bundle.pre_infeasible[:5]}",
            bundle.pre_infeasible,
        )
    for group, members in graph.pair_arcs.items():
        n_fixed = sum(1 for a in members if graph.arcs[a].is_fixed)
        if n_fixed > 1:
            raise InfeasibleError(f"pair group {group} holds {n_fixed} fixed arcs")

    free = set(graph.free_arc_ids)
    path_vars: list[PathVar] = []
    seq_index: dict[tuple[str, ...], int] = {}

    def var_for(arc_ids: tuple[str, ...]) -> int | None:
        if not arc_ids:  # pure walk: constant-open, no variable
            return None
        if arc_ids in seq_index:
            return seq_index[arc_ids]
        idx = len(path_vars)
        needed = tuple(a for a in arc_ids if a in free)
        path_vars.append(PathVar(index=idx, arc_ids=arc_ids, needed_free=needed))
        seq_index[arc_ids] = idx
        return idx

    path_var_of: dict[tuple[str, str], int | None] = {}
    for trip in population.ordered():
        for p in pathset.paths(trip.id):
            path_var_of[(trip.id, p.id)] = var_for(p.arc_ids)

    pruned_set = set(bundle.pruned)
    core_weight = 0
    always_latent_weight = 0
    latent_terms: list[LatentTerm] = []
    scen_core: list[tuple[str, ...]] = []
    core_scenarios: dict[str, list[int]] = {}

    for scenario in bundle.scenarios:
        core_ids = []
        for trip in population.ordered():
            if scenario.core[trip.id]:
                core_ids.append(trip.id)
                core_weight += trip.riders
                core_scenarios.setdefault(trip.id, []).append(scenario.index)
                continue
            if (scenario.index, trip.id) in pruned_set:
                continue
            adopted_vars = []
            always = False
            for p in pathset.paths(trip.id):
                if not scenario.adopt.get((trip.id, p.id), False):
                    continue
                idx = path_var_of[(trip.id, p.id)]
                if idx is None:
                    always = True
                else:
                    adopted_vars.append(idx)
            if always:
                always_latent_weight += trip.riders
            latent_terms.append(
                LatentTerm(
                    scenario=scenario.index,
                    trip_id=trip.id,
                    riders=trip.riders,
                    adopted=tuple(sorted(set(adopted_vars))),
                    always=always,
                )
            )
        scen_core.append(tuple(core_ids))

    core_reqs = []
    for trip_id in sorted(core_scenarios):
        options = []
        always = False
        for p in pathset.paths(trip_id):
            idx = path_var_of[(trip_id, p.id)]
            if idx is None:
                always = True
            else:
                options.append(idx)
        core_reqs.append(
            CoreRequirement(
                trip_id=trip_id,
                options=tuple(sorted(set(options))),
                always=always,
                scenarios=tuple(core_scenarios[trip_id]),
            )
        )

    counts = {
        "z_vars": len(graph.free_arc_ids),
        "f_vars": len(path_vars),
        "d_vars": len(latent_terms),
        "and_upper_rows": sum(len(pv.arc_ids) for pv in path_vars),
        "and_lower_rows": len(path_vars),
        "or_rows": sum(1 + len(t.adopted) for t in latent_terms if not t.always),
        "core_rows": sum(len(ids) for ids in scen_core),
        "budget_rows": 1,
        "fixed_rows": len(graph.fixed_arc_ids),
        "flow_rows": len(set(graph.out_arcs) | set(graph.in_arcs)),
        "pair_rows": sum(1 for g in graph.pair_arcs.values() if len(g) > 1),
    }
    return CompiledModel(
        graph=graph,
        budget=budget,
        n_scenarios=bundle.n_scenarios,
        free_arcs=tuple(graph.free_arc_ids),
        path_vars=path_vars,
        core_reqs=core_reqs,
        latent_terms=latent_terms,
        scen_core=scen_core,
        riders={t.id: t.riders for t in population.trips.values()},
        const_weight_int=core_weight + always_latent_weight,
        pruned=list(bundle.pruned),
        counts=counts,
    )


# ---------------------------------------------------------------------------
# In-sample replay
# ---------------------------------------------------------------------------


def feasible_path_vars(model: CompiledModel, design: NetworkDesign) -> list[bool]:
    return [all(design.open[a] for a in pv.needed_free) for pv in model.path_vars]


def evaluate_in_sample(design: NetworkDesign, model: CompiledModel) -> float:
    """Replay the compiled objective for a design; must match the solver's value.

    Raises InfeasibleError listing (scenario, trip) pairs if the design leaves
    a core trip without any feasible considered path.
    """
    f_open = feasible_path_vars(model, design)
    witnesses = []
    for req in model.core_reqs:
        if req.always or any(f_open[i] for i in req.options):
            continue
        witnesses.extend((i, req.trip_id) for i in req.scenarios)
    if witnesses:
        raise InfeasibleError(
            f"design leaves core trips unserved in {len(witnesses)} scenario-trip pairs",
            sorted(witnesses),
        )
    total = model.const_weight_int
    for term in model.latent_terms:
        if not term.always and any(f_open[i] for i in term.adopted):
            total += term.riders
    return model.objective_value(total)


def _design_from_open_free(model: CompiledModel, open_free) -> NetworkDesign:
    open_ids = set(model.graph.fixed_arc_ids) | set(open_free)
    return NetworkDesign.from_open_ids(model.graph, open_ids)


def _verify_emitted(model: CompiledModel, design: NetworkDesign) -> None:
    report = check_design_feasibility(design, model.graph, model.budget)
    if not report.is_feasible:
        raise StructureError(
            f"solver produced an infeasible design (families: {report.families()})"
        )


# ---------------------------------------------------------------------------
# Exact branch and bound
# ---------------------------------------------------------------------------


def solve_exact(model: CompiledModel, time_limit_s: float | None = None) -> SolveResult:
    """Branch and bound over the free arcs; provably optimal designs.

    Prunes on budget, on dead core trips, on unrepairable flow imbalance, and
    on the optimistic bound (all undecided arcs treated as open). Bound-equal
    subtrees are still explored so that ties resolve to the lexicographically
    smallest open-arc set.
    """
    start = time.monotonic()
    graph = model.graph
    arcs = list(model.free_arcs)
    n_arcs = len(arcs)

    paths_hit = [0] * len(model.path_vars)  # closed needed arcs per path var
    arc_to_paths: dict[str, list[int]] = {a: [] for a in arcs}
    for pv in model.path_vars:
        for a in pv.needed_free:
            arc_to_paths[a].append(pv.index)
    path_to_core: dict[int, list[int]] = {}
    core_alive = []
    for ci, req in enumerate(model.core_reqs):
        core_alive.append(-1 if req.always else len(req.options))
        if not req.always:
            for idx in req.options:
                path_to_core.setdefault(idx, []).append(ci)
    path_to_terms: dict[int, list[int]] = {}
    term_alive = []
    term_riders = []
    for ti, term in enumerate(model.latent_terms):
        if term.always:
            term_alive.append(-1)
            term_riders.append(0)
            continue
        term_alive.append(len(term.adopted))
        term_riders.append(term.riders)
        for idx in term.adopted:
            path_to_terms.setdefault(idx, []).append(ti)

    sum_alive = sum(r for r, a in zip(term_riders, term_alive) if a > 0)
    dead_core = sum(1 for a in core_alive if a == 0)

    imbalance: dict[tuple[str, str], int] = {}
    out_cap: dict[tuple[str, str], int] = {}
    in_cap: dict[tuple[str, str], int] = {}
    for a in graph.fixed_arc_ids:
        arc = graph.arcs[a]
        ko, kd = (arc.origin, arc.mode), (arc.dest, arc.mode)
        imbalance[ko] = imbalance.get(ko, 0) + arc.frequency
        imbalance[kd] = imbalance.get(kd, 0) - arc.frequency
    for a in arcs:
        arc = graph.arcs[a]
        ko, kd = (arc.origin, arc.mode), (arc.dest, arc.mode)
        out_cap[ko] = out_cap.get(ko, 0) + arc.frequency
        in_cap[kd] = in_cap.get(kd, 0) + arc.frequency

    def key_ok(key) -> bool:
        imb = imbalance.get(key, 0)
        return imb <= in_cap.get(key, 0) and -imb <= out_cap.get(key, 0)

    n_bad = sum(
        0 if key_ok(k) else 1 for k in set(imbalance) | set(out_cap) | set(in_cap)
    )

    group_open: dict[tuple[str, str, str], int] = {}
    group_of: dict[str, tuple[str, str, str]] = {}
    for a in arcs:
        arc = graph.arcs[a]
        group_of[a] = (arc.origin, arc.dest, arc.mode)
        group_open.setdefault(group_of[a], 0)
    for a in graph.fixed_arc_ids:
        arc = graph.arcs[a]
        g = (arc.origin, arc.dest, arc.mode)
        if g in group_open:
            group_open[g] += 1

    cost_open = sum(graph.arcs[a].cost for a in graph.fixed_arc_ids)
    open_flags = [False] * n_arcs
    best_int = -1
    best_open: tuple[str, ...] | None = None
    stats = {"nodes": 0, "leaves": 0, "incumbents": 0}
    state = {"timed_out": False, "cost": cost_open, "sum_alive": sum_alive,
             "dead_core": dead_core, "n_bad": n_bad}

    def touch_caps(arc, opened: bool, sign: int) -> None:
        ko, kd = (arc.origin, arc.mode), (arc.dest, arc.mode)
        was = (key_ok(ko), key_ok(kd))
        out_cap[ko] = out_cap.get(ko, 0) - sign * arc.frequency
        in_cap[kd] = in_cap.get(kd, 0) - sign * arc.frequency
        if opened:
            imbalance[ko] = imbalance.get(ko, 0) + sign * arc.frequency
            imbalance[kd] = imbalance.get(kd, 0) - sign * arc.frequency
        for key, was_ok in zip((ko, kd), was):
            now_ok = key_ok(key)
            if was_ok and not now_ok:
                state["n_bad"] += 1
            elif not was_ok and now_ok:
                state["n_bad"] -= 1

    def kill_paths(arc_id: str, killed: list[int]) -> None:
        for p in arc_to_paths[arc_id]:
            paths_hit[p] += 1
            if paths_hit[p] == 1:
                killed.append(p)
                for ci in path_to_core.get(p, ()):
                    core_alive[ci] -= 1
                    if core_alive[ci] == 0:
                        state["dead_core"] += 1
                for ti in path_to_terms.get(p, ()):
                    term_alive[ti] -= 1
                    if term_alive[ti] == 0:
                        state["sum_alive"] -= term_riders[ti]

    def revive_paths(arc_id: str, killed: list[int]) -> None:
        for p in arc_to_paths[arc_id]:
            paths_hit[p] -= 1
        for p in killed:
            for ci in path_to_core.get(p, ()):
                if core_alive[ci] == 0:
                    state["dead_core"] -= 1
                core_alive[ci] += 1
            for ti in path_to_terms.get(p, ()):
                if term_alive[ti] == 0:
                    state["sum_alive"] += term_riders[ti]
                term_alive[ti] += 1

    def dfs(depth: int) -> None:
        nonlocal best_int, best_open
        if state["timed_out"]:
            return
        stats["nodes"] += 1
        if time_limit_s is not None and stats["nodes"] % 256 == 0:
            if time.monotonic() - start > time_limit_s:
                state["timed_out"] = True
                return
        if state["n_bad"] > 0 or state["dead_core"] > 0:
            return
        if state["cost"] > model.budget + 1e-9:
            return
        bound = model.const_weight_int + state["sum_alive"]
        if bound < best_int:
            return
        if depth == n_arcs:
            stats["leaves"] += 1
            open_ids = tuple(
                sorted(
                    list(graph.fixed_arc_ids)
                    + [a for a, flag in zip(arcs, open_flags) if flag]
                )
            )
            if bound > best_int or (
                bound == best_int and (best_open is None or open_ids < best_open)
            ):
                best_int = bound
                best_open = open_ids
                stats["incumbents"] += 1
            return

        arc_id = arcs[depth]
        arc = graph.arcs[arc_id]
        group = group_of[arc_id]

        if group_open[group] == 0:  # open branch, unless pair group already taken
            open_flags[depth] = True
            group_open[group] += 1
            state["cost"] += arc.cost
            touch_caps(arc, True, +1)
            dfs(depth + 1)
            touch_caps(arc, True, -1)
            state["cost"] -= arc.cost
            group_open[group] -= 1
            open_flags[depth] = False

        killed: list[int] = []
        kill_paths(arc_id, killed)
        touch_caps(arc, False, +1)
        dfs(depth + 1)
        touch_caps(arc, False, -1)
        revive_paths(arc_id, killed)

    dfs(0)
    wall = time.monotonic() - start
    root_bound = model.objective_value(model.root_bound_int)
    if best_open is None:
        status = "timeout" if state["timed_out"] else "infeasible"
        return SolveResult(None, 0.0, 0, root_bound, status, wall, stats)
    design = NetworkDesign.from_open_ids(graph, best_open)
    _verify_emitted(model, design)
    objective = model.objective_value(best_int)
    if state["timed_out"]:
        return SolveResult(design, objective, best_int, root_bound, "timeout", wall, stats)
    return SolveResult(design, objective, best_int, objective, "optimal", wall, stats)


# ---------------------------------------------------------------------------
# Greedy + large neighborhood search heuristic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Move:
    """A flow-balanced set of free arcs opened or closed atomically."""

    arc_ids: tuple[str, ...]
    cost: float


def build_moves(model: CompiledModel) -> list[Move]:
    """Reverse pairs where both directions exist; otherwise short same-mode cycles."""
    graph = model.graph
    free = set(model.free_arcs)
    by_endpoint: dict[tuple[str, str, str, int], list[str]] = {}
    for a in model.free_arcs:
        arc = graph.arcs[a]
        by_endpoint.setdefault((arc.origin, arc.dest, arc.mode, arc.frequency), []).append(a)
    moves: dict[tuple[str, ...], Move] = {}
    unpaired = []
    for a in model.free_arcs:
        arc = graph.arcs[a]
        partners = by_endpoint.get((arc.dest, arc.origin, arc.mode, arc.frequency), [])
        if partners:
            pair = tuple(sorted((a, partners[0])))
            if pair not in moves:
                moves[pair] = Move(pair, sum(graph.arcs[x].cost for x in pair))
        else:
            unpaired.append(a)
    for a in unpaired:  # depth-capped BFS for a directed uniform-frequency cycle
        arc = graph.arcs[a]
        target = arc.origin
        frontier: list[tuple[str, tuple[str, ...]]] = [(arc.dest, (a,))]
        found: tuple[str, ...] | None = None
        while frontier and found is None:
            next_frontier = []
            for node, trail in frontier:
                for b in sorted(graph.out_arcs.get((node, arc.mode), ())):
                    if b not in free or b in trail:
                        continue
                    nxt = graph.arcs[b]
                    if nxt.frequency != arc.frequency:
                        continue
                    if nxt.dest == target:
                        found = tuple(sorted(trail + (b,)))
                        break
                    if len(trail) < 4:
                        next_frontier.append((nxt.dest, trail + (b,)))
                if found:
                    break
            frontier = next_frontier
        if found and found not in moves:
            moves[found] = Move(found, sum(graph.arcs[x].cost for x in found))
    return [moves[k] for k in sorted(moves)]


class _CoverState:
    """Incremental objective/core bookkeeping over open moves."""

    def __init__(self, model: CompiledModel, moves: list[Move]):
        self.model = model
        self.moves = moves
        graph = model.graph
        self.move_of_arc: dict[str, int] = {}
        for mi, move in enumerate(moves):
            for a in move.arc_ids:
                self.move_of_arc.setdefault(a, mi)
        self.arc_to_paths: dict[str, list[int]] = {}
        for pv in model.path_vars:
            for a in pv.needed_free:
                self.arc_to_paths.setdefault(a, []).append(pv.index)
        self.path_to_terms: dict[int, list[int]] = {}
        self.term_cover: list[int] = []
        self.term_riders: list[int] = []
        for ti, term in enumerate(model.latent_terms):
            self.term_cover.append(-1 if term.always else 0)
            self.term_riders.append(0 if term.always else term.riders)
            if not term.always:
                for idx in term.adopted:
                    self.path_to_terms.setdefault(idx, []).append(ti)
        self.path_to_core: dict[int, list[int]] = {}
        self.core_cover: list[int] = []
        for ci, req in enumerate(model.core_reqs):
            self.core_cover.append(-1 if req.always else 0)
            if not req.always:
                for idx in req.options:
                    self.path_to_core.setdefault(idx, []).append(ci)
        self.missing = [len(pv.needed_free) for pv in model.path_vars]
        self.covered_sum = 0
        self.n_core_served = sum(1 for c in self.core_cover if c == -1)
        self.n_core = len(model.core_reqs)
        # constant-open paths (needed_free empty) cover their referees up front
        for pv in model.path_vars:
            if not pv.needed_free:
                self._path_opened(pv.index)
        self.arc_ref: dict[str, int] = {}
        self.open_move_set: set[int] = set()
        self.cost = sum(graph.arcs[a].cost for a in graph.fixed_arc_ids)
        self.group_taken: dict[tuple[str, str, str], int] = {}
        for a in graph.fixed_arc_ids:
            arc = graph.arcs[a]
            key = (arc.origin, arc.dest, arc.mode)
            self.group_taken[key] = self.group_taken.get(key, 0) + 1

    # -- path/term transitions ------------------------------------------------
    def _path_opened(self, p: int) -> None:
        for ti in self.path_to_terms.get(p, ()):
            self.term_cover[ti] += 1
            if self.term_cover[ti] == 1:
                self.covered_sum += self.term_riders[ti]
        for ci in self.path_to_core.get(p, ()):
            self.core_cover[ci] += 1
            if self.core_cover[ci] == 1:
                self.n_core_served += 1

    def _path_closed(self, p: int) -> None:
        for ti in self.path_to_terms.get(p, ()):
            if self.term_cover[ti] == 1:
                self.covered_sum -= self.term_riders[ti]
            self.term_cover[ti] -= 1
        for ci in self.path_to_core.get(p, ()):
            if self.core_cover[ci] == 1:
                self.n_core_served -= 1
            self.core_cover[ci] -= 1

    def _open_arc(self, a: str) -> None:
        self.cost += self.model.graph.arcs[a].cost
        arc = self.model.graph.arcs[a]
        key = (arc.origin, arc.dest, arc.mode)
        self.group_taken[key] = self.group_taken.get(key, 0) + 1
        for p in self.arc_to_paths.get(a, ()):
            self.missing[p] -= 1
            if self.missing[p] == 0:
                self._path_opened(p)

    def _close_arc(self, a: str) -> None:
        self.cost -= self.model.graph.arcs[a].cost
        arc = self.model.graph.arcs[a]
        key = (arc.origin, arc.dest, arc.mode)
        self.group_taken[key] -= 1
        for p in self.arc_to_paths.get(a, ()):
            if self.missing[p] == 0:
                self._path_closed(p)
            self.missing[p] += 1

    # -- move operations -------------------------------------------------------
    def open_move(self, mi: int) -> None:
        if mi in self.open_move_set:
            return
        self.open_move_set.add(mi)
        for a in self.moves[mi].arc_ids:
            self.arc_ref[a] = self.arc_ref.get(a, 0) + 1
            if self.arc_ref[a] == 1:
                self._open_arc(a)

    def close_move(self, mi: int) -> None:
        if mi not in self.open_move_set:
            return
        self.open_move_set.discard(mi)
        for a in self.moves[mi].arc_ids:
            self.arc_ref[a] -= 1
            if self.arc_ref[a] == 0:
                self._close_arc(a)

    def marginal_cost(self, mi: int) -> float:
        return sum(
            self.model.graph.arcs[a].cost
            for a in self.moves[mi].arc_ids
            if self.arc_ref.get(a, 0) == 0
        )

    def move_conflicts(self, mi: int) -> bool:
        for a in self.moves[mi].arc_ids:
            if self.arc_ref.get(a, 0) > 0:
                continue
            arc = self.model.graph.arcs[a]
            if self.group_taken.get((arc.origin, arc.dest, arc.mode), 0) > 0:
                return True
        return False

    def objective_int(self) -> int:
        return self.model.const_weight_int + self.covered_sum

    def all_core_served(self) -> bool:
        return self.n_core_served == self.n_core

    def open_arc_ids(self) -> tuple[str, ...]:
        return tuple(sorted(a for a, r in self.arc_ref.items() if r > 0))

    def set_open_moves(self, target: set[int]) -> None:
        for mi in sorted(self.open_move_set - target):
            self.close_move(mi)
        for mi in sorted(target - self.open_move_set):
            self.open_move(mi)


def _serve_core(state: _CoverState, budget: float) -> bool:
    """Open the cheapest move completion for each unserved core trip."""
    model = state.model
    for ci, req in enumerate(model.core_reqs):
        if state.core_cover[ci] != 0:
            continue
        best: tuple[float, tuple[int, ...]] | None = None
        for idx in req.options:
            needed: set[int] = set()
            impossible = False
            for a in model.path_vars[idx].needed_free:
                if state.arc_ref.get(a, 0) > 0:
                    continue
                mi = state.move_of_arc.get(a)
                if mi is None:
                    impossible = True
                    break
                needed.add(mi)
            if impossible:
                continue
            closed = tuple(sorted(m for m in needed if m not in state.open_move_set))
            if any(state.move_conflicts(m) for m in closed):
                continue
            extra = sum(state.marginal_cost(m) for m in closed)
            key = (extra, closed)
            if best is None or key < best:
                best = key
        if best is None or state.cost + best[0] > budget + 1e-9:
            return False
        for mi in best[1]:
            state.open_move(mi)
    return True


def _greedy_fill(state: _CoverState, budget: float) -> None:
    while True:
        base = state.objective_int()
        best: tuple[float, float, int] | None = None
        for mi in range(len(state.moves)):
            if mi in state.open_move_set or state.move_conflicts(mi):
                continue
            cost = state.marginal_cost(mi)
            if state.cost + cost > budget + 1e-9:
                continue
            state.open_move(mi)
            gain = state.objective_int() - base
            state.close_move(mi)
            if gain <= 0:
                continue
            ratio = gain / cost if cost > 0 else float("inf")
            key = (-ratio, cost, mi)
            if best is None or key < best:
                best = key
        if best is None:
            return
        state.open_move(best[2])


def _reoptimize_pool(state: _CoverState, budget: float, pool_cap: int = 12) -> None:
    """Exactly re-optimize the freed budget over a bounded pool of closed moves."""
    model = state.model
    base = state.objective_int()
    scored = []
    for mi in range(len(state.moves)):
        if mi in state.open_move_set or state.move_conflicts(mi):
            continue
        cost = state.marginal_cost(mi)
        if state.cost + cost > budget + 1e-9:
            continue
        state.open_move(mi)
        gain = state.objective_int() - base
        state.close_move(mi)
        if gain > 0:
            scored.append((-gain / max(cost, 1e-9), mi))
    scored.sort()
    pool = [mi for _, mi in scored[:pool_cap]]
    if not pool:
        return

    pool_arc_mask: dict[str, int] = {}
    for bit, mi in enumerate(pool):
        for a in state.moves[mi].arc_ids:
            if state.arc_ref.get(a, 0) == 0:
                pool_arc_mask[a] = pool_arc_mask.get(a, 0) | (1 << bit)
    # per uncovered term: lists of per-arc masks, one list per adopted path
    term_requirements: list[tuple[int, list[list[int]]]] = []
    for ti, term in enumerate(model.latent_terms):
        if term.always or state.term_cover[ti] > 0:
            continue
        options: list[list[int]] = []
        for idx in term.adopted:
            if state.missing[idx] == 0:
                options = [[]]
                break
            masks = []
            feasible = True
            for a in model.path_vars[idx].needed_free:
                if state.arc_ref.get(a, 0) > 0:
                    continue
                m = pool_arc_mask.get(a, 0)
                if m == 0:
                    feasible = False
                    break
                masks.append(m)
            if feasible:
                options.append(masks)
        if options:
            term_requirements.append((term.riders, options))

    arc_sets = [
        frozenset(a for a in state.moves[mi].arc_ids if state.arc_ref.get(a, 0) == 0)
        for mi in pool
    ]
    arc_cost = {a: model.graph.arcs[a].cost for s in arc_sets for a in s}
    remaining = budget - state.cost
    best_mask, best_gain = 0, 0
    for mask in range(1, 1 << len(pool)):
        chosen: set[str] = set()
        for b in range(len(pool)):
            if mask >> b & 1:
                chosen |= arc_sets[b]
        cost = sum(arc_cost[a] for a in chosen)
        if cost > remaining + 1e-9:
            continue
        gain = 0
        for riders, options in term_requirements:
            for masks in options:
                if all(m & mask for m in masks):
                    gain += riders
                    break
        if gain > best_gain or (gain == best_gain and gain > 0 and mask < best_mask):
            best_gain, best_mask = gain, mask
    for b, mi in enumerate(pool):
        if best_mask >> b & 1:
            state.open_move(mi)


def solve_heuristic(
    model: CompiledModel,
    time_limit_s: float = 60.0,
    seed: int = 0,
    portfolio_size: int = 1,
    lns_iterations: int = 60,
) -> SolveResult:
    """Greedy construction plus LNS; returns a feasible (never claimed optimal) design.

    Construction opens the cheapest flow-balanced move completions for core
    trips, then repeatedly adds the move with the best marginal riders per
    cost. Improvement rounds close a random subset of open moves, restore core
    service, and re-optimize the freed budget exactly over a bounded move
    pool. Deterministic given the seed and portfolio size.
    """
    start = time.monotonic()
    moves = build_moves(model)
    stats = {"moves": len(moves), "lns_rounds": 0, "portfolio": max(1, portfolio_size)}
    best: tuple[int, tuple[str, ...]] | None = None

    for member in range(max(1, portfolio_size)):
        rng = np.random.default_rng(seed + member)
        state = _CoverState(model, moves)
        if not _serve_core(state, model.budget):
            continue
        _greedy_fill(state, model.budget)
        inc_obj = state.objective_int()
        inc_moves = set(state.open_move_set)
        inc_open = state.open_arc_ids()

        for _ in range(lns_iterations):
            if time.monotonic() - start > time_limit_s:
                break
            stats["lns_rounds"] += 1
            open_list = sorted(state.open_move_set)
            if not open_list:
                break
            k = min(len(open_list), int(rng.integers(1, 5)))
            chosen = rng.choice(len(open_list), size=k, replace=False)
            for pos in sorted(chosen, reverse=True):
                state.close_move(open_list[pos])
            if not _serve_core(state, model.budget):
                state.set_open_moves(inc_moves)
                continue
            _reoptimize_pool(state, model.budget)
            _greedy_fill(state, model.budget)
            obj = state.objective_int()
            open_ids = state.open_arc_ids()
            if obj > inc_obj or (obj == inc_obj and open_ids < inc_open):
                inc_obj = obj
                inc_moves = set(state.open_move_set)
                inc_open = open_ids
            else:
                state.set_open_moves(inc_moves)

        if best is None or inc_obj > best[0] or (inc_obj == best[0] and inc_open < best[1]):
            best = (inc_obj, inc_open)

    wall = time.monotonic() - start
    root_bound = model.objective_value(model.root_bound_int)
    if best is None:
        return SolveResult(None, 0.0, 0, root_bound, "infeasible", wall, stats)
    design = _design_from_open_free(model, best[1])
    _verify_emitted(model, design)
    evaluate_in_sample(design, model)  # raises if core serving regressed
    return SolveResult(
        design, model.objective_value(best[0]), best[0], root_bound, "feasible", wall, stats
    )
