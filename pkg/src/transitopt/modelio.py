"""Text export of the compiled model and verification of external solutions.

Two formats are written. ``lp_text`` is CPLEX-style LP with binary variables;
``opb_text`` is pseudo-Boolean OPB with integer coefficients (budget costs are
scaled to micro-units). Both carry the objective in rider-scenario counts
(multiply-by-1/I left to the reader; the constant from always-served trips is
recorded in a comment).

Variable naming: ``z_<arc>`` per arc, ``f_<k>`` per distinct transit arc
sequence, ``d_<i>_<trip>`` per (scenario, latent trip) term. The companion
importer reads a solution file of ``name value`` lines, rebuilds the design,
replays every constraint family, and reports violations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, StructureError
from .network import NetworkDesign, check_design_feasibility
from .optimizer import CompiledModel, feasible_path_vars
from . import fileio

EXPORT_FORMATS = ("lp_text", "opb_text")
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")
OPB_COST_SCALE = 10**6


def _safe(name: str) -> str:
    if not _NAME_RE.match(name):
        raise StructureError(f"id {name!r} cannot be exported (allowed: [A-Za-z0-9_.-])")
    return name


def _lp_terms(pairs) -> str:
    """Render coefficient/name pairs as an LP expression."""
    parts = []
    for coeff, name in pairs:
        sign = "-" if coeff < 0 else "+"
        mag = abs(coeff)
        mag_txt = str(mag) if isinstance(mag, int) else fileio.fmt_num(mag)
        parts.append(f"{sign} {mag_txt} {name}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


@dataclass
class ModelRows:
    """The explicit constraint rows of a compiled model, grouped by family."""

    objective: list[tuple[int, str]]
    objective_const: int
    and_upper: list[tuple[str, str, str]]          # (row name, f, z)
    and_lower: list[tuple[str, str, list[str], int]]  # (row, f, z list, |A_p|)
    or_upper: list[tuple[str, str, list[str]]]      # (row, d, f list)
    or_lower: list[tuple[str, str, str]]            # (row, d, f)
    fixed_d: list[tuple[str, str]]                  # (row, d) forced to 1
    core: list[tuple[str, list[str]]]               # (row, f list) sum >= 1
    budget: list[tuple[float, str]]
    budget_limit: float
    fixed_z: list[tuple[str, str]]                  # (row, z) forced to 1
    flow: list[tuple[str, list[tuple[int, str]]]]   # (row, signed h*z terms) == 0
    pair: list[tuple[str, list[str]]]               # (row, z list) sum <= 1
    binaries: list[str] = field(default_factory=list)


def build_rows(model: CompiledModel) -> ModelRows:
    graph = model.graph
    z_name = {a: f"z_{_safe(a)}" for a in sorted(graph.arcs)}
    f_name = {pv.index: f"f_{pv.index}" for pv in model.path_vars}

    objective: list[tuple[int, str]] = []
    or_upper, or_lower, fixed_d = [], [], []
    for term in model.latent_terms:
        d = f"d_{term.scenario}_{_safe(term.trip_id)}"
        objective.append((term.riders, d))
        if term.always:
            fixed_d.append((f"c_dfix_{term.scenario}_{_safe(term.trip_id)}", d))
            continue
        f_list = [f_name[i] for i in term.adopted]
        or_upper.append((f"c_or_ub_{term.scenario}_{_safe(term.trip_id)}", d, f_list))
        for i in term.adopted:
            or_lower.append(
                (f"c_or_lb_{term.scenario}_{_safe(term.trip_id)}_{i}", d, f_name[i])
            )

    and_upper, and_lower = [], []
    for pv in model.path_vars:
        f = f_name[pv.index]
        for a in pv.arc_ids:
            and_upper.append((f"c_and_ub_{pv.index}_{_safe(a)}", f, z_name[a]))
        and_lower.append(
            (f"c_and_lb_{pv.index}", f, [z_name[a] for a in pv.arc_ids], len(pv.arc_ids))
        )

    core = []
    req_by_trip = {req.trip_id: req for req in model.core_reqs}
    for i, trip_ids in enumerate(model.scen_core):
        for trip_id in trip_ids:
            req = req_by_trip[trip_id]
            if req.always:
                continue  # a pure-walk path serves this trip under any design
            core.append(
                (f"c_core_{i}_{_safe(trip_id)}", [f_name[p] for p in req.options])
            )

    budget = [
        (graph.arcs[a].cost, z_name[a])
        for a in sorted(graph.arcs)
        if graph.arcs[a].cost > 0
    ]
    fixed_z = [(f"c_fixed_{_safe(a)}", z_name[a]) for a in graph.fixed_arc_ids]

    flow = []
    for node, mode in sorted(set(graph.out_arcs) | set(graph.in_arcs)):
        terms = []
        for a in graph.out_arcs.get((node, mode), ()):
            terms.append((graph.arcs[a].frequency, z_name[a]))
        for a in graph.in_arcs.get((node, mode), ()):
            terms.append((-graph.arcs[a].frequency, z_name[a]))
        flow.append((f"c_flow_{_safe(node)}_{mode}", terms))

    pair = []
    for (n1, n2, mode), group in sorted(graph.pair_arcs.items()):
        if len(group) > 1:
            pair.append(
                (f"c_pair_{_safe(n1)}_{_safe(n2)}_{mode}", [z_name[a] for a in group])
            )

    binaries = (
        [z_name[a] for a in sorted(graph.arcs)]
        + [f_name[pv.index] for pv in model.path_vars]
        + [name for _, name in objective]
    )
    return ModelRows(
        objective=objective,
        objective_const=model.const_weight_int
        - sum(t.riders for t in model.latent_terms if t.always),
        and_upper=and_upper,
        and_lower=and_lower,
        or_upper=or_upper,
        or_lower=or_lower,
        fixed_d=fixed_d,
        core=core,
        budget=budget,
        budget_limit=model.budget,
        fixed_z=fixed_z,
        flow=flow,
        pair=pair,
        binaries=binaries,
    )


def render_lp(model: CompiledModel) -> str:
    rows = build_rows(model)
    out = [
        "\\ transit design model (rider-scenario counts; divide by scenario count)",
        f"\\ objective constant from always-served trips: {rows.objective_const}",
        f"\\ scenario count: {model.n_scenarios}",
        "Maximize",
        " obj: " + (_lp_terms(rows.objective) if rows.objective else "0 dummy"),
        "Subject To",
    ]
    for row, f, z in rows.and_upper:
        out.append(f" {row}: {f} - {z} <= 0")
    for row, f, zs, n in rows.and_lower:
        expr = _lp_terms([(1, f)] + [(-1, z) for z in zs])
        out.append(f" {row}: {expr} >= {1 - n}")
    for row, d, fs in rows.or_upper:
        expr = _lp_terms([(1, d)] + [(-1, f) for f in fs])
        out.append(f" {row}: {expr} <= 0")
    for row, d, f in rows.or_lower:
        out.append(f" {row}: {d} - {f} >= 0")
    for row, d in rows.fixed_d:
        out.append(f" {row}: {d} = 1")
    for row, fs in rows.core:
        out.append(f" {row}: {_lp_terms([(1, f) for f in fs])} >= 1")
    if rows.budget:
        out.append(
            f" c_budget: {_lp_terms(rows.budget)} <= {fileio.fmt_num(rows.budget_limit)}"
        )
    for row, z in rows.fixed_z:
        out.append(f" {row}: {z} = 1")
    for row, terms in rows.flow:
        if terms:
            out.append(f" {row}: {_lp_terms(terms)} = 0")
    for row, zs in rows.pair:
        out.append(f" {row}: {_lp_terms([(1, z) for z in zs])} <= 1")
    out.append("Binary")
    if not rows.objective:
        out.append(" dummy")
    for name in rows.binaries:
        out.append(f" {name}")
    out.append("End")
    return "\n".join(out) + "\n"


def _opb_scale_cost(cost: float) -> int:
    scaled = round(cost * OPB_COST_SCALE)
    if abs(scaled - cost * OPB_COST_SCALE) > 1e-3:
        raise StructureError(f"cost {cost} is not representable at scale {OPB_COST_SCALE}")
    return scaled


def render_opb(model: CompiledModel) -> str:
    rows = build_rows(model)
    names: list[str] = []
    index: dict[str, int] = {}

    def x(name: str) -> str:
        if name not in index:
            names.append(name)
            index[name] = len(names)
        return f"x{index[name]}"

    for name in rows.binaries:
        x(name)

    body: list[str] = []
    for row, f, z in rows.and_upper:
        body.append(f"-1 {x(f)} +1 {x(z)} >= 0 ;")
    for row, f, zs, n in rows.and_lower:
        terms = " ".join([f"+1 {x(f)}"] + [f"-1 {x(z)}" for z in zs])
        body.append(f"{terms} >= {1 - n} ;")
    for row, d, fs in rows.or_upper:
        terms = " ".join([f"-1 {x(d)}"] + [f"+1 {x(f)}" for f in fs])
        body.append(f"{terms} >= 0 ;")
    for row, d, f in rows.or_lower:
        body.append(f"+1 {x(d)} -1 {x(f)} >= 0 ;")
    for row, d in rows.fixed_d:
        body.append(f"+1 {x(d)} = 1 ;")
    for row, fs in rows.core:
        terms = " ".join(f"+1 {x(f)}" for f in fs)
        body.append(f"{terms} >= 1 ;")
    if rows.budget:
        terms = " ".join(f"-{_opb_scale_cost(c)} {x(z)}" for c, z in rows.budget)
        limit = _opb_scale_cost(rows.budget_limit)
        body.append(f"{terms} >= -{limit} ;")
    for row, z in rows.fixed_z:
        body.append(f"+1 {x(z)} = 1 ;")
    for row, terms in rows.flow:
        if terms:
            txt = " ".join(f"{'+' if h > 0 else '-'}{abs(h)} {x(z)}" for h, z in terms)
            body.append(f"{txt} = 0 ;")
    for row, zs in rows.pair:
        terms = " ".join(f"-1 {x(z)}" for z in zs)
        body.append(f"{terms} >= -1 ;")

    header = [
        f"* #variable= {len(names)} #constraint= {len(body)}",
        "* transit design model; objective in rider-scenario counts (min of negation)",
        f"* objective constant from always-served trips: {rows.objective_const}",
        f"* scenario count: {model.n_scenarios}",
        f"* cost scale: {OPB_COST_SCALE}",
    ]
    header.extend(f"* {x(n)} = {n}" for n in names)
    obj = "min: " + " ".join(f"-{w} {x(name)}" for w, name in rows.objective) + " ;"
    if not rows.objective:
        obj = "min: ;"
    return "\n".join(header + [obj] + body) + "\n"


def export_model(model: CompiledModel, fmt: str, path: str | Path) -> None:
    if fmt not in EXPORT_FORMATS:
        raise StructureError(f"unknown export format {fmt!r} (use one of {EXPORT_FORMATS})")
    text = render_lp(model) if fmt == "lp_text" else render_opb(model)
    Path(path).write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# Solution import and replay verification
# ---------------------------------------------------------------------------


def read_solution(path: str | Path) -> dict[str, int]:
    """Parse ``name value`` lines (or PB-competition ``v`` literal lines)."""
    path_str = str(path)
    assignment: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", "*", "c ")):
            continue
        if stripped.startswith("v "):
            for literal in stripped[2:].split():
                if literal.startswith("-"):
                    assignment[literal[1:]] = 0
                else:
                    assignment[literal] = 1
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise FormatError(path_str, lineno, f"expected 'name value', got {stripped!r}")
        try:
            value = int(round(float(parts[1])))
        except ValueError:
            raise FormatError(path_str, lineno, f"bad value {parts[1]!r}") from None
        if value not in (0, 1):
            raise FormatError(path_str, lineno, f"binary value expected, got {value}")
        assignment[parts[0]] = value
    return assignment


@dataclass
class VerificationReport:
    accepted: bool
    violated_families: list[str]
    mismatched_vars: list[str]
    unserved_core: list[tuple[int, str]]
    objective_int: int


def verify_solution(model: CompiledModel, assignment: dict[str, int]) -> VerificationReport:
    """Rebuild the design from z variables and replay every constraint family.

    OPB-style ``x<k>`` names are translated through the export naming table.
    Provided f/d values are checked against the values the design induces.
    """
    rows = build_rows(model)
    graph = model.graph
    # translate xk names if present
    if any(name.startswith("x") and name[1:].isdigit() for name in assignment):
        table = {}
        idx = 0
        for name in rows.binaries:
            idx += 1
            table[f"x{idx}"] = name
        assignment = {table.get(k, k): v for k, v in assignment.items()}

    open_map = {}
    for a in sorted(graph.arcs):
        z = f"z_{a}"
        if z in assignment:
            open_map[a] = bool(assignment[z])
        elif graph.arcs[a].is_fixed:
            open_map[a] = True
        else:
            open_map[a] = False
    design = NetworkDesign(open_map)

    feas = check_design_feasibility(design, graph, model.budget)
    families = feas.families()

    f_open = feasible_path_vars(model, design)
    mismatched = []
    for pv in model.path_vars:
        name = f"f_{pv.index}"
        if name in assignment and bool(assignment[name]) != f_open[pv.index]:
            mismatched.append(name)
    unserved = []
    for req in model.core_reqs:
        if req.always or any(f_open[i] for i in req.options):
            continue
        unserved.extend((i, req.trip_id) for i in req.scenarios)
    if unserved:
        families = families + ["core serving"]

    total = model.const_weight_int
    for term in model.latent_terms:
        induced = term.always or any(f_open[i] for i in term.adopted)
        if induced:
            total += term.riders
        name = f"d_{term.scenario}_{term.trip_id}"
        if name in assignment and bool(assignment[name]) != induced:
            mismatched.append(name)

    return VerificationReport(
        accepted=not families and not mismatched,
        violated_families=families,
        mismatched_vars=sorted(mismatched),
        unserved_core=sorted(unserved),
        objective_int=total,
    )
