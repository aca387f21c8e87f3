"""Transit network data model: stops, directed multi-arcs, and candidate designs.

The graph is a directed multigraph. Each arc is a candidate transit connection
with a mode, a vehicle frequency, an in-motion running time, a rider-facing
time (running time plus padding), and an operating cost for the planning
horizon. A design is a boolean open/closed vector over arcs. Feasibility of a
design is defined by four constraint families: operating budget, fixed arcs
staying open, per-node per-mode vehicle flow balance, and at most one open arc
per (origin, destination, mode) group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, InfeasibleError, StructureError
from . import fileio

DEFAULT_MODES = ("bus", "rail")


@dataclass(frozen=True)
class Node:
    """A potential transit stop at planar coordinates (meters)."""

    id: str
    x: float
    y: float
    is_rail_station: bool = False


@dataclass(frozen=True)
class Arc:
    """A directed candidate connection between two stops.

    ``rider_min`` is what a rider experiences on the arc (running time plus
    any padding); ``in_motion_min`` is what the vehicle-hour cost is based on.
    """

    id: str
    origin: str
    dest: str
    mode: str
    frequency: int
    in_motion_min: float
    rider_min: float
    cost: float
    is_fixed: bool = False

    def validate(self) -> None:
        if self.origin == self.dest:
            raise StructureError(f"arc {self.id}: origin equals destination")
        if self.frequency < 1:
            raise StructureError(f"arc {self.id}: frequency must be a positive integer")
        if self.in_motion_min <= 0:
            raise StructureError(f"arc {self.id}: in_motion_min must be > 0")
        if self.rider_min < self.in_motion_min:
            raise StructureError(f"arc {self.id}: rider_min below in_motion_min")
        if self.cost < 0:
            raise StructureError(f"arc {self.id}: negative cost")


def arc_cost(frequency: int, in_motion_min: float, hourly_rate: float) -> float:
    """Operating cost of one arc for the horizon: vehicles/hour * in-motion hours * rate."""
    return frequency * (in_motion_min / 60.0) * hourly_rate


def build_indexes(arcs: dict[str, "Arc"]):
    """Derive the out-arc, in-arc, and pair-group indexes from the arc table."""
    out_arcs: dict[tuple[str, str], tuple[str, ...]] = {}
    in_arcs: dict[tuple[str, str], tuple[str, ...]] = {}
    pair_arcs: dict[tuple[str, str, str], tuple[str, ...]] = {}
    tmp_out: dict[tuple[str, str], list[str]] = {}
    tmp_in: dict[tuple[str, str], list[str]] = {}
    tmp_pair: dict[tuple[str, str, str], list[str]] = {}
    for arc_id in sorted(arcs):
        arc = arcs[arc_id]
        tmp_out.setdefault((arc.origin, arc.mode), []).append(arc_id)
        tmp_in.setdefault((arc.dest, arc.mode), []).append(arc_id)
        tmp_pair.setdefault((arc.origin, arc.dest, arc.mode), []).append(arc_id)
    out_arcs = {k: tuple(v) for k, v in tmp_out.items()}
    in_arcs = {k: tuple(v) for k, v in tmp_in.items()}
    pair_arcs = {k: tuple(v) for k, v in tmp_pair.items()}
    return out_arcs, in_arcs, pair_arcs


class TransitGraph:
    """Immutable-by-convention container of nodes, arcs, and adjacency indexes."""

    def __init__(self, nodes, arcs, rail_must_be_fixed: bool = True):
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise StructureError(f"duplicate node id {node.id}")
            if not (math.isfinite(node.x) and math.isfinite(node.y)):
                raise StructureError(f"node {node.id}: non-finite coordinates")
            self.nodes[node.id] = node
        self.arcs: dict[str, Arc] = {}
        for arc in arcs:
            if arc.id in self.arcs:
                raise StructureError(f"duplicate arc id {arc.id}")
            arc.validate()
            for endpoint in (arc.origin, arc.dest):
                if endpoint not in self.nodes:
                    raise StructureError(f"arc {arc.id}: unknown endpoint {endpoint}")
            if rail_must_be_fixed and arc.mode == "rail" and not arc.is_fixed:
                raise StructureError(f"arc {arc.id}: rail arcs must be fixed")
            self.arcs[arc.id] = arc
        self.out_arcs, self.in_arcs, self.pair_arcs = build_indexes(self.arcs)
        self.modes = tuple(sorted({a.mode for a in self.arcs.values()}))
        self.fixed_arc_ids = tuple(sorted(a for a, arc in self.arcs.items() if arc.is_fixed))
        self.free_arc_ids = tuple(sorted(a for a, arc in self.arcs.items() if not arc.is_fixed))

    def arc(self, arc_id: str) -> Arc:
        try:
            return self.arcs[arc_id]
        except KeyError:
            raise StructureError(f"unknown arc id {arc_id}") from None

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise StructureError(f"unknown node id {node_id}") from None

    def stops(self) -> list[Node]:
        return [self.nodes[n] for n in sorted(self.nodes)]


@dataclass
class NetworkDesign:
    """The open/closed vector over arcs of one graph."""

    open: dict[str, bool]

    @classmethod
    def all_closed(cls, graph: TransitGraph) -> "NetworkDesign":
        return cls({a: False for a in sorted(graph.arcs)})

    @classmethod
    def all_open(cls, graph: TransitGraph) -> "NetworkDesign":
        return cls({a: True for a in sorted(graph.arcs)})

    @classmethod
    def from_open_ids(cls, graph: TransitGraph, open_ids) -> "NetworkDesign":
        open_set = set(open_ids)
        unknown = open_set.difference(graph.arcs)
        if unknown:
            raise StructureError(f"unknown arc ids in design: {sorted(unknown)}")
        return cls({a: (a in open_set) for a in sorted(graph.arcs)})

    def open_ids(self) -> tuple[str, ...]:
        return tuple(sorted(a for a, is_open in self.open.items() if is_open))


def _check_defined(design: NetworkDesign, graph: TransitGraph) -> None:
    unknown = set(design.open).difference(graph.arcs)
    if unknown:
        raise StructureError(f"design references unknown arcs: {sorted(unknown)}")
    missing = set(graph.arcs).difference(design.open)
    if missing:
        raise StructureError(f"design missing arcs: {sorted(missing)}")


def budget_cost(design: NetworkDesign, graph: TransitGraph) -> float:
    """Total operating cost of the open arcs."""
    _check_defined(design, graph)
    return sum(graph.arcs[a].cost for a, is_open in design.open.items() if is_open)


def check_flow_balance(design: NetworkDesign, graph: TransitGraph):
    """Per (node, mode) frequency imbalance (out minus in); nonzero entries only."""
    _check_defined(design, graph)
    imbalance: dict[tuple[str, str], int] = {}
    for arc_id, is_open in design.open.items():
        if not is_open:
            continue
        arc = graph.arcs[arc_id]
        key_out = (arc.origin, arc.mode)
        key_in = (arc.dest, arc.mode)
        imbalance[key_out] = imbalance.get(key_out, 0) + arc.frequency
        imbalance[key_in] = imbalance.get(key_in, 0) - arc.frequency
    return sorted(
        (node, mode, value) for (node, mode), value in imbalance.items() if value != 0
    )


@dataclass
class FeasibilityReport:
    """Violations grouped by constraint family; empty report means design in Z."""

    budget_violation: tuple[float, float] | None = None  # (cost, budget)
    closed_fixed_arcs: list[str] = field(default_factory=list)
    flow_imbalance: list[tuple[str, str, int]] = field(default_factory=list)
    pair_mode_violations: list[tuple[str, str, str, int]] = field(default_factory=list)

    @property
    def is_feasible(self) -> bool:
        return (
            self.budget_violation is None
            and not self.closed_fixed_arcs
            and not self.flow_imbalance
            and not self.pair_mode_violations
        )

    def families(self) -> list[str]:
        out = []
        if self.budget_violation is not None:
            out.append("budget")
        if self.closed_fixed_arcs:
            out.append("fixed arcs")
        if self.flow_imbalance:
            out.append("flow balance")
        if self.pair_mode_violations:
            out.append("pair mode")
        return out


def check_design_feasibility(
    design: NetworkDesign, graph: TransitGraph, budget: float
) -> FeasibilityReport:
    """Check membership of the design in Z under the given budget."""
    _check_defined(design, graph)
    report = FeasibilityReport()
    cost = budget_cost(design, graph)
    if cost > budget + 1e-9:
        report.budget_violation = (cost, budget)
    report.closed_fixed_arcs = [
        a for a in graph.fixed_arc_ids if not design.open[a]
    ]
    report.flow_imbalance = check_flow_balance(design, graph)
    for (n1, n2, mode), group in sorted(graph.pair_arcs.items()):
        n_open = sum(1 for a in group if design.open[a])
        if n_open > 1:
            report.pair_mode_violations.append((n1, n2, mode, n_open))
    return report


def validate_fixed_balance(graph: TransitGraph) -> None:
    """Reject instances whose fixed arcs are unbalanced beyond repair.

    A (node, mode) imbalance contributed only by fixed arcs can never be fixed
    by opening candidate arcs of another mode, and is permanent if no free arc
    of the same mode touches the node.
    """
    fixed_only = NetworkDesign(
        {a: graph.arcs[a].is_fixed for a in sorted(graph.arcs)}
    )
    witnesses = []
    for node, mode, value in check_flow_balance(fixed_only, graph):
        free_out = [
            a for a in graph.out_arcs.get((node, mode), ()) if not graph.arcs[a].is_fixed
        ]
        free_in = [
            a for a in graph.in_arcs.get((node, mode), ()) if not graph.arcs[a].is_fixed
        ]
        if not free_out and not free_in:
            witnesses.append((node, mode, value))
    if witnesses:
        raise InfeasibleError(
            f"fixed arcs are unbalanced with no candidate repair arcs: {witnesses}",
            witnesses,
        )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

NODE_HEADER = ("id", "x_meters", "y_meters", "is_rail")
ARC_HEADER = (
    "id",
    "origin",
    "dest",
    "mode",
    "h_per_hour",
    "in_motion_min",
    "rider_min",
    "cost",
    "is_fixed",
)
DESIGN_HEADER = ("arc_id", "open_flag")


def save_graph(
    graph: TransitGraph,
    nodes_path: str | Path,
    arcs_path: str | Path,
    provenance: dict[str, str] | None = None,
) -> None:
    node_rows = [
        (n.id, fileio.fmt_num(n.x), fileio.fmt_num(n.y), fileio.fmt_num(n.is_rail_station))
        for n in graph.stops()
    ]
    arc_rows = [
        (
            a.id,
            a.origin,
            a.dest,
            a.mode,
            fileio.fmt_num(a.frequency),
            fileio.fmt_num(a.in_motion_min),
            fileio.fmt_num(a.rider_min),
            fileio.fmt_num(a.cost),
            fileio.fmt_num(a.is_fixed),
        )
        for _, a in sorted(graph.arcs.items())
    ]
    base = provenance or {}
    fileio.write_delimited(
        nodes_path, NODE_HEADER, node_rows, {**fileio.provenance_for("nodes"), **base}
    )
    fileio.write_delimited(
        arcs_path, ARC_HEADER, arc_rows, {**fileio.provenance_for("arcs"), **base}
    )


def _parse_flag(text: str, path: str, lineno: int) -> bool:
    if text == "1":
        return True
    if text == "0":
        return False
    raise FormatError(path, lineno, f"flag must be 0 or 1, got {text!r}")


def load_graph(
    nodes_path: str | Path,
    arcs_path: str | Path,
    rail_must_be_fixed: bool = True,
    check_fixed_balance: bool = True,
) -> TransitGraph:
    _, header, rows = fileio.read_delimited(nodes_path)
    if tuple(header) != NODE_HEADER:
        raise FormatError(str(nodes_path), 1, f"expected header {','.join(NODE_HEADER)}")
    nodes = []
    for lineno, fields in rows:
        if len(fields) != len(NODE_HEADER):
            raise FormatError(str(nodes_path), lineno, "wrong field count")
        nodes.append(
            Node(
                id=fields[0],
                x=float(fields[1]),
                y=float(fields[2]),
                is_rail_station=_parse_flag(fields[3], str(nodes_path), lineno),
            )
        )
    _, header, rows = fileio.read_delimited(arcs_path)
    if tuple(header) != ARC_HEADER:
        raise FormatError(str(arcs_path), 1, f"expected header {','.join(ARC_HEADER)}")
    arcs = []
    for lineno, fields in rows:
        if len(fields) != len(ARC_HEADER):
            raise FormatError(str(arcs_path), lineno, "wrong field count")
        arcs.append(
            Arc(
                id=fields[0],
                origin=fields[1],
                dest=fields[2],
                mode=fields[3],
                frequency=int(fields[4]),
                in_motion_min=float(fields[5]),
                rider_min=float(fields[6]),
                cost=float(fields[7]),
                is_fixed=_parse_flag(fields[8], str(arcs_path), lineno),
            )
        )
    graph = TransitGraph(nodes, arcs, rail_must_be_fixed=rail_must_be_fixed)
    if check_fixed_balance:
        validate_fixed_balance(graph)
    return graph


def save_design(
    design: NetworkDesign, path: str | Path, provenance: dict[str, str] | None = None
) -> None:
    rows = [(a, fileio.fmt_num(flag)) for a, flag in sorted(design.open.items())]
    fileio.write_delimited(
        path, DESIGN_HEADER, rows, {**fileio.provenance_for("design"), **(provenance or {})}
    )


def load_design(path: str | Path, graph: TransitGraph) -> NetworkDesign:
    _, header, rows = fileio.read_delimited(path)
    if tuple(header) != DESIGN_HEADER:
        raise FormatError(str(path), 1, f"expected header {','.join(DESIGN_HEADER)}")
    open_map: dict[str, bool] = {}
    for lineno, fields in rows:
        if len(fields) != len(DESIGN_HEADER):
            raise FormatError(str(path), lineno, "wrong field count")
        open_map[fields[0]] = _parse_flag(fields[1], str(path), lineno)
    design = NetworkDesign(open_map)
    _check_defined(design, graph)
    return design
