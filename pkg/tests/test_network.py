import math

import pytest

from transitopt.errors import InfeasibleError, StructureError
from transitopt.network import (
    Arc,
    NetworkDesign,
    Node,
    TransitGraph,
    arc_cost,
    budget_cost,
    build_indexes,
    check_design_feasibility,
    check_flow_balance,
    load_design,
    load_graph,
    save_design,
    save_graph,
    validate_fixed_balance,
)
from conftest import bus_arc, grid_nodes, rail_arc


def test_budget_cost_all_closed_is_zero(two_node_graph):
    design = NetworkDesign.all_closed(two_node_graph)
    assert budget_cost(design, two_node_graph) == 0


def test_budget_cost_hourly_rate_rule(two_node_graph):
    # 6 buses/hour for 10 in-motion minutes at 72.15/h costs exactly 72.15
    assert arc_cost(6, 10.0, 72.15) == pytest.approx(72.15)
    design = NetworkDesign.from_open_ids(two_node_graph, ["a1"])
    assert budget_cost(design, two_node_graph) == pytest.approx(72.15)


def test_budget_cost_additivity():
    nodes = grid_nodes({"u": (0, 0), "v": (1, 0), "w": (2, 0)})
    arcs = [
        bus_arc("a1", "u", "v", cost=10.0),
        bus_arc("a2", "v", "w", cost=20.0),
    ]
    graph = TransitGraph(nodes, arcs)
    design = NetworkDesign.all_open(graph)
    assert budget_cost(design, graph) == pytest.approx(30.0)


def test_budget_cost_monotone_in_opening(cycle_graph):
    design = NetworkDesign.all_closed(cycle_graph)
    last = 0.0
    for arc_id in sorted(cycle_graph.arcs):
        design.open[arc_id] = True
        cost = budget_cost(design, cycle_graph)
        assert cost >= last
        last = cost


def test_budget_cost_unknown_arc(two_node_graph):
    design = NetworkDesign.all_open(two_node_graph)
    design.open["ghost"] = True
    with pytest.raises(StructureError):
        budget_cost(design, two_node_graph)


def test_flow_balance_single_arc(two_node_graph):
    design = NetworkDesign.from_open_ids(two_node_graph, ["a1"])
    assert check_flow_balance(design, two_node_graph) == [
        ("u", "bus", 6),
        ("v", "bus", -6),
    ]


def test_flow_balance_cycle_empty(cycle_graph):
    design = NetworkDesign.from_open_ids(cycle_graph, ["a1", "a2", "a3"])
    assert check_flow_balance(design, cycle_graph) == []


def test_flow_balance_all_closed_empty(cycle_graph):
    assert check_flow_balance(NetworkDesign.all_closed(cycle_graph), cycle_graph) == []


def test_feasibility_fixed_rail_only_at_zero_budget():
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0)}, rail={"u", "v"})
    arcs = [rail_arc("r1", "u", "v"), rail_arc("r2", "v", "u")]
    graph = TransitGraph(nodes, arcs)
    design = NetworkDesign.all_open(graph)
    report = check_design_feasibility(design, graph, budget=0.0)
    assert report.is_feasible


def test_feasibility_flags_closed_fixed_arc():
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0)}, rail={"u", "v"})
    arcs = [rail_arc("r1", "u", "v"), rail_arc("r2", "v", "u")]
    graph = TransitGraph(nodes, arcs)
    design = NetworkDesign.from_open_ids(graph, ["r1"])
    report = check_design_feasibility(design, graph, budget=0.0)
    assert report.closed_fixed_arcs == ["r2"]
    assert "fixed arcs" in report.families()


def test_feasibility_budget_and_pair_mode():
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0)})
    arcs = [
        bus_arc("a1", "u", "v", cost=50.0),
        bus_arc("a2", "u", "v", cost=60.0, h=12),  # parallel candidate frequency
        bus_arc("a3", "v", "u", cost=50.0),
    ]
    graph = TransitGraph(nodes, arcs)
    design = NetworkDesign.all_open(graph)
    report = check_design_feasibility(design, graph, budget=100.0)
    assert report.budget_violation is not None
    assert report.pair_mode_violations == [("u", "v", "bus", 2)]


def test_index_rebuild_roundtrip(cycle_graph):
    out_arcs, in_arcs, pair_arcs = build_indexes(cycle_graph.arcs)
    assert out_arcs == cycle_graph.out_arcs
    assert in_arcs == cycle_graph.in_arcs
    assert pair_arcs == cycle_graph.pair_arcs


def test_graph_rejects_self_loop():
    nodes = grid_nodes({"u": (0, 0), "v": (1, 1)})
    with pytest.raises(StructureError):
        TransitGraph(nodes, [bus_arc("a1", "u", "u")])


def test_graph_rejects_unknown_endpoint():
    nodes = grid_nodes({"u": (0, 0)})
    with pytest.raises(StructureError):
        TransitGraph(nodes, [bus_arc("a1", "u", "missing")])


def test_graph_rejects_free_rail_by_default():
    nodes = grid_nodes({"u": (0, 0), "v": (1, 1)})
    free_rail = Arc(
        id="r1", origin="u", dest="v", mode="rail", frequency=6,
        in_motion_min=3.0, rider_min=8.0, cost=0.0, is_fixed=False,
    )
    with pytest.raises(StructureError):
        TransitGraph(nodes, [free_rail])
    TransitGraph(nodes, [free_rail], rail_must_be_fixed=False)  # opt-out works


def test_validate_fixed_balance_flags_dangling_rail():
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0)}, rail={"u", "v"})
    graph = TransitGraph(nodes, [rail_arc("r1", "u", "v")])
    with pytest.raises(InfeasibleError):
        validate_fixed_balance(graph)


def test_graph_file_roundtrip(tmp_path, cycle_graph):
    save_graph(cycle_graph, tmp_path / "nodes.csv", tmp_path / "arcs.csv")
    loaded = load_graph(tmp_path / "nodes.csv", tmp_path / "arcs.csv")
    assert set(loaded.nodes) == set(cycle_graph.nodes)
    assert set(loaded.arcs) == set(cycle_graph.arcs)
    for arc_id, arc in cycle_graph.arcs.items():
        other = loaded.arcs[arc_id]
        assert (arc.origin, arc.dest, arc.mode, arc.frequency) == (
            other.origin, other.dest, other.mode, other.frequency,
        )
        assert other.cost == pytest.approx(arc.cost)
    # byte-identical second save
    save_graph(loaded, tmp_path / "nodes2.csv", tmp_path / "arcs2.csv")
    assert (tmp_path / "arcs.csv").read_text() == (tmp_path / "arcs2.csv").read_text()


def test_design_file_roundtrip(tmp_path, cycle_graph):
    design = NetworkDesign.from_open_ids(cycle_graph, ["a1", "a2"])
    save_design(design, tmp_path / "design.csv")
    loaded = load_design(tmp_path / "design.csv", cycle_graph)
    assert loaded.open == design.open


def test_node_coordinates_must_be_finite():
    with pytest.raises(StructureError):
        TransitGraph([Node("u", math.inf, 0.0)], [])
