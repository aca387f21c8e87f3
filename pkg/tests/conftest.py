import pytest

from transitopt.demand import FeatureSpec, Trip, TripPopulation
from transitopt.network import Arc, Node, TransitGraph, arc_cost


def bus_arc(arc_id, origin, dest, minutes=10.0, h=6, rate=72.15, fixed=False, cost=None):
    if cost is None:
        cost = arc_cost(h, minutes, rate)
    return Arc(
        id=arc_id, origin=origin, dest=dest, mode="bus", frequency=h,
        in_motion_min=minutes, rider_min=minutes + 5.0, cost=cost, is_fixed=fixed,
    )


def rail_arc(arc_id, origin, dest, minutes=5.0, h=6):
    return Arc(
        id=arc_id, origin=origin, dest=dest, mode="rail", frequency=h,
        in_motion_min=minutes, rider_min=minutes + 5.0, cost=0.0, is_fixed=True,
    )


def grid_nodes(coords, rail=()):
    return [
        Node(id=nid, x=float(x), y=float(y), is_rail_station=nid in rail)
        for nid, (x, y) in coords.items()
    ]


@pytest.fixture
def two_node_graph():
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0)})
    arcs = [bus_arc("a1", "u", "v"), bus_arc("a2", "v", "u")]
    return TransitGraph(nodes, arcs)


@pytest.fixture
def cycle_graph():
    """Three stops joined in a directed bus cycle plus its reverse."""
    nodes = grid_nodes({"u": (0, 0), "v": (1000, 0), "w": (500, 800)})
    arcs = [
        bus_arc("a1", "u", "v"),
        bus_arc("a2", "v", "w"),
        bus_arc("a3", "w", "u"),
        bus_arc("b1", "v", "u"),
        bus_arc("b2", "w", "v"),
        bus_arc("b3", "u", "w"),
    ]
    return TransitGraph(nodes, arcs)


SCHEMA = (
    FeatureSpec("drive_min", "numeric"),
    FeatureSpec("income_level", "ordinal"),
    FeatureSpec("vehicle_access", "categorical"),
)


def make_trip(trip_id, origin=(0.0, 0.0), dest=(900.0, 100.0), riders=1,
              drive_min=15.0, income=3, vehicle="own", mode="drive"):
    return Trip(
        id=trip_id, origin=origin, dest=dest, riders=riders,
        context={
            "drive_min": drive_min,
            "income_level": income,
            "vehicle_access": vehicle,
        },
        current_mode=mode,
    )


@pytest.fixture
def small_population():
    trips = [
        make_trip("t1", dest=(950.0, 20.0), riders=1, mode="transit"),
        make_trip("t2", origin=(40.0, 10.0), dest=(990.0, -30.0), riders=3),
        make_trip("t3", origin=(480.0, 790.0), dest=(30.0, 40.0), riders=2),
    ]
    return TripPopulation(trips, SCHEMA)
