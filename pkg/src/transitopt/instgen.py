"""Synthetic city generator.

Produces a stop grid with bidirectional candidate bus arcs to each stop's
nearest neighbors, a fixed balanced rail ring, trips with geometry-derived
contexts, and the ground-truth logit choice processes behind them. Because
the truth is a logit process, exact usage expectations are computable and the
in-repo trainer can in principle recover it, which is what the statistical
and learnability tests lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .choice import FeatureEncoder, LabeledDataset, LogitModel, PathFeatures
from .demand import FeatureSpec, Trip, TripPopulation
from .errors import StructureError
from .network import Arc, Node, TransitGraph, arc_cost, validate_fixed_balance

DEFAULT_HOURLY_RATE = 72.15
DEFAULT_FREQUENCY = 6
DEFAULT_PADDING_MIN = 5.0
DEFAULT_BUS_SPEED_M_PER_MIN = 420.0
DEFAULT_RAIL_SPEED_M_PER_MIN = 800.0
DEFAULT_WALK_SPEED_M_PER_MIN = 80.0
DEFAULT_DRIVE_SPEED_M_PER_MIN = 700.0

CONTEXT_SCHEMA = (
    FeatureSpec("drive_min", "numeric"),
    FeatureSpec("o_station_walk_min", "numeric"),
    FeatureSpec("d_station_walk_min", "numeric"),
    FeatureSpec("income_level", "ordinal"),
    FeatureSpec("vehicle_access", "categorical"),
)
VEHICLE_CATEGORIES = ("none", "own", "shared")

# Ground-truth process weights (see make_ground_truth_models). The adopt
# process puts a strictly negative weight on total time, so true adoption
# probability is monotone decreasing in path duration.
CORE_TRUTH = {
    "intercept": 1.1,
    "drive_min": -0.035,
    "o_station_walk_min": -0.09,
    "d_station_walk_min": -0.09,
    "income_level": -0.35,
    "vehicle_access=own": -1.6,
    "vehicle_access=shared": -0.7,
}
ADOPT_TRUTH = {
    "intercept": 1.0,
    "total_min": -0.055,
    "transfers": -0.5,
    "walk_min": -0.04,
    "transit_min": 0.0,
    "drive_min": 0.01,
    "o_station_walk_min": 0.0,
    "d_station_walk_min": 0.0,
    "income_level": 0.12,
    "vehicle_access=own": -0.5,
    "vehicle_access=shared": -0.2,
}


@dataclass
class GenSpec:
    """Synthetic instance shape; all randomness flows from the seed."""

    grid_nx: int = 4
    grid_ny: int = 4
    spacing_m: float = 600.0
    k_neighbors: int = 5
    n_trips: int = 100
    rail_ring: bool = True
    frequency: int = DEFAULT_FREQUENCY
    rail_frequency: int = DEFAULT_FREQUENCY
    padding_min: float = DEFAULT_PADDING_MIN
    hourly_rate: float = DEFAULT_HOURLY_RATE
    bus_speed: float = DEFAULT_BUS_SPEED_M_PER_MIN
    rail_speed: float = DEFAULT_RAIL_SPEED_M_PER_MIN
    drive_speed: float = DEFAULT_DRIVE_SPEED_M_PER_MIN
    core_intercept_shift: float = 0.0   # mixture knob: shifts the core share
    adopt_intercept_shift: float = 0.0  # mixture knob: shifts adoption rates
    seed: int = 0


PRESETS: dict[str, GenSpec] = {
    # tiny: <= 12 free arcs so exhaustive design enumeration stays cheap
    "tiny": GenSpec(grid_nx=2, grid_ny=3, spacing_m=800.0, k_neighbors=1, n_trips=10),
    "small": GenSpec(grid_nx=6, grid_ny=10, spacing_m=600.0, k_neighbors=5, n_trips=500),
    "medium": GenSpec(grid_nx=10, grid_ny=20, spacing_m=600.0, k_neighbors=5, n_trips=2000),
}


def preset(name: str, seed: int = 0) -> GenSpec:
    if name not in PRESETS:
        raise StructureError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    spec = PRESETS[name]
    return GenSpec(**{**spec.__dict__, "seed": seed})


def make_ground_truth_models(spec: GenSpec) -> tuple[LogitModel, LogitModel]:
    categories = {"vehicle_access": VEHICLE_CATEGORIES}
    core_encoder = FeatureEncoder(CONTEXT_SCHEMA, categories)
    core_weights = np.array([CORE_TRUTH.get(n, 0.0) for n in core_encoder.feature_names])
    core = LogitModel(
        task="core",
        encoder=core_encoder,
        weights=core_weights,
        intercept=CORE_TRUTH["intercept"] + spec.core_intercept_shift,
        kind="ground_truth",
    )
    adopt_schema = CONTEXT_SCHEMA + (
        FeatureSpec("total_min", "numeric"),
        FeatureSpec("transfers", "numeric"),
        FeatureSpec("walk_min", "numeric"),
        FeatureSpec("transit_min", "numeric"),
    )
    adopt_encoder = FeatureEncoder(adopt_schema, categories)
    adopt_weights = np.array([ADOPT_TRUTH.get(n, 0.0) for n in adopt_encoder.feature_names])
    adopt = LogitModel(
        task="adopt",
        encoder=adopt_encoder,
        weights=adopt_weights,
        intercept=ADOPT_TRUTH["intercept"] + spec.adopt_intercept_shift,
        kind="ground_truth",
    )
    return core, adopt


def _grid_nodes(spec: GenSpec) -> list[Node]:
    nodes = []
    for ix in range(spec.grid_nx):
        for iy in range(spec.grid_ny):
            nid = f"n{ix:02d}{iy:02d}"
            nodes.append(Node(id=nid, x=ix * spec.spacing_m, y=iy * spec.spacing_m))
    # rail ring around the inner rectangle of the grid, if it exists
    if spec.rail_ring and spec.grid_nx >= 2 and spec.grid_ny >= 2:
        rail_ids = set(_ring_node_ids(spec))
        nodes = [
            Node(id=n.id, x=n.x, y=n.y, is_rail_station=n.id in rail_ids) for n in nodes
        ]
    return nodes


def _ring_node_ids(spec: GenSpec) -> list[str]:
    """A rectangular loop of grid nodes, walked clockwise (forms a balanced cycle)."""
    x0, x1 = 0, spec.grid_nx - 1
    y0, y1 = 0, spec.grid_ny - 1
    if spec.grid_nx >= 4 and spec.grid_ny >= 4:
        x0, x1, y0, y1 = 1, spec.grid_nx - 2, 1, spec.grid_ny - 2
    ring = []
    for ix in range(x0, x1 + 1):
        ring.append((ix, y0))
    for iy in range(y0 + 1, y1 + 1):
        ring.append((x1, iy))
    for ix in range(x1 - 1, x0 - 1, -1):
        ring.append((ix, y1))
    for iy in range(y1 - 1, y0, -1):
        ring.append((x0, iy))
    return [f"n{ix:02d}{iy:02d}" for ix, iy in ring]


def generate(spec: GenSpec) -> tuple[TransitGraph, TripPopulation, LogitModel, LogitModel]:
    """Build (graph, trips, truth core model, truth adopt model) for a spec."""
    if spec.grid_nx * spec.grid_ny < 2:
        raise StructureError("grid must contain at least 2 stops")
    rng = np.random.default_rng(spec.seed)
    nodes = _grid_nodes(spec)
    node_by_id = {n.id: n for n in nodes}

    arcs: list[Arc] = []
    pair_seen: set[tuple[str, str]] = set()
    counter = 0
    for node in nodes:
        others = sorted(
            (o for o in nodes if o.id != node.id),
            key=lambda o: (math.hypot(o.x - node.x, o.y - node.y), o.id),
        )
        for neighbor in others[: spec.k_neighbors]:
            for a, b in ((node, neighbor), (neighbor, node)):
                if (a.id, b.id) in pair_seen:
                    continue
                pair_seen.add((a.id, b.id))
                dist = math.hypot(a.x - b.x, a.y - b.y)
                in_motion = dist / spec.bus_speed
                arcs.append(
                    Arc(
                        id=f"b{counter:04d}",
                        origin=a.id,
                        dest=b.id,
                        mode="bus",
                        frequency=spec.frequency,
                        in_motion_min=in_motion,
                        rider_min=in_motion + spec.padding_min,
                        cost=arc_cost(spec.frequency, in_motion, spec.hourly_rate),
                        is_fixed=False,
                    )
                )
                counter += 1

    if spec.rail_ring and spec.grid_nx >= 2 and spec.grid_ny >= 2:
        ring = _ring_node_ids(spec)
        for i, origin in enumerate(ring):
            dest = ring[(i + 1) % len(ring)]
            a, b = node_by_id[origin], node_by_id[dest]
            dist = math.hypot(a.x - b.x, a.y - b.y)
            in_motion = dist / spec.rail_speed
            arcs.append(
                Arc(
                    id=f"r{i:04d}",
                    origin=origin,
                    dest=dest,
                    mode="rail",
                    frequency=spec.rail_frequency,
                    in_motion_min=in_motion,
                    rider_min=in_motion + spec.padding_min,
                    cost=0.0,  # rail operating cost excluded from the budget
                    is_fixed=True,
                )
            )

    graph = TransitGraph(nodes, arcs)
    validate_fixed_balance(graph)

    core_model, adopt_model = make_ground_truth_models(spec)
    stations = [n for n in nodes if n.is_rail_station] or nodes
    width = (spec.grid_nx - 1) * spec.spacing_m or spec.spacing_m
    height = (spec.grid_ny - 1) * spec.spacing_m or spec.spacing_m

    trips = []
    for t in range(spec.n_trips):
        while True:
            ox, oy = rng.uniform(-0.1, 1.1) * width, rng.uniform(-0.1, 1.1) * height
            dx, dy = rng.uniform(-0.1, 1.1) * width, rng.uniform(-0.1, 1.1) * height
            if math.hypot(dx - ox, dy - oy) > spec.spacing_m * 0.5:
                break
        context = _context_for(spec, rng, (ox, oy), (dx, dy), stations)
        p_core = core_model.prob(context)
        current_transit = bool(rng.random() < min(0.95, p_core + 0.25))
        trips.append(
            Trip(
                id=f"t{t:04d}",
                origin=(ox, oy),
                dest=(dx, dy),
                riders=1,
                context=context,
                current_mode="transit" if current_transit else "drive",
            )
        )
    population = TripPopulation(trips, CONTEXT_SCHEMA)
    return graph, population, core_model, adopt_model


def _context_for(spec, rng, origin, dest, stations) -> dict:
    def walk_to_station(point) -> float:
        best = min(math.hypot(s.x - point[0], s.y - point[1]) for s in stations)
        return best / DEFAULT_WALK_SPEED_M_PER_MIN

    dist = math.hypot(dest[0] - origin[0], dest[1] - origin[1])
    drive_min = dist / spec.drive_speed * float(rng.uniform(0.9, 1.4))
    return {
        "drive_min": round(drive_min, 3),
        "o_station_walk_min": round(walk_to_station(origin), 3),
        "d_station_walk_min": round(walk_to_station(dest), 3),
        "income_level": int(rng.integers(1, 6)),
        "vehicle_access": VEHICLE_CATEGORIES[int(rng.choice(3, p=[0.25, 0.55, 0.2]))],
    }


# ---------------------------------------------------------------------------
# Labeled samples from the ground truth (for trainer tests)
# ---------------------------------------------------------------------------


def make_training_rows(
    model: LogitModel,
    n: int,
    seed: int,
    feature_scale: float = 1.0,
) -> LabeledDataset:
    """Sample contexts widely, label them by the true process.

    ``feature_scale`` stretches the sampled feature ranges, raising the Bayes
    AUC of the induced classification problem.
    """
    rng = np.random.default_rng(seed)
    rows = []
    labels = []
    is_adopt = model.task == "adopt"
    for _ in range(n):
        row = {
            "drive_min": float(rng.uniform(2, 2 + 58 * feature_scale)),
            "o_station_walk_min": float(rng.uniform(0, 20 * feature_scale)),
            "d_station_walk_min": float(rng.uniform(0, 20 * feature_scale)),
            "income_level": int(rng.integers(1, 6)),
            "vehicle_access": VEHICLE_CATEGORIES[int(rng.integers(0, 3))],
        }
        if is_adopt:
            walk = float(rng.uniform(1, 25))
            transit = float(rng.uniform(4, 4 + 86 * feature_scale))
            pf = PathFeatures(
                total_min=walk + transit,
                transfers=int(rng.integers(0, 4)),
                walk_min=walk,
                transit_min=transit,
            )
            p = model.prob(row, pf=pf)
            row.update(pf.as_dict())
        else:
            p = model.prob(row)
        rows.append(row)
        labels.append(int(rng.random() < p))
    schema = tuple(model.encoder.schema)
    return LabeledDataset(schema, rows, np.array(labels))
