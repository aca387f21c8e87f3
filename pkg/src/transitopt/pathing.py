"""Candidate-path enumeration over the all-open network.

Each trip endpoint is joined to its nearest stops by walk edges; the trip's
considered set is its ``w`` fastest loopless paths through the all-open
network, fastest first. Path sets are frozen once built: designs later toggle
arcs, and a path stays usable only while every transit arc on it is open.

Enumeration is Yen-style with deterministic tie-breaks (equal-time paths are
ordered by their edge-key sequence), so results do not depend on iteration
order or parallel scheduling.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path as FsPath

from .choice import PathFeatures
from .demand import Trip, TripPopulation
from .errors import FormatError, StructureError
from .network import NetworkDesign, TransitGraph
from . import fileio

DEFAULT_WALK_SPEED_M_PER_MIN = 80.0
DEFAULT_K_ACCESS = 5
DEFAULT_W = 4
DEFAULT_MAX_WALK_MIN = 30.0

# Routing edge: (sort key, head node, minutes, arc id or None, mode or None)
_Edge = tuple[str, str, float, str | None, str | None]

_ORIGIN = "@o"
_DEST = "@d"


@dataclass(frozen=True)
class TransitPath:
    """One considered path: ordered transit arc ids plus rider-facing times."""

    id: str
    trip_id: str
    arc_ids: tuple[str, ...]
    total_min: float
    transfers: int
    walk_min: float

    @property
    def transit_min(self) -> float:
        return self.total_min - self.walk_min

    @property
    def features(self) -> PathFeatures:
        return PathFeatures(
            total_min=self.total_min,
            transfers=self.transfers,
            walk_min=self.walk_min,
            transit_min=self.transit_min,
        )

    @property
    def is_pure_walk(self) -> bool:
        return not self.arc_ids


class AccessGraph:
    """All-open routing graph plus per-trip walk access edges."""

    def __init__(self, base_adj, trip_origin_edges, trip_dest_edges, k_access, walk_speed):
        self.base_adj: dict[str, tuple[_Edge, ...]] = base_adj
        self.trip_origin_edges: dict[str, tuple[_Edge, ...]] = trip_origin_edges
        self.trip_dest_edges: dict[str, dict[str, _Edge]] = trip_dest_edges
        self.k_access = k_access
        self.walk_speed = walk_speed


def _nearest_stops(stops, point, k):
    ranked = sorted(
        stops, key=lambda n: (math.hypot(n.x - point[0], n.y - point[1]), n.id)
    )
    return ranked[:k]


def build_access_graph(
    graph: TransitGraph,
    population: TripPopulation,
    k_access: int = DEFAULT_K_ACCESS,
    walk_speed: float = DEFAULT_WALK_SPEED_M_PER_MIN,
) -> AccessGraph:
    """Connect every trip endpoint to its k nearest stops by straight-line walk time."""
    if k_access < 1:
        raise StructureError("k_access must be >= 1")
    stops = graph.stops()
    if not stops:
        raise StructureError("graph has no stops to connect trips to")
    adj_tmp: dict[str, list[_Edge]] = {}
    for arc_id in sorted(graph.arcs):
        arc = graph.arcs[arc_id]
        adj_tmp.setdefault(arc.origin, []).append(
            (arc_id, arc.dest, arc.rider_min, arc_id, arc.mode)
        )
    base_adj = {node: tuple(sorted(edges)) for node, edges in adj_tmp.items()}

    trip_origin_edges: dict[str, tuple[_Edge, ...]] = {}
    trip_dest_edges: dict[str, dict[str, _Edge]] = {}
    for trip in population.ordered():
        origin_edges = []
        for stop in _nearest_stops(stops, trip.origin, k_access):
            minutes = math.hypot(stop.x - trip.origin[0], stop.y - trip.origin[1]) / walk_speed
            origin_edges.append(
                (f"walk:{_ORIGIN}>{stop.id}", stop.id, minutes, None, None)
            )
        dest_edges = {}
        for stop in _nearest_stops(stops, trip.dest, k_access):
            minutes = math.hypot(stop.x - trip.dest[0], stop.y - trip.dest[1]) / walk_speed
            dest_edges[stop.id] = (f"walk:{stop.id}>{_DEST}", _DEST, minutes, None, None)
        trip_origin_edges[trip.id] = tuple(sorted(origin_edges))
        trip_dest_edges[trip.id] = dest_edges
    return AccessGraph(base_adj, trip_origin_edges, trip_dest_edges, k_access, walk_speed)


def _dijkstra(neighbors, source, target, banned_nodes, banned_edges):
    """Min-time simple path with lexicographic edge-key tie-break.

    Returns (cost, edge list) or None if the target is unreachable.
    """
    heap = [(0.0, (), source, ())]
    settled: set[str] = set()
    while heap:
        cost, keys, node, edges = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == target:
            return cost, list(edges)
        for edge in neighbors(node):
            ekey, head, minutes, _, _ = edge
            if head in settled or head in banned_nodes or ekey in banned_edges:
                continue
            heapq.heappush(
                heap, (cost + minutes, keys + (ekey,), head, edges + (edge,))
            )
    return None


def _canonical_cost(edges) -> float:
    # fsum keeps equal-cost paths exactly tied regardless of summation order
    return math.fsum(e[2] for e in edges)


def _yen_paths(neighbors, source, target):
    """Yield loopless paths in (time, edge-key sequence) order."""
    first = _dijkstra(neighbors, source, target, set(), set())
    if first is None:
        return
    first_edges = first[1]
    accepted: list[list[_Edge]] = [first_edges]
    yield _canonical_cost(first_edges), first_edges
    candidates: list[tuple[float, tuple[str, ...], list[_Edge]]] = []
    seen = {tuple(e[0] for e in first_edges)}
    while True:
        prev_edges = accepted[-1]
        prev_nodes = [source] + [e[1] for e in prev_edges]
        for i in range(len(prev_edges)):
            spur_node = prev_nodes[i]
            root = prev_edges[:i]
            banned_edges = {
                acc_edges[i][0]
                for acc_edges in accepted
                if len(acc_edges) > i and acc_edges[:i] == root
            }
            banned_nodes = set(prev_nodes[:i])
            spur = _dijkstra(neighbors, spur_node, target, banned_nodes, banned_edges)
            if spur is None:
                continue
            total_edges = root + spur[1]
            key_seq = tuple(e[0] for e in total_edges)
            if key_seq in seen:
                continue
            seen.add(key_seq)
            heapq.heappush(candidates, (_canonical_cost(total_edges), key_seq, total_edges))
        if not candidates:
            return
        cost, _, edges = heapq.heappop(candidates)
        accepted.append(edges)
        yield cost, edges


def _path_from_edges(trip_id, path_id, edges) -> TransitPath:
    walk_min = math.fsum(e[2] for e in edges if e[3] is None)
    transit = [e for e in edges if e[3] is not None]
    transit_min = math.fsum(e[2] for e in transit)
    transfers = sum(
        1 for a, b in zip(transit, transit[1:]) if a[4] != b[4]
    )
    total = walk_min + transit_min
    return TransitPath(
        id=path_id,
        trip_id=trip_id,
        arc_ids=tuple(e[3] for e in transit),
        total_min=total,
        transfers=transfers,
        walk_min=walk_min,
    )


def enumerate_paths(
    access: AccessGraph,
    trip: Trip,
    w: int = DEFAULT_W,
    max_walk_min: float | None = DEFAULT_MAX_WALK_MIN,
    allow_pure_walk: bool = True,
) -> list[TransitPath]:
    """Up to w fastest loopless paths for one trip, fastest first.

    Paths whose walking time exceeds ``max_walk_min`` are discarded, as are
    duplicates of an already-accepted transit arc sequence (two access
    variants of the same arc run count once, fastest kept).
    """
    if w < 1:
        raise StructureError("w must be >= 1")
    origin_edges = access.trip_origin_edges[trip.id]
    dest_edges = access.trip_dest_edges[trip.id]

    def neighbors(node):
        if node == _ORIGIN:
            return origin_edges
        base = access.base_adj.get(node, ())
        exit_edge = dest_edges.get(node)
        if exit_edge is not None:
            return base + (exit_edge,)
        return base

    chosen: list[TransitPath] = []
    seen_arc_seqs: set[tuple[str, ...]] = set()
    for _cost, edges in _yen_paths(neighbors, _ORIGIN, _DEST):
        path = _path_from_edges(trip.id, f"p{len(chosen)}", edges)
        if max_walk_min is not None and path.walk_min > max_walk_min + 1e-12:
            continue
        if not allow_pure_walk and path.is_pure_walk:
            continue
        if path.arc_ids in seen_arc_seqs:
            continue
        seen_arc_seqs.add(path.arc_ids)
        chosen.append(path)
        if len(chosen) >= w:
            break
    return chosen


class PathSet:
    """Frozen per-trip considered paths, fastest first."""

    def __init__(self, paths_by_trip: dict[str, list[TransitPath]]):
        self.by_trip = paths_by_trip

    @classmethod
    def build(
        cls,
        access: AccessGraph,
        population: TripPopulation,
        w: int = DEFAULT_W,
        max_walk_min: float | None = DEFAULT_MAX_WALK_MIN,
        allow_pure_walk: bool = True,
    ) -> "PathSet":
        by_trip = {}
        for trip in population.ordered():
            by_trip[trip.id] = enumerate_paths(
                access, trip, w=w, max_walk_min=max_walk_min, allow_pure_walk=allow_pure_walk
            )
        return cls(by_trip)

    def paths(self, trip_id: str) -> list[TransitPath]:
        try:
            return self.by_trip[trip_id]
        except KeyError:
            raise StructureError(f"no path set for trip {trip_id}") from None

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_trip.values())


def path_feasible(design: NetworkDesign, path: TransitPath) -> bool:
    """True iff every transit arc on the path is open; walk legs never constrain."""
    for arc_id in path.arc_ids:
        if arc_id not in design.open:
            raise StructureError(f"path {path.trip_id}/{path.id} uses unknown arc {arc_id}")
        if not design.open[arc_id]:
            return False
    return True


# ---------------------------------------------------------------------------
# Paths file: trip_id,path_id,rank,total_min,transfers,walk_min,arc_ids
# arc ids are joined with '+'; a pure-walk path has an empty arc_ids field.
# ---------------------------------------------------------------------------

PATHS_HEADER = ("trip_id", "path_id", "rank", "total_min", "transfers", "walk_min", "arc_ids")


def save_paths(
    pathset: PathSet, path: str | FsPath, provenance: dict[str, str] | None = None
) -> None:
    rows = []
    for trip_id in sorted(pathset.by_trip):
        for rank, p in enumerate(pathset.by_trip[trip_id]):
            rows.append(
                (
                    trip_id,
                    p.id,
                    str(rank),
                    fileio.fmt_num(p.total_min),
                    str(p.transfers),
                    fileio.fmt_num(p.walk_min),
                    "+".join(p.arc_ids),
                )
            )
    fileio.write_delimited(
        path, PATHS_HEADER, rows, {**fileio.provenance_for("paths"), **(provenance or {})}
    )


def load_paths(
    path: str | FsPath,
    population: TripPopulation | None = None,
    graph: TransitGraph | None = None,
) -> PathSet:
    path_str = str(path)
    _, header, rows = fileio.read_delimited(path)
    if tuple(header) != PATHS_HEADER:
        raise FormatError(path_str, 1, f"expected header {','.join(PATHS_HEADER)}")
    by_trip: dict[str, list[TransitPath]] = {}
    for lineno, fields in rows:
        if len(fields) != len(PATHS_HEADER):
            raise FormatError(path_str, lineno, "wrong field count")
        trip_id, path_id, rank, total_min, transfers, walk_min, arc_field = fields
        arc_ids = tuple(arc_field.split("+")) if arc_field else ()
        if graph is not None:
            for a in arc_ids:
                if a not in graph.arcs:
                    raise FormatError(path_str, lineno, f"unknown arc id {a}")
        p = TransitPath(
            id=path_id,
            trip_id=trip_id,
            arc_ids=arc_ids,
            total_min=float(total_min),
            transfers=int(transfers),
            walk_min=float(walk_min),
        )
        bucket = by_trip.setdefault(trip_id, [])
        if int(rank) != len(bucket):
            raise FormatError(path_str, lineno, f"rank {rank} out of order for {trip_id}")
        if bucket and p.total_min + 1e-12 < bucket[-1].total_min:
            raise FormatError(path_str, lineno, "paths not sorted by total time")
        bucket.append(p)
    if population is not None:
        for trip_id in population.trips:
            by_trip.setdefault(trip_id, [])
        extra = set(by_trip).difference(population.trips)
        if extra:
            raise StructureError(f"paths file references unknown trips: {sorted(extra)[:5]}")
    return PathSet(by_trip)
