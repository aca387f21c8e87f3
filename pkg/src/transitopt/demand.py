"""Trip records and the trip population.

A trip is an origin-destination pair travelled together by ``riders`` people
who share one decision, plus a context vector of instance-defined features
(numeric, ordinal, or categorical). The population carries the shared feature
schema; every trip must match it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, SchemaError, StructureError
from . import fileio

FEATURE_KINDS = ("numeric", "ordinal", "categorical")
CURRENT_MODES = ("transit", "drive")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # numeric | ordinal | categorical

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"feature {self.name}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Trip:
    id: str
    origin: tuple[float, float]
    dest: tuple[float, float]
    riders: int
    context: dict[str, object]
    current_mode: str = "drive"

    def validate(self, schema: tuple[FeatureSpec, ...]) -> None:
        if self.riders < 1:
            raise StructureError(f"trip {self.id}: riders must be >= 1")
        if self.origin == self.dest:
            raise StructureError(f"trip {self.id}: origin equals destination")
        if self.current_mode not in CURRENT_MODES:
            raise StructureError(f"trip {self.id}: bad current_mode {self.current_mode!r}")
        if set(self.context) != {f.name for f in schema}:
            raise SchemaError(f"trip {self.id}: context does not match schema")
        for spec in schema:
            value = self.context[spec.name]
            if spec.kind == "numeric" and not math.isfinite(float(value)):
                raise SchemaError(f"trip {self.id}: non-finite value for {spec.name}")
            if spec.kind == "ordinal" and int(value) != value:
                raise SchemaError(f"trip {self.id}: ordinal {spec.name} must be integer")


class TripPopulation:
    """All trips of one instance plus their shared context schema."""

    def __init__(self, trips, schema):
        self.schema: tuple[FeatureSpec, ...] = tuple(schema)
        self.trips: dict[str, Trip] = {}
        for trip in trips:
            if trip.id in self.trips:
                raise StructureError(f"duplicate trip id {trip.id}")
            trip.validate(self.schema)
            self.trips[trip.id] = trip

    def __len__(self) -> int:
        return len(self.trips)

    def trip(self, trip_id: str) -> Trip:
        try:
            return self.trips[trip_id]
        except KeyError:
            raise StructureError(f"unknown trip id {trip_id}") from None

    def ordered(self) -> list[Trip]:
        return [self.trips[t] for t in sorted(self.trips)]

    def total_riders(self) -> int:
        return sum(t.riders for t in self.trips.values())


def coverage(population: TripPopulation, usage: dict[str, bool]) -> int:
    """Riders covered under a usage map: sum of riders over trips with usage 1."""
    missing = set(population.trips).difference(usage)
    if missing:
        raise StructureError(f"usage map missing trips: {sorted(missing)[:5]}")
    return sum(t.riders for t in population.trips.values() if usage[t.id])


# ---------------------------------------------------------------------------
# Trips file: id,ox,oy,dx,dy,e_r,current_mode,<feature:kind>...
# Categorical values are double-quoted; numerics are plain decimals.
# ---------------------------------------------------------------------------

FIXED_FIELDS = ("id", "ox", "oy", "dx", "dy", "e_r", "current_mode")


def _format_feature(spec: FeatureSpec, value) -> str:
    if spec.kind == "categorical":
        text = str(value)
        if '"' in text or "," in text or "\n" in text:
            raise SchemaError(f"categorical value {text!r} may not contain quotes or commas")
        return f'"{text}"'
    if spec.kind == "ordinal":
        return str(int(value))
    return fileio.fmt_num(float(value))


def save_trips(
    population: TripPopulation, path: str | Path, provenance: dict[str, str] | None = None
) -> None:
    header = list(FIXED_FIELDS) + [f"{s.name}:{s.kind}" for s in population.schema]
    rows = []
    for trip in population.ordered():
        row = [
            trip.id,
            fileio.fmt_num(trip.origin[0]),
            fileio.fmt_num(trip.origin[1]),
            fileio.fmt_num(trip.dest[0]),
            fileio.fmt_num(trip.dest[1]),
            str(trip.riders),
            trip.current_mode,
        ]
        row.extend(_format_feature(s, trip.context[s.name]) for s in population.schema)
        rows.append(row)
    fileio.write_delimited(
        path, header, rows, {**fileio.provenance_for("trips"), **(provenance or {})}
    )


def load_trips(path: str | Path) -> TripPopulation:
    path_str = str(path)
    _, header, rows = fileio.read_delimited(path)
    if tuple(header[: len(FIXED_FIELDS)]) != FIXED_FIELDS:
        raise FormatError(path_str, 1, f"header must start with {','.join(FIXED_FIELDS)}")
    schema = []
    for cell in header[len(FIXED_FIELDS) :]:
        name, sep, kind = cell.partition(":")
        if not sep or kind not in FEATURE_KINDS:
            raise FormatError(path_str, 1, f"bad feature column {cell!r}")
        schema.append(FeatureSpec(name, kind))
    schema = tuple(schema)
    trips = []
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise FormatError(
                path_str, lineno, f"expected {len(header)} fields, got {len(fields)}"
            )
        try:
            riders = int(fields[5])
            context: dict[str, object] = {}
            for spec, raw in zip(schema, fields[len(FIXED_FIELDS) :]):
                if spec.kind == "categorical":
                    context[spec.name] = raw
                elif spec.kind == "ordinal":
                    context[spec.name] = int(raw)
                else:
                    context[spec.name] = float(raw)
            trip = Trip(
                id=fields[0],
                origin=(float(fields[1]), float(fields[2])),
                dest=(float(fields[3]), float(fields[4])),
                riders=riders,
                context=context,
                current_mode=fields[6],
            )
            trip.validate(schema)
        except (ValueError, StructureError, SchemaError) as exc:
            raise FormatError(path_str, lineno, str(exc)) from exc
        trips.append(trip)
    return TripPopulation(trips, schema)
