import pytest
from hypothesis import given, strategies as st

from transitopt.demand import (
    FeatureSpec,
    Trip,
    TripPopulation,
    coverage,
    load_trips,
    save_trips,
)
from transitopt.errors import FormatError, StructureError
from conftest import SCHEMA, make_trip


def test_coverage_all_zero(small_population):
    usage = {t: False for t in small_population.trips}
    assert coverage(small_population, usage) == 0


def test_coverage_weights_by_riders(small_population):
    usage = {"t1": True, "t2": True, "t3": False}
    assert coverage(small_population, usage) == 1 + 3


def test_coverage_single_rider_convention():
    # with one rider per trip, coverage equals the count of using trips
    trips = [make_trip(f"t{k}", riders=1) for k in range(5)]
    pop = TripPopulation(trips, SCHEMA)
    usage = {t.id: t.id in {"t0", "t2", "t3"} for t in trips}
    assert coverage(pop, usage) == 3


def test_coverage_requires_full_usage_map(small_population):
    with pytest.raises(StructureError):
        coverage(small_population, {"t1": True})


@given(st.lists(st.tuples(st.integers(1, 9), st.booleans(), st.booleans()),
                min_size=1, max_size=12))
def test_coverage_inclusion_exclusion(spec):
    trips = [make_trip(f"t{k}", riders=riders) for k, (riders, _, _) in enumerate(spec)]
    pop = TripPopulation(trips, SCHEMA)
    u1 = {f"t{k}": a for k, (_, a, _) in enumerate(spec)}
    u2 = {f"t{k}": b for k, (_, _, b) in enumerate(spec)}
    u_or = {t: u1[t] or u2[t] for t in u1}
    u_and = {t: u1[t] and u2[t] for t in u1}
    assert coverage(pop, u_or) + coverage(pop, u_and) == coverage(pop, u1) + coverage(pop, u2)


def test_trip_rejects_zero_riders():
    with pytest.raises(StructureError):
        make_trip("t1", riders=0).validate(SCHEMA)


def test_population_rejects_duplicate_ids():
    with pytest.raises(StructureError):
        TripPopulation([make_trip("t1"), make_trip("t1")], SCHEMA)


def test_trips_file_roundtrip(tmp_path, small_population):
    path = tmp_path / "trips.csv"
    save_trips(small_population, path)
    loaded = load_trips(path)
    assert len(loaded) == len(small_population)
    assert loaded.schema == small_population.schema
    for trip_id, trip in small_population.trips.items():
        other = loaded.trip(trip_id)
        assert other.context == trip.context
        assert other.riders == trip.riders
        assert other.origin == trip.origin
    # save -> load -> save is byte identical
    save_trips(loaded, tmp_path / "again.csv")
    assert path.read_text() == (tmp_path / "again.csv").read_text()


def test_empty_body_loads_zero_trips(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("id,ox,oy,dx,dy,e_r,current_mode,drive_min:numeric\n")
    assert len(load_trips(path)) == 0


def test_single_row_parses_riders(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text(
        "id,ox,oy,dx,dy,e_r,current_mode,drive_min:numeric\n"
        "t1,0.0,0.0,5.0,5.0,4,transit,12.5\n"
    )
    pop = load_trips(path)
    assert pop.trip("t1").riders == 4
    assert pop.trip("t1").context["drive_min"] == 12.5


def test_zero_riders_row_rejected_with_line(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text(
        "id,ox,oy,dx,dy,e_r,current_mode,drive_min:numeric\n"
        "t1,0.0,0.0,5.0,5.0,0,transit,12.5\n"
    )
    with pytest.raises(FormatError) as err:
        load_trips(path)
    assert err.value.line == 2


def test_missing_field_rejected(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text(
        "id,ox,oy,dx,dy,e_r,current_mode,drive_min:numeric\n"
        "t1,0.0,0.0,5.0,5.0,1,transit\n"
    )
    with pytest.raises(FormatError):
        load_trips(path)


def test_categorical_values_quoted(tmp_path, small_population):
    path = tmp_path / "trips.csv"
    save_trips(small_population, path)
    row = [line for line in path.read_text().splitlines() if line.startswith("t1,")][0]
    assert '"own"' in row


def test_bad_feature_kind_rejected(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("id,ox,oy,dx,dy,e_r,current_mode,foo:weird\nt1,0,0,1,1,1,drive,3\n")
    with pytest.raises(FormatError):
        load_trips(path)


def test_schema_kind_validation():
    with pytest.raises(Exception):
        FeatureSpec("x", "continuous")
