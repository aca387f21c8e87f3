"""Scenario sampling for the sample-average approximation.

Each scenario i draws, per trip, a core indicator from the core model and,
for latent trips, an adoption indicator per considered path from the adopt
model. Draws come from a counter-based generator keyed on (master seed,
scenario index, trip, slot), so every (scenario, trip) pair owns its own
stream: adding trips or scenarios never perturbs other draws, and sampling
order is irrelevant.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .choice import ChoiceModel, adopt_key, model_fingerprint, prob_adopt, prob_core
from .demand import TripPopulation
from .errors import FormatError, StructureError
from .pathing import PathSet
from . import fileio

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(1 << 53)

# Draw slots within a (scenario, trip) stream.
CORE_SLOT = 0
ADOPT_SLOT_BASE = 1


def _mix64(x: np.ndarray) -> np.ndarray:
    # uint64 wraparound is the point here; silence numpy's scalar-overflow warning
    with np.errstate(over="ignore"):
        z = (x + _GAMMA).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def trip_stream_key(trip_id: str) -> int:
    """Stable 64-bit key for a trip id (independent of Python's hash seed)."""
    digest = hashlib.sha256(trip_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def counter_uniforms(master_seed: int, scenario_idx, trip_key: int, slot: int) -> np.ndarray:
    """Uniforms in [0, 1) for the given (seed, scenario, trip, slot) counters.

    ``scenario_idx`` may be a scalar or an array; the result is vectorized
    over it. Pure function: the same counters always yield the same value.
    """
    scen = np.atleast_1d(np.asarray(scenario_idx, dtype=np.uint64))
    with np.errstate(over="ignore"):
        k = _mix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF))
        k = _mix64(k ^ np.uint64(trip_key))
        k = _mix64(k + np.uint64(slot) * _GAMMA)
        out = _mix64(_mix64(k ^ scen))
    return (out >> np.uint64(11)).astype(np.float64) / _U53


def scenario_seed(master_seed: int, index: int) -> int:
    return int(_mix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(index))[()])


@dataclass
class Scenario:
    """One joint draw: core indicators for all trips, adoption per latent path."""

    index: int
    core: dict[str, bool]
    adopt: dict[tuple[str, str], bool]

    @property
    def core_trips(self) -> set[str]:
        return {t for t, c in self.core.items() if c}

    @property
    def latent_trips(self) -> set[str]:
        return {t for t, c in self.core.items() if not c}


@dataclass
class ScenarioBundle:
    scenarios: list[Scenario]
    master_seed: int
    scenario_seeds: list[int]
    pruned: list[tuple[int, str]] = field(default_factory=list)
    pre_infeasible: list[tuple[int, str]] = field(default_factory=list)
    model_fingerprints: dict[str, str] = field(default_factory=dict)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)


def sample_scenarios(
    population: TripPopulation,
    pathset: PathSet,
    core_model: ChoiceModel,
    adopt_model: ChoiceModel,
    n_scenarios: int,
    seed: int,
) -> ScenarioBundle:
    """Draw n i.i.d. scenarios of core membership and per-path adoption.

    Adoption indicators are drawn only for latent trips (core draws dominate
    anyway). Latent trips rejecting every considered path are recorded as
    prunable for that scenario; core trips with an empty path set are recorded
    as pre-infeasible, since no design could ever serve them.
    """
    if n_scenarios < 1:
        raise StructureError("scenario count must be >= 1")
    scen_idx = np.arange(n_scenarios)
    scenarios = [Scenario(i, {}, {}) for i in range(n_scenarios)]
    pruned: list[tuple[int, str]] = []
    pre_infeasible: list[tuple[int, str]] = []

    for trip in population.ordered():
        paths = pathset.paths(trip.id)
        key = trip_stream_key(trip.id)
        p_core = prob_core(core_model, trip.context, key=trip.id)
        core_draws = counter_uniforms(seed, scen_idx, key, CORE_SLOT) < p_core
        adopt_draws = []
        for rank, path in enumerate(paths):
            q = prob_adopt(
                adopt_model, trip.context, path.features, key=adopt_key(trip.id, path.id)
            )
            adopt_draws.append(
                counter_uniforms(seed, scen_idx, key, ADOPT_SLOT_BASE + rank) < q
            )
        for i in range(n_scenarios):
            is_core = bool(core_draws[i])
            scenarios[i].core[trip.id] = is_core
            if is_core:
                if not paths:
                    pre_infeasible.append((i, trip.id))
                continue
            any_adopted = False
            for path, draws in zip(paths, adopt_draws):
                d = bool(draws[i])
                scenarios[i].adopt[(trip.id, path.id)] = d
                any_adopted = any_adopted or d
            if not any_adopted:
                pruned.append((i, trip.id))

    return ScenarioBundle(
        scenarios=scenarios,
        master_seed=seed,
        scenario_seeds=[scenario_seed(seed, i) for i in range(n_scenarios)],
        pruned=pruned,
        pre_infeasible=pre_infeasible,
        model_fingerprints={
            "core_model": model_fingerprint(core_model),
            "adopt_model": model_fingerprint(adopt_model),
        },
    )


def coverage_bound(bundle: ScenarioBundle, population: TripPopulation, pathset: PathSet) -> float:
    """Mean riders reachable with every arc open (budget ignored)."""
    return coverage_bound_int(bundle, population, pathset) / bundle.n_scenarios


def coverage_bound_int(
    bundle: ScenarioBundle, population: TripPopulation, pathset: PathSet
) -> int:
    """Integer rider-scenario count behind the coverage bound (sum, not mean)."""
    if not bundle.scenarios:
        raise StructureError("empty scenario bundle")
    total = 0
    for scenario in bundle.scenarios:
        for trip in population.trips.values():
            if scenario.core[trip.id]:
                total += trip.riders
            elif any(
                scenario.adopt.get((trip.id, p.id), False) for p in pathset.paths(trip.id)
            ):
                total += trip.riders
    return total


# ---------------------------------------------------------------------------
# Scenario file: "i,trip_id,c" rows then "i,trip_id,path_id,d" rows.
# Sections share one file; rows are told apart by field count.
# ---------------------------------------------------------------------------

SCENARIO_HEADER = ("i", "trip_id", "c_or_path", "d")


def save_bundle(
    bundle: ScenarioBundle, path: str | Path, provenance: dict[str, str] | None = None
) -> None:
    prov = fileio.provenance_for(
        "scenarios",
        seed=bundle.master_seed,
        extra={
            "n_scenarios": str(bundle.n_scenarios),
            **{k: v for k, v in sorted(bundle.model_fingerprints.items())},
        },
    )
    prov.update(provenance or {})
    lines = [f"# {k}: {v}" for k, v in prov.items()]
    lines.append("# core rows: i,trip_id,c")
    for scenario in bundle.scenarios:
        for trip_id in sorted(scenario.core):
            lines.append(f"{scenario.index},{trip_id},{int(scenario.core[trip_id])}")
    lines.append("# adopt rows: i,trip_id,path_id,d")
    for scenario in bundle.scenarios:
        for trip_id, path_id in sorted(scenario.adopt):
            d = scenario.adopt[(trip_id, path_id)]
            lines.append(f"{scenario.index},{trip_id},{path_id},{int(d)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def load_bundle(path: str | Path, population: TripPopulation, pathset: PathSet) -> ScenarioBundle:
    path_str = str(path)
    provenance: dict[str, str] = {}
    core_rows: list[tuple[int, int, str, bool]] = []
    adopt_rows: list[tuple[int, int, str, str, bool]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if ":" in body:
                k, _, v = body.partition(":")
                provenance[k.strip()] = v.strip()
            continue
        fields = line.split(",")
        if len(fields) == 3:
            core_rows.append((lineno, int(fields[0]), fields[1], fields[2] == "1"))
        elif len(fields) == 4:
            adopt_rows.append((lineno, int(fields[0]), fields[1], fields[2], fields[3] == "1"))
        else:
            raise FormatError(path_str, lineno, "expected 3 or 4 fields")
    try:
        n = int(provenance["n_scenarios"])
        seed = int(provenance["seed"])
    except (KeyError, ValueError) as exc:
        raise FormatError(path_str, 1, f"missing bundle header field: {exc}") from exc
    scenarios = [Scenario(i, {}, {}) for i in range(n)]
    for lineno, i, trip_id, c in core_rows:
        if not 0 <= i < n:
            raise FormatError(path_str, lineno, f"scenario index {i} out of range")
        if trip_id not in population.trips:
            raise FormatError(path_str, lineno, f"unknown trip {trip_id}")
        scenarios[i].core[trip_id] = c
    for lineno, i, trip_id, path_id, d in adopt_rows:
        if trip_id not in population.trips:
            raise FormatError(path_str, lineno, f"unknown trip {trip_id}")
        scenarios[i].adopt[(trip_id, path_id)] = d
    pruned = []
    pre_infeasible = []
    for scenario in scenarios:
        missing = set(population.trips).difference(scenario.core)
        if missing:
            raise FormatError(
                path_str, 1, f"scenario {scenario.index} missing core rows for {sorted(missing)[:3]}"
            )
        for trip in population.trips.values():
            paths = pathset.paths(trip.id)
            if scenario.core[trip.id]:
                if not paths:
                    pre_infeasible.append((scenario.index, trip.id))
            elif not any(
                scenario.adopt.get((trip.id, p.id), False) for p in paths
            ):
                pruned.append((scenario.index, trip.id))
    fingerprints = {
        k: v for k, v in provenance.items() if k in ("core_model", "adopt_model")
    }
    return ScenarioBundle(
        scenarios=scenarios,
        master_seed=seed,
        scenario_seeds=[scenario_seed(seed, i) for i in range(n)],
        pruned=pruned,
        pre_infeasible=pre_infeasible,
        model_fingerprints=fingerprints,
    )
