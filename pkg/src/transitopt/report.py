"""Report rendering: delimited comparison tables, aligned text, figures, geojson.

The benchmark report mirrors the usual comparison layout: one row per run
with run time, opened bus arcs, mean core/latent/adopted counts, in-sample
coverage and its bound, mean best travel time, and the out-of-sample eval
score with its violation count. Alongside the delimited file the report path
renders two matplotlib figures: a map of the design and a coverage bar chart.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evalbench import BenchRow
from .network import NetworkDesign, TransitGraph
from . import fileio

REPORT_HEADER = (
    "run",
    "status",
    "run_time_s",
    "opened_bus_arcs",
    "mean_core",
    "mean_latent",
    "adopted",
    "adopted_pct",
    "coverage",
    "coverage_bound",
    "travel_time_min",
    "eval",
    "violations",
)


def _cell(value, digits: int = 2) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _row_cells(row: BenchRow) -> list[str]:
    return [
        row.name,
        row.status,
        _cell(row.run_time_s),
        str(row.opened_bus_arcs),
        _cell(row.mean_core),
        _cell(row.mean_latent),
        _cell(row.mean_adopted),
        _cell(100.0 * row.adopted_pct if row.adopted_pct is not None else None),
        _cell(row.coverage),
        _cell(row.coverage_bound),
        _cell(row.travel_time_min),
        _cell(row.eval_value),
        str(row.violations),
    ]


def write_report_csv(rows: list[BenchRow], path: str | Path,
                     provenance: dict[str, str] | None = None) -> None:
    fileio.write_delimited(
        path,
        REPORT_HEADER,
        [_row_cells(r) for r in rows],
        {**fileio.provenance_for("bench-report"), **(provenance or {})},
    )


def render_report_text(rows: list[BenchRow]) -> str:
    table = [list(REPORT_HEADER)] + [_row_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(REPORT_HEADER))]
    out = []
    for i, line in enumerate(table):
        out.append("  ".join(cell.rjust(w) for cell, w in zip(line, widths)))
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def plot_design(graph: TransitGraph, design: NetworkDesign, path: str | Path,
                title: str = "network design") -> None:
    """Render stops and open arcs to an image file (closed candidates in grey)."""
    fig, ax = plt.subplots(figsize=(8, 8))
    for arc_id, arc in sorted(graph.arcs.items()):
        a, b = graph.nodes[arc.origin], graph.nodes[arc.dest]
        if not design.open[arc_id]:
            ax.plot([a.x, b.x], [a.y, b.y], color="0.85", lw=0.6, zorder=1)
            continue
        if arc.mode == "rail":
            ax.plot([a.x, b.x], [a.y, b.y], color="firebrick", lw=2.4, zorder=3)
        else:
            ax.plot([a.x, b.x], [a.y, b.y], color="steelblue", lw=1.4, zorder=2)
    xs = [n.x for n in graph.nodes.values()]
    ys = [n.y for n in graph.nodes.values()]
    rail = [n.is_rail_station for n in graph.nodes.values()]
    ax.scatter(
        [x for x, r in zip(xs, rail) if not r],
        [y for y, r in zip(ys, rail) if not r],
        s=12, color="0.3", zorder=4,
    )
    ax.scatter(
        [x for x, r in zip(xs, rail) if r],
        [y for y, r in zip(ys, rail) if r],
        s=36, color="firebrick", marker="s", zorder=5, label="rail station",
    )
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.set_xlabel("meters")
    ax.set_ylabel("meters")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_benchmark(rows: list[BenchRow], path: str | Path) -> None:
    """Bar chart of eval coverage and eval score per run."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    names = [r.name for r in rows]
    evals = [r.eval_value for r in rows]
    coverages = [r.coverage for r in rows]
    x = range(len(rows))
    ax.bar([i - 0.2 for i in x], coverages, width=0.4, label="coverage", color="steelblue")
    ax.bar([i + 0.2 for i in x], evals, width=0.4, label="eval", color="darkorange")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names)
    ax.set_ylabel("riders")
    ax.set_title("benchmark comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def design_geojson(graph: TransitGraph, design: NetworkDesign) -> dict:
    """Open arcs as a FeatureCollection of LineStrings (planar meter coordinates)."""
    features = []
    for arc_id in design.open_ids():
        arc = graph.arcs[arc_id]
        a, b = graph.nodes[arc.origin], graph.nodes[arc.dest]
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[a.x, a.y], [b.x, b.y]],
                },
                "properties": {
                    "arc_id": arc_id,
                    "mode": arc.mode,
                    "frequency": arc.frequency,
                    "is_fixed": arc.is_fixed,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_design_geojson(graph: TransitGraph, design: NetworkDesign, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(design_geojson(graph, design), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
