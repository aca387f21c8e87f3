"""Command-line pipeline: gen, paths, train, sample, solve, eval, bench.

Each subcommand reads the artifacts of the previous stage, writes its own
artifacts with provenance headers (input hashes, seed, tool version) into an
output directory, and finishes with a manifest listing artifact hashes.
Re-running a stage with the same inputs and flags reproduces its outputs
byte for byte.

Exit codes: 0 success, 2 parse/configuration error, 3 infeasible model,
4 timeout without an incumbent.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import choice, demand, evalbench, fileio, instgen, modelio, network, optimizer
from . import pathing, report, scenario
from .errors import (
    FormatError,
    InfeasibleError,
    SchemaError,
    StructureError,
    TransitOptError,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_TIMEOUT = 4


def parse_config_file(path: str) -> dict[str, str]:
    """key=value lines; '#' comments and blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise FormatError(path, lineno, f"expected key=value, got {stripped!r}")
        out[key.strip()] = value.strip()
    return out


def _merge(args: argparse.Namespace, config: dict[str, str], key: str, cast, default):
    """Effective option value: explicit flag > config file > default."""
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in config:
        try:
            return cast(config[key])
        except ValueError as exc:
            raise SchemaError(f"config key {key}: {exc}") from exc
    return default


def _hash_inputs(**paths: str) -> dict[str, str]:
    return {name: fileio.sha256_file(p) for name, p in paths.items() if p}


def _load_instance(args):
    graph = network.load_graph(args.nodes, args.arcs)
    population = demand.load_trips(args.trips)
    return graph, population


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    config = parse_config_file(args.config) if args.config else {}
    if args.preset:
        spec = instgen.preset(args.preset, seed=args.seed)
    else:
        spec = instgen.GenSpec(seed=args.seed)
    for key, raw in config.items():
        if not hasattr(spec, key):
            raise SchemaError(f"unknown generator key {key!r}")
        current = getattr(spec, key)
        cast = type(current)
        setattr(spec, key, cast(raw) if not isinstance(current, bool) else raw == "1")
    spec.seed = args.seed

    graph, population, core_model, adopt_model = instgen.generate(spec)
    out = fileio.ensure_dir(args.out_dir)
    prov = {"seed": str(spec.seed), "preset": args.preset or "custom"}
    network.save_graph(graph, out / "nodes.csv", out / "arcs.csv", provenance=prov)
    demand.save_trips(population, out / "trips.csv", provenance=prov)
    choice.save_model(core_model, out / "core_truth.model")
    choice.save_model(adopt_model, out / "adopt_truth.model")
    fileio.write_manifest(
        out, ["nodes.csv", "arcs.csv", "trips.csv", "core_truth.model", "adopt_truth.model"]
    )
    print(f"generated {len(graph.nodes)} stops, {len(graph.arcs)} arcs, "
          f"{len(population)} trips -> {out}")
    return EXIT_OK


def cmd_paths(args) -> int:
    config = parse_config_file(args.config) if args.config else {}
    w = _merge(args, config, "w", int, pathing.DEFAULT_W)
    k_access = _merge(args, config, "k_access", int, pathing.DEFAULT_K_ACCESS)
    walk_speed = _merge(args, config, "walk_speed", float, pathing.DEFAULT_WALK_SPEED_M_PER_MIN)
    max_walk = _merge(args, config, "max_walk_min", float, pathing.DEFAULT_MAX_WALK_MIN)

    graph, population = _load_instance(args)
    access = pathing.build_access_graph(graph, population, k_access=k_access, walk_speed=walk_speed)
    pathset = pathing.PathSet.build(access, population, w=w, max_walk_min=max_walk)
    out = fileio.ensure_dir(args.out_dir)
    prov = {
        **_hash_inputs(nodes=args.nodes, arcs=args.arcs, trips=args.trips),
        "w": str(w),
        "k_access": str(k_access),
    }
    pathing.save_paths(pathset, out / "paths.csv", provenance=prov)
    fileio.write_manifest(out, ["paths.csv"])
    print(f"enumerated {len(pathset)} paths for {len(population)} trips -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = choice.load_training(args.data)
    c_grid = tuple(float(x) for x in args.grid_c.split(",")) if args.grid_c else None
    w_grid = tuple(float(x) for x in args.grid_weight.split(",")) if args.grid_weight else None
    model, cv = choice.train_logit(
        dataset, task=args.task, c_grid=c_grid, weight_grid=w_grid,
        folds=args.folds, seed=args.seed,
    )
    out = fileio.ensure_dir(args.out_dir)
    choice.save_model(model, out / f"{args.task}.model")
    lines = [f"# artifact: cv-report\n# scoring: {cv.scoring}\n# seed: {cv.seed}\n"]
    lines.append("c,class_weight,mean_score\n")
    for c, wgt, score in cv.grid_scores:
        lines.append(f"{fileio.fmt_num(c)},{fileio.fmt_num(wgt)},{fileio.fmt_num(score)}\n")
    lines.append(f"# best: c={fileio.fmt_num(cv.best_c)} "
                 f"weight={fileio.fmt_num(cv.best_weight)} score={fileio.fmt_num(cv.best_score)}\n")
    (out / "cv_report.csv").write_text("".join(lines), encoding="utf-8", newline="")
    fileio.write_manifest(out, [f"{args.task}.model", "cv_report.csv"])
    print(f"trained {args.task} model: best C={cv.best_c} weight={cv.best_weight} "
          f"cv {cv.scoring}={cv.best_score:.4f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    population = demand.load_trips(args.trips)
    pathset = pathing.load_paths(args.paths, population)
    core_model = choice.load_model(args.core_model)
    adopt_model = choice.load_model(args.adopt_model)
    bundle = scenario.sample_scenarios(
        population, pathset, core_model, adopt_model, args.scenarios, args.seed
    )
    out = fileio.ensure_dir(args.out_dir)
    prov = _hash_inputs(
        trips=args.trips, paths=args.paths,
        core_model=args.core_model, adopt_model=args.adopt_model,
    )
    scenario.save_bundle(bundle, out / "scenarios.csv", provenance=prov)
    fileio.write_manifest(out, ["scenarios.csv"])
    if bundle.pre_infeasible:
        print(f"warning: {len(bundle.pre_infeasible)} core scenario-trips have no paths "
              "(model will be infeasible)", file=sys.stderr)
    print(f"sampled {bundle.n_scenarios} scenarios "
          f"({len(bundle.pruned)} pruned latent scenario-trips) -> {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    graph, population = _load_instance(args)
    pathset = pathing.load_paths(args.paths, population, graph)
    bundle = scenario.load_bundle(args.scenarios, population, pathset)
    model = optimizer.compile_model(graph, population, pathset, bundle, args.budget)
    out = fileio.ensure_dir(args.out_dir)
    artifacts = []

    if args.solver == "export":
        suffix = "lp" if args.export_format == "lp_text" else "opb"
        modelio.export_model(model, args.export_format, out / f"model.{suffix}")
        artifacts.append(f"model.{suffix}")
        fileio.write_manifest(out, artifacts)
        print(f"exported {args.export_format} model "
              f"({model.counts['z_vars']} z, {model.counts['f_vars']} f, "
              f"{model.counts['d_vars']} d vars) -> {out}")
        return EXIT_OK

    if args.solver == "exact":
        result = optimizer.solve_exact(model, time_limit_s=args.time_limit_s)
    else:
        result = optimizer.solve_heuristic(
            model, time_limit_s=args.time_limit_s, seed=args.seed,
            portfolio_size=args.portfolio_size,
        )
    if result.design is None:
        if result.status == "timeout":
            print("timeout with no incumbent design", file=sys.stderr)
            return EXIT_TIMEOUT
        print("model infeasible: budget cannot serve all core trips", file=sys.stderr)
        return EXIT_INFEASIBLE

    replay = optimizer.evaluate_in_sample(result.design, model)
    prov = {
        **_hash_inputs(nodes=args.nodes, arcs=args.arcs, trips=args.trips,
                       paths=args.paths, scenarios=args.scenarios),
        "seed": str(args.seed),
        "budget": fileio.fmt_num(args.budget),
        "solver": args.solver,
        "status": result.status,
        "objective": fileio.fmt_num(result.objective),
    }
    network.save_design(result.design, out / "design.csv", provenance=prov)
    artifacts.append("design.csv")
    summary = [
        "# artifact: solve-report",
        f"status: {result.status}",
        f"objective: {fileio.fmt_num(result.objective)}",
        f"objective_replay: {fileio.fmt_num(replay)}",
        f"bound: {fileio.fmt_num(result.bound)}",
        f"open_arcs: {len(result.design.open_ids())}",
        f"stats: {sorted(result.stats.items())}",
    ]
    (out / "solve_report.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    artifacts.append("solve_report.txt")
    report.plot_design(graph, result.design, out / "design.png",
                       title=f"{args.solver} design (objective {result.objective:.2f})")
    artifacts.append("design.png")
    fileio.write_manifest(out, artifacts)
    print(f"{result.status}: objective {result.objective:.4f} "
          f"(bound {result.bound:.4f}) in {result.wall_time_s:.2f}s -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    graph, population = _load_instance(args)
    pathset = pathing.load_paths(args.paths, population, graph)
    design = network.load_design(args.design, graph)
    core_model = choice.load_model(args.core_model)
    adopt_model = choice.load_model(args.adopt_model)
    config = evalbench.EvalConfig(
        i_prime=args.eval_scenarios, penalty=args.penalty, seed=args.seed
    )
    rep = evalbench.eval_design(design, population, pathset, core_model, adopt_model, config)
    out = fileio.ensure_dir(args.out_dir)
    prov = {
        **_hash_inputs(design=args.design, trips=args.trips, paths=args.paths),
        "seed": str(args.seed),
        "i_prime": str(args.eval_scenarios),
        "penalty": fileio.fmt_num(args.penalty),
    }
    header = (
        "eval", "violations", "mean_coverage", "mean_core", "mean_latent",
        "mean_adopted", "adopted_pct", "travel_time_min",
    )
    row = (
        fileio.fmt_num(rep.eval_value), str(rep.violations),
        fileio.fmt_num(rep.mean_coverage), fileio.fmt_num(rep.mean_core),
        fileio.fmt_num(rep.mean_latent), fileio.fmt_num(rep.mean_adopted),
        fileio.fmt_num(rep.adopted_pct), fileio.fmt_num(rep.mean_best_time_min),
    )
    fileio.write_delimited(out / "eval_report.csv", header, [row],
                           {**fileio.provenance_for("eval-report"), **prov})
    artifacts = ["eval_report.csv"]
    report.plot_design(graph, design, out / "design.png",
                       title=f"eval: {rep.eval_value:.2f} riders, {rep.violations} violations")
    artifacts.append("design.png")
    if args.geojson:
        report.write_design_geojson(graph, design, out / "design.geojson")
        artifacts.append("design.geojson")
    fileio.write_manifest(out, artifacts)
    print(f"eval {rep.eval_value:.4f} ({rep.violations} violations), "
          f"coverage {rep.mean_coverage:.4f} over {rep.n_scenarios} scenarios -> {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    graph, population = _load_instance(args)
    pathset = pathing.load_paths(args.paths, population, graph)
    core_model = choice.load_model(args.core_model)
    adopt_model = choice.load_model(args.adopt_model)
    core_rule = (
        choice.load_model(args.rule_core) if args.rule_core
        else choice.StationProximityCoreRule()
    )
    adopt_rule = (
        choice.load_model(args.rule_adopt) if args.rule_adopt
        else choice.TravelTimeAdoptRule()
    )
    config = evalbench.EvalConfig(
        i_prime=args.eval_scenarios, penalty=args.penalty, seed=args.eval_seed
    )
    rows = evalbench.run_benchmarks(
        graph, population, pathset, core_model, adopt_model, core_rule, adopt_rule,
        budget=args.budget, n_scenarios=args.scenarios, solve_seed=args.seed,
        eval_config=config, solver=args.solver, time_limit_s=args.time_limit_s,
    )
    out = fileio.ensure_dir(args.out_dir)
    prov = {
        **_hash_inputs(trips=args.trips, paths=args.paths),
        "seed": str(args.seed),
        "budget": fileio.fmt_num(args.budget),
    }
    report.write_report_csv(rows, out / "bench_report.csv", provenance=prov)
    text = report.render_report_text(rows)
    (out / "bench_report.txt").write_text(text, encoding="utf-8", newline="")
    report.plot_benchmark(rows, out / "bench_report.png")
    fileio.write_manifest(out, ["bench_report.csv", "bench_report.txt", "bench_report.png"])
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nodes", required=True, help="nodes file from gen")
    p.add_argument("--arcs", required=True, help="arcs file from gen")
    p.add_argument("--trips", required=True, help="trips file from gen")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transitopt",
        description="design transit networks under two-level rider-choice uncertainty",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    p.add_argument("--preset", choices=sorted(instgen.PRESETS))
    p.add_argument("--config", help="key=value generator spec file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("paths", help="enumerate candidate paths on the all-open network")
    _add_instance_args(p)
    p.add_argument("--config", help="key=value config file (w, k_access, ...)")
    p.add_argument("--w", type=int, help="paths per trip (default 4)")
    p.add_argument("--k-access", dest="k_access", type=int, help="nearest stops (default 5)")
    p.add_argument("--walk-speed", dest="walk_speed", type=float)
    p.add_argument("--max-walk-min", dest="max_walk_min", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("train", help="train a logit choice model with grid-search CV")
    p.add_argument("--data", required=True, help="labeled training file")
    p.add_argument("--task", choices=("core", "adopt"), required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-c", help="comma-separated C grid (default 0.1,0.8,1.0,10)")
    p.add_argument("--grid-weight", help="comma-separated class-weight grid")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw SAA scenarios from the choice models")
    p.add_argument("--trips", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--core-model", required=True)
    p.add_argument("--adopt-model", required=True)
    p.add_argument("--scenarios", type=int, default=50, help="scenario count I (default 50)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("solve", help="select arcs to open under the budget")
    _add_instance_args(p)
    p.add_argument("--paths", required=True)
    p.add_argument("--scenarios", required=True, help="scenarios file from sample")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--solver", choices=("exact", "heuristic", "export"), default="exact")
    p.add_argument("--export-format", choices=modelio.EXPORT_FORMATS, default="lp_text")
    p.add_argument("--time-limit-s", dest="time_limit_s", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--portfolio-size", dest="portfolio_size", type=int, default=1)
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (current solvers are single-threaded)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="evaluate a design out of sample")
    _add_instance_args(p)
    p.add_argument("--paths", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--core-model", required=True)
    p.add_argument("--adopt-model", required=True)
    p.add_argument("--eval-scenarios", dest="eval_scenarios", type=int, default=1000,
                   help="out-of-sample scenario count I' (default 1000)")
    p.add_argument("--penalty", type=float, default=1.0, help="unserved-core penalty l_r")
    p.add_argument("--seed", type=int, default=10007)
    p.add_argument("--geojson", action="store_true", help="also export open arcs as GeoJSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run FD / rule-based / deterministic / full comparison")
    _add_instance_args(p)
    p.add_argument("--paths", required=True)
    p.add_argument("--core-model", required=True)
    p.add_argument("--adopt-model", required=True)
    p.add_argument("--rule-core", help="rule model file (default: shipped proximity rule)")
    p.add_argument("--rule-adopt", help="rule model file (default: shipped time rule)")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--scenarios", type=int, default=50)
    p.add_argument("--eval-scenarios", dest="eval_scenarios", type=int, default=1000)
    p.add_argument("--penalty", type=float, default=1.0)
    p.add_argument("--solver", choices=("exact", "heuristic"), default="exact")
    p.add_argument("--time-limit-s", dest="time_limit_s", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--eval-seed", dest="eval_seed", type=int, default=10007)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, SchemaError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TransitOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(
            f"missing artifact: {exc.filename} "
            "(run the producing subcommand first: gen -> paths -> sample -> solve -> eval)",
            file=sys.stderr,
        )
        return EXIT_PARSE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
