import argparse
import asyncio
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from riskfuzz.dynamics import simulate
from riskfuzz.errors import InfeasibleError, ModelError
from riskfuzz.inference import infer, validate, verdict
from riskfuzz.influence import cycle_signs, forecast, path_influence, signed_influence, solve_inverse
from riskfuzz.linguistic import recognize
from riskfuzz.monitor import analyze_sources, merged_events
from riskfuzz.ncm import evaluate
from riskfuzz.optimize import (
    assign_team,
    candidate_task_index,
    competency_level,
    integral_competence,
    score_test,
    select_measures,
    task_index_from_similarities,
)
from riskfuzz.planners import (
    best_channels_by_search,
    choose_system,
    expected_profit,
    optimal_channels,
    place_sensor,
)
from riskfuzz.reporter import (
    REPORT_FORMATS,
    Report,
    assignment_report,
    channels_report,
    choice_report,
    competency_report,
    evaluation_report,
    inference_report,
    influence_report,
    measures_report,
    placement_report,
    rulebase_problems,
    simulation_report,
    traffic_report,
    validation_report,
    write_report,
)
from riskfuzz.traffic import load_packet_log
from shared.config import RiskfuzzConfig, TrafficConfig, load_dotenv
from shared.modelfile import LoadedModel, ModelLoadError, build, load_document
from shared.models import TrafficSettingsDoc

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3

# command -> model mode it runs on
COMMAND_MODES = {
    "evaluate": "evaluate",
    "simulate": "simulate",
    "influence": "influence",
    "infer": "infer",
    "traffic": "traffic",
    "competency": "competency",
    "assign-team": "team",
    "select-measures": "measures",
    "plan channels": "channels",
    "plan choose": "choose",
    "plan place": "place",
}


def _config(args: argparse.Namespace) -> RiskfuzzConfig:
    config = RiskfuzzConfig.from_env()
    if args.seed is not None:
        config.engine.seed = args.seed
    if args.budget is not None:
        config.search.budget = args.budget
    if args.alpha is not None:
        config.search.alpha = args.alpha
    return config


def _load(args: argparse.Namespace, config: RiskfuzzConfig) -> LoadedModel:
    document = load_document(args.model)
    ladder = args.ladder or (None if document.ladder is not None else config.engine.ladder)
    scale = args.scale or (None if "scale" in document.model_fields_set else config.engine.scale)
    return build(
        document,
        str(args.model),
        ladder=ladder,
        scale=scale,
        compare=config.engine.incident_compare,
        distance=config.engine.distance,
    )


def _require_mode(loaded: LoadedModel, command: str) -> None:
    expected = COMMAND_MODES[command]
    if loaded.mode != expected:
        raise ModelLoadError(f"{loaded.path}: `{command}` needs a model of mode {expected!r}, got {loaded.mode!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def evaluate_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    model = loaded.objects["model"]
    return evaluation_report(model, evaluate(model, distance=config.engine.distance), loaded.document.name)


def simulate_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    model = loaded.objects["dynamics"]
    return simulation_report(simulate(model, config.engine.distance), model.scale, loaded.document.name)


def influence_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    imap = loaded.objects["map"]
    doc = loaded.document.influence
    paths = [
        (
            q.source,
            q.target,
            path_influence(imap, q.source, q.target, q.max_len),
            signed_influence(imap, q.source, q.target, config.search.alpha, q.max_len),
        )
        for q in doc.queries
    ]
    predicted = None
    if doc.forecast is not None:
        x0 = [doc.forecast.state.get(v, 0.0) for v in imap.vertices]
        p0 = [doc.forecast.impulse.get(v, 0.0) for v in imap.vertices]
        predicted = forecast(imap, x0, p0, doc.forecast.steps)
    inverse = None
    if doc.inverse is not None:
        inverse = solve_inverse(
            imap,
            doc.inverse.inputs,
            doc.inverse.targets,
            grid_step=doc.inverse.grid_step if doc.inverse.grid_step is not None else config.search.grid_step,
            tolerance=doc.inverse.tolerance,
            max_inputs=config.search.max_inverse_inputs,
            max_grid=config.search.max_inverse_grid,
        )
    return influence_report(imap, paths, cycle_signs(imap), predicted, inverse, loaded.document.name)


def infer_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    rulebase = loaded.objects["rulebase"]
    cases = loaded.objects["cases"]
    results = [infer(rulebase, case, config.engine.distance) for case in cases]
    verdicts = [verdict(result, rulebase.output) for result in results]
    return inference_report(rulebase, cases, results, verdicts)


def _traffic_config(config: TrafficConfig, settings: TrafficSettingsDoc) -> TrafficConfig:
    for name, value in settings.model_dump(exclude={"span", "origin"}, exclude_none=True).items():
        setattr(config, name, value)
    return config


def traffic_command(loaded: LoadedModel, config: RiskfuzzConfig, packets_path: Path) -> Report:
    settings = loaded.document.traffic.settings
    traffic = _traffic_config(config.traffic, settings)
    packets = load_packet_log(packets_path)
    results = asyncio.run(
        analyze_sources(
            packets,
            loaded.objects["grading"],
            loaded.objects["responses"],
            traffic,
            span=settings.span,
            origin=settings.origin,
            distance=config.engine.distance,
        )
    )
    return traffic_report(results, merged_events(results), loaded.document.name)


def competency_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    problem = loaded.objects["competency"]
    scale = loaded.scale
    distance = config.engine.distance
    scores = {}
    levels = {}
    for competency, tests in problem.tests.items():
        rows = []
        for test_id, difficulty, results in tests:
            score = score_test(difficulty, results)
            rows.append((test_id, score, score.recognize(scale, distance)))
        scores[competency] = rows
        level = competency_level([score.total for _, score, _ in rows])
        levels[competency] = (level, recognize(level, scale, distance))
    integral = None
    ranking = problem.integral_ranking(config.search.tie_tolerance)
    if ranking is not None:
        known = {k: v for k, (v, _) in levels.items()}
        known.update(problem.integral_levels)
        value = integral_competence(known, ranking)
        integral = (value, recognize(value, scale, distance))
    return competency_report(scores, levels, integral, scale, loaded.document.name, ranking=ranking)


def assign_team_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    candidates = loaded.objects["candidates"]
    tasks = loaded.objects["tasks"]
    similarities = loaded.objects["similarities"]
    profiles = loaded.objects["profiles"]
    indices = {}
    for candidate in candidates:
        for task in tasks:
            if similarities is not None:
                omegas = similarities.get(candidate, {}).get(task.task, {})
                indices[(candidate, task.task)] = task_index_from_similarities(omegas, task)
            else:
                indices[(candidate, task.task)] = candidate_task_index(
                    profiles.get(candidate, {}), task, loaded.scale, config.engine.distance
                )
    assignment = assign_team(
        candidates, [t.task for t in tasks], indices, max_placements=config.search.max_placements
    )
    return assignment_report(assignment, loaded.document.name)


def select_measures_command(loaded: LoadedModel, config: RiskfuzzConfig) -> Report:
    problem = loaded.objects["problem"]
    budget = config.search.budget if config.search.budget is not None else problem.budget
    selection = select_measures(
        problem.measures,
        problem.evaluator,
        problem.conflicts,
        budget=budget,
        max_measures=config.search.max_measures,
    )
    return measures_report(selection, loaded.document.name)


def plan_command(loaded: LoadedModel, problem_kind: str) -> Report:
    name = loaded.document.name
    if problem_kind == "channels":
        problem = loaded.objects["problem"]
        n = optimal_channels(problem)
        return channels_report(problem, n, best_channels_by_search(problem), expected_profit(problem, n), name)
    if problem_kind == "choose":
        mode = loaded.objects["mode"]
        return choice_report(choose_system(loaded.objects["matrix"], mode), mode, name)
    return placement_report(place_sensor(loaded.objects["problem"]), name)


def validate_command(args: argparse.Namespace, config: RiskfuzzConfig) -> Report:
    loaded = _load(args, config)
    problems: list[str] = []
    if loaded.mode == "infer":
        problems += rulebase_problems(validate(loaded.objects["rulebase"]))
    elif loaded.mode == "traffic":
        problems += rulebase_problems(validate(loaded.objects["grading"]), "grading")
        problems += [
            "responses: uncovered cell " + ", ".join(cell) for cell in loaded.objects["responses"].uncovered()
        ]
    summary = f"mode {loaded.mode}: model loaded"
    if loaded.mode == "simulate":
        catalog = loaded.document.dynamics.catalog
        summary += (
            f" ({len(catalog.threats)} threats, {len(catalog.vulnerabilities)} vulnerabilities, "
            f"{len(catalog.measures)} measures in catalog)"
        )
    return validation_report(loaded.document.name or str(args.model), problems, summary)


def run_command(args: argparse.Namespace, config: RiskfuzzConfig) -> Report:
    if args.command == "validate":
        return validate_command(args, config)
    command = f"plan {args.problem}" if args.command == "plan" else args.command
    loaded = _load(args, config)
    _require_mode(loaded, command)
    if command == "evaluate":
        return evaluate_command(loaded, config)
    if command == "simulate":
        return simulate_command(loaded, config)
    if command == "influence":
        return influence_command(loaded, config)
    if command == "infer":
        return infer_command(loaded, config)
    if command == "traffic":
        return traffic_command(loaded, config, args.packets)
    if command == "competency":
        return competency_command(loaded, config)
    if command == "assign-team":
        return assign_team_command(loaded, config)
    if command == "select-measures":
        return select_measures_command(loaded, config)
    return plan_command(loaded, args.problem)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", type=Path, required=True, help="YAML model file")
    parser.add_argument("--out", type=Path, default=None, help="Write the report here and its JSON sidecar next to it")
    parser.add_argument("--ladder", default=None, help="Alpha levels, comma-separated (e.g. 0,0.5,1)")
    parser.add_argument("--scale", choices=["L3", "L5", "L7"], default=None, help="Linguistic scale")
    parser.add_argument("--seed", type=int, default=None, help="Recorded seed (default: RISKFUZZ_SEED or 0)")
    parser.add_argument("--budget", type=float, default=None, help="Budget for measure selection")
    parser.add_argument("--alpha", type=float, default=None, help="Attenuation for signed path influence")
    parser.add_argument(
        "--report-format",
        choices=REPORT_FORMATS,
        default="table",
        help="Print the tabular report or the JSON sidecar (default: table)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskfuzz", description="Fuzzy cognitive risk modeling")
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "evaluate": "Evaluate a hierarchical cognitive model",
        "simulate": "Run the discrete-time threat/vulnerability simulation",
        "influence": "Path influence, forecasting and inverse problems on an influence map",
        "infer": "Run a Mamdani rule base on the model's cases",
        "traffic": "Analyze a packet log for cycles and anomalies",
        "competency": "Score qualification tests and integral competence",
        "assign-team": "Assign candidates to project tasks",
        "select-measures": "Choose the best countermeasure portfolio",
        "validate": "Load a model file and report invariant violations",
    }
    for command, text in helps.items():
        sub = subparsers.add_parser(command, help=text)
        _add_common(sub)
        if command == "traffic":
            sub.add_argument("--packets", type=Path, required=True, help="Packet log (timestamp src dst size [dir])")

    plan = subparsers.add_parser("plan", help="Closed-form planning problems")
    plan.add_argument("problem", choices=["channels", "choose", "place"])
    _add_common(plan)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    config = _config(args)
    logging.basicConfig(level=getattr(logging, config.log_level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")

    try:
        report = run_command(args, config)
    except InfeasibleError as e:
        print(f"infeasible: {e.detail}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ModelError as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return EXIT_INVALID

    report.sidecar.settings.setdefault("seed", config.engine.seed)
    if args.out is not None:
        write_report(report, args.out, atomic=config.atomic_writes)
    sys.stdout.write(report.render(args.report_format))
    if report.command == "validate" and not report.sidecar.result["ok"]:
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
