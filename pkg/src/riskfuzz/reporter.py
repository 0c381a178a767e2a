import logging
import os
import tempfile
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from riskfuzz import fuzzy
from riskfuzz.dynamics import SimulationResult
from riskfuzz.fuzzy import FuzzyNumber
from riskfuzz.inference import Inference, RuleBase, ValidationReport
from riskfuzz.influence import Forecast, InfluenceMap, InverseSolution, PathInfluence, SignedInfluence, edge_word
from riskfuzz.linguistic import LinguisticScale, Recognition
from riskfuzz.ncm import CognitiveModel, Evaluation
from riskfuzz.optimize import Assignment, MeasureSelection, QualificationScore
from riskfuzz.planners import ChannelProblem, Choice, Placement
from riskfuzz.traffic import GradedEvent, SourceAnalysis
from riskfuzz.weights import PreferenceRanking

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("table", "sidecar")


class ReportSidecar(BaseModel):
    """Machine-readable companion of a text report."""

    command: str
    model: str = ""
    settings: dict[str, Any] = Field(default_factory=dict)
    result: dict[str, Any] = Field(default_factory=dict)


@dataclass
class Report:
    command: str
    text: str
    sidecar: ReportSidecar
    events: list[str] | None = None
    journal: list[str] | None = None

    def render(self, report_format: str = "table") -> str:
        if report_format == "sidecar":
            return self.sidecar.model_dump_json(indent=2) + "\n"
        return self.text


# ---------------------------------------------------------------------------
# Formatting helpers (pure, testable)
# ---------------------------------------------------------------------------


def format_number(value: float | Fraction | int) -> str:
    return f"{float(value):.6g}"


def format_abscissas(x: FuzzyNumber) -> str:
    return " ".join(f"{v:.4f}" for v in x.abscissas)


def format_recognition(recognition: Recognition, scale: LinguisticScale) -> str:
    return recognition.describe(scale, dual=True)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[str(h) for h in headers], *[[str(c) for c in row] for row in rows]]
    widths = [max(len(row[k]) for row in cells) for k in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fuzzy_payload(x: FuzzyNumber, recognition: Recognition | None = None) -> dict[str, Any]:
    payload: dict[str, Any] = {"abscissas": list(x.abscissas), "centroid": fuzzy.centroid(x)}
    if recognition is not None:
        payload["label"] = recognition.best_label
        payload["omega"] = recognition.best_omega
        payload["omegas"] = dict(recognition.omegas)
    return payload


def _title(name: str, heading: str) -> str:
    return f"{heading}: {name}" if name else heading


# ---------------------------------------------------------------------------
# Cognitive models
# ---------------------------------------------------------------------------


def evaluation_report(model: CognitiveModel, evaluation: Evaluation, name: str = "") -> Report:
    """Per-node table, root first, then by level and id."""
    order = sorted(model.nodes, key=lambda n: (model.nodes[n].level, n))
    rows = []
    for node_id in order:
        value = evaluation.values[node_id]
        recognition = evaluation.recognitions[node_id]
        rows.append(
            (
                node_id,
                model.nodes[node_id].level,
                f"{fuzzy.centroid(value):.4f}",
                recognition.best_label,
                f"{recognition.best_omega:.2f}",
                format_abscissas(value),
                model.scale.long_name(recognition.best_label),
            )
        )
    root = evaluation.root_recognition
    lines = [
        _title(name or model.name, "Evaluation"),
        "",
        format_table(["node", "level", "centroid", "label", "omega", "abscissas", "name"], rows),
        "",
        f"root {evaluation.root}: {format_recognition(root, model.scale)}",
    ]
    sidecar = ReportSidecar(
        command="evaluate",
        model=name or model.name,
        result={
            "root": evaluation.root,
            "nodes": {n: _fuzzy_payload(evaluation.values[n], evaluation.recognitions[n]) for n in order},
        },
    )
    return Report("evaluate", "\n".join(lines) + "\n", sidecar)


def simulation_report(result: SimulationResult, scale: LinguisticScale, name: str = "") -> Report:
    rows = [
        (r.step, f"{r.time:g}", r.asset, r.quantity, r.id, f"{r.centroid:.4f}", r.label, f"{r.omega:.2f}")
        for r in result.rows
    ]
    events = [f"step={e.step} t={e.time:g} asset={e.asset} {e.kind} {e.id}" for e in result.events]
    totals = [r for r in result.rows if r.quantity == "K" and r.asset == "*"]
    lines = [
        _title(name, "Simulation"),
        "",
        format_table(["step", "time", "asset", "quantity", "id", "centroid", "label", "omega"], rows),
        "",
        f"{len(result.events)} events",
        *events,
    ]
    if totals:
        last = totals[-1]
        lines += ["", f"final security level: {last.label} ({last.omega:.2f}), centroid {last.centroid:.4f}"]
    sidecar = ReportSidecar(
        command="simulate",
        model=name,
        settings={"scale": scale.name},
        result={
            "rows": [
                {
                    "step": r.step,
                    "time": r.time,
                    "asset": r.asset,
                    "quantity": r.quantity,
                    "id": r.id,
                    "abscissas": list(r.value.abscissas),
                    "centroid": r.centroid,
                    "label": r.label,
                    "omega": r.omega,
                }
                for r in result.rows
            ],
            "events": [
                {"step": e.step, "time": e.time, "asset": e.asset, "kind": e.kind, "id": e.id} for e in result.events
            ],
        },
    )
    return Report("simulate", "\n".join(lines) + "\n", sidecar, events=events)


# ---------------------------------------------------------------------------
# Influence maps
# ---------------------------------------------------------------------------


def influence_report(
    imap: InfluenceMap,
    paths: Sequence[tuple[str, str, PathInfluence, SignedInfluence]],
    cycles: Sequence[tuple[tuple[str, ...], str]],
    forecast: Forecast | None = None,
    inverse: InverseSolution | None = None,
    name: str = "",
) -> Report:
    lines = [_title(name, "Influence"), ""]
    result: dict[str, Any] = {"queries": [], "cycles": [], "forecast": None, "inverse": None}
    for source, target, strongest, signed in paths:
        lines.append(f"{source} -> {target}: total {strongest.total:.4f} ({edge_word(strongest.total)})")
        rows = [(" -> ".join(p), f"{v:.4f}", edge_word(v)) for p, v in strongest.paths]
        lines.append(format_table(["path", "influence", "word"], rows))
        lines.append(
            f"positive {signed.positive:.4f}  negative {signed.negative:.4f}  "
            f"total {signed.total:.4f}  consonance {signed.consonance:.4f}"
        )
        lines.append("")
        result["queries"].append(
            {
                "from": source,
                "to": target,
                "paths": [{"path": list(p), "influence": v, "word": edge_word(v)} for p, v in strongest.paths],
                "total": strongest.total,
                "positive": signed.positive,
                "negative": signed.negative,
                "signed_total": signed.total,
                "consonance": signed.consonance,
            }
        )
    if cycles:
        lines.append("cycles:")
        for cycle, kind in cycles:
            lines.append(f"  {' -> '.join(cycle)} -> {cycle[0]}: {kind}")
            result["cycles"].append({"cycle": list(cycle), "kind": kind})
        lines.append("")
    if forecast is not None:
        headers = ["step", *imap.vertices]
        rows = [(k, *(f"{v:.4f}" for v in state)) for k, state in enumerate(forecast.states)]
        lines += ["forecast:", format_table(headers, rows), ""]
        result["forecast"] = {
            "states": forecast.states.tolist(),
            "increments": forecast.increments.tolist(),
            "consonances": forecast.consonances.tolist(),
        }
    if inverse is not None:
        status = "exact" if inverse.exact else f"closest (error {inverse.error:.4g})"
        lines.append(f"inverse problem over {', '.join(inverse.inputs)}: {len(inverse.matches)} {status} match(es)")
        for match in inverse.matches:
            lines.append("  " + ", ".join(f"{v}={x:.4g}" for v, x in zip(inverse.inputs, match)))
        lines.append("")
        result["inverse"] = {
            "inputs": list(inverse.inputs),
            "matches": [list(m) for m in inverse.matches],
            "exact": inverse.exact,
            "error": inverse.error,
        }
    sidecar = ReportSidecar(command="influence", model=name, result=result)
    return Report("influence", "\n".join(lines).rstrip() + "\n", sidecar)


# ---------------------------------------------------------------------------
# Rule bases
# ---------------------------------------------------------------------------


def _case_text(case: Mapping[str, object]) -> str:
    parts = []
    for variable, value in case.items():
        text = format_abscissas(value) if isinstance(value, FuzzyNumber) else format_number(value)
        parts.append(f"{variable}={text}")
    return ", ".join(parts)


def inference_report(
    rulebase: RuleBase,
    cases: Sequence[Mapping[str, object]],
    results: Sequence[Inference],
    verdicts: Sequence[tuple[str, float]],
) -> Report:
    lines = [_title(rulebase.name, "Inference"), ""]
    payload = []
    for k, (case, result, (category, confidence)) in enumerate(zip(cases, results, verdicts), 1):
        lines.append(f"case {k}: {_case_text(case)}")
        rows = [(f.index, f"{f.activation:.4f}", f"{f.rule.confidence:.2f}", f.rule.conclusion) for f in result.fired]
        lines.append(format_table(["rule", "activation", "confidence", "conclusion"], rows))
        lines.append(
            f"{rulebase.output_name} = {result.value:.4f}, "
            f"{format_recognition(result.recognition, rulebase.output)}; "
            f"weakest link {category} ({confidence:.2f})"
        )
        lines.append("")
        payload.append(
            {
                "value": result.value,
                "label": result.recognition.best_label,
                "omega": result.recognition.best_omega,
                "fired": [
                    {"rule": f.index, "activation": f.activation, "confidence": f.rule.confidence, "conclusion": f.rule.conclusion}
                    for f in result.fired
                ],
                "verdict": {"label": category, "confidence": confidence},
            }
        )
    sidecar = ReportSidecar(command="infer", model=rulebase.name, result={"cases": payload})
    return Report("infer", "\n".join(lines).rstrip() + "\n", sidecar)


def validation_report(name: str, problems: Sequence[str], summary: str = "") -> Report:
    lines = [_title(name, "Validation"), ""]
    if summary:
        lines.append(summary)
    lines += problems or ["no problems found"]
    sidecar = ReportSidecar(command="validate", model=name, result={"ok": not problems, "problems": list(problems)})
    return Report("validate", "\n".join(lines) + "\n", sidecar)


def rulebase_problems(report: ValidationReport, label: str = "") -> list[str]:
    prefix = f"{label}: " if label else ""
    return [prefix + line for line in report.lines()]


# ---------------------------------------------------------------------------
# Traffic
# ---------------------------------------------------------------------------


def format_event_line(graded: GradedEvent) -> str:
    e = graded.event
    return (
        f"{e.start_time:g}\t{e.end_time:g}\t{e.source}\t{e.direction}\t{e.locality}\t"
        f"{e.privilege}\t{e.deviation:.6g}\t{e.frequency}\t{e.sources}\t{e.mean_volume:.6g}\t{e.top_source}"
    )


def traffic_report(results: Sequence[SourceAnalysis], events: Sequence[GradedEvent], name: str = "") -> Report:
    lines = [_title(name, "Traffic"), ""]
    sources = []
    for analysis in results:
        lines.append(f"source {analysis.source}: {len(analysis.series)} bins, {len(analysis.events)} event(s)")
        rows = [
            (c.frequency_index, f"{c.period:g}", f"{c.amplitude:.4g}", f"{c.phase:.4f}", f"{c.p_value:.3g}")
            for c in analysis.cycles
        ]
        if rows:
            lines.append(format_table(["k", "period", "amplitude", "phase", "p"], rows))
        sources.append(
            {
                "source": analysis.source,
                "bins": len(analysis.series),
                "cycles": [
                    {
                        "frequency_index": c.frequency_index,
                        "period": c.period,
                        "amplitude": c.amplitude,
                        "phase": c.phase,
                        "p_value": c.p_value,
                    }
                    for c in analysis.cycles
                ],
            }
        )
        lines.append("")
    lines.append(f"{len(events)} anomaly event(s)")
    rows = [
        (
            g.event.source,
            f"{g.event.start_time:g}",
            f"{g.event.end_time:g}",
            g.grade,
            f"{g.omega:.2f}",
            g.response.action + (f" ({g.response.duration})" if g.response.duration else ""),
        )
        for g in events
    ]
    if rows:
        lines.append(format_table(["source", "start", "end", "grade", "omega", "response"], rows))
    sidecar = ReportSidecar(
        command="traffic",
        model=name,
        result={
            "sources": sources,
            "events": [
                {
                    "source": g.event.source,
                    "start": g.event.start_time,
                    "end": g.event.end_time,
                    "inputs": g.inputs,
                    "grade": g.grade,
                    "omega": g.omega,
                    "action": g.response.action,
                    "duration": g.response.duration,
                }
                for g in events
            ],
        },
    )
    return Report(
        "traffic",
        "\n".join(lines).rstrip() + "\n",
        sidecar,
        events=[format_event_line(g) for g in events],
        journal=[g.journal_line() for g in events],
    )


# ---------------------------------------------------------------------------
# Competency, teams and measures
# ---------------------------------------------------------------------------


def competency_report(
    scores: Mapping[str, Sequence[tuple[str, QualificationScore, Mapping[str, Recognition]]]],
    levels: Mapping[str, tuple[FuzzyNumber, Recognition]],
    integral: tuple[FuzzyNumber, Recognition] | None,
    scale: LinguisticScale,
    name: str = "",
    ranking: PreferenceRanking | None = None,
) -> Report:
    lines = [_title(name, "Competency"), ""]
    rows = []
    for competency, tests in scores.items():
        for test_id, _, recognitions in tests:
            rows.append(
                (
                    competency,
                    test_id,
                    *(f"{recognitions[k].best_label} ({recognitions[k].best_omega:.2f})" for k in ("D", "R", "QT")),
                )
            )
    lines.append(format_table(["competency", "test", "D", "R", "QT"], rows))
    lines.append("")
    for competency, (value, recognition) in levels.items():
        lines.append(f"{competency}: {format_recognition(recognition, scale)}  [{format_abscissas(value)}]")
    result: dict[str, Any] = {
        "levels": {k: _fuzzy_payload(v, r) for k, (v, r) in levels.items()},
        "integral": None,
    }
    if integral is not None:
        value, recognition = integral
        lines.append("")
        if ranking is not None:
            lines.append(f"integral ranking: {ranking}")
            result["ranking"] = str(ranking)
        lines.append(f"integral competence: {format_recognition(recognition, scale)}  [{format_abscissas(value)}]")
        result["integral"] = _fuzzy_payload(value, recognition)
    sidecar = ReportSidecar(command="competency", model=name, result=result)
    return Report("competency", "\n".join(lines) + "\n", sidecar)


def assignment_report(assignment: Assignment, name: str = "") -> Report:
    headers = ["variant", *assignment.tasks, "theta"]
    rows = [
        (p.variant, *(f"{c} ({v:.4f})" for c, v in zip(p.candidates, p.indices)), f"{p.score:.4f}")
        for p in assignment.table
    ]
    best = assignment.best
    lines = [
        _title(name, "Team assignment"),
        "",
        f"{len(assignment.table)} of {assignment.variants} placements are feasible",
        "",
        format_table(headers, rows),
        "",
        "best: " + ", ".join(f"{t}={c}" for t, c in zip(assignment.tasks, best.candidates)),
        f"variant {best.variant}, θ={best.score:.2f}",
    ]
    sidecar = ReportSidecar(
        command="assign-team",
        model=name,
        result={
            "tasks": list(assignment.tasks),
            "variants": assignment.variants,
            "best": {"variant": best.variant, "candidates": list(best.candidates), "theta": best.score},
            "table": [
                {"variant": p.variant, "candidates": list(p.candidates), "indices": list(p.indices), "theta": p.score}
                for p in assignment.table
            ],
        },
    )
    return Report("assign-team", "\n".join(lines) + "\n", sidecar)


def measures_report(selection: MeasureSelection, name: str = "") -> Report:
    rows = [
        (
            s.mask,
            "+".join(s.members),
            f"{s.effectiveness:.4f}" if s.feasible or s.reason == "over budget" else "-",
            format_number(s.tco),
            f"{s.ratio:.6g}" if s.ratio is not None else "-",
            s.reason or "ok",
        )
        for s in selection.table
    ]
    best = selection.best
    budget = format_number(selection.budget) if selection.budget is not None else "unlimited"
    lines = [
        _title(name, "Measure selection"),
        "",
        f"budget: {budget}",
        "",
        format_table(["set", "measures", "E", "TCO", "E/TCO", "status"], rows),
        "",
        f"chosen: {', '.join(best.members)} (E={best.effectiveness:.4f}, TCO={format_number(best.tco)})",
    ]
    sidecar = ReportSidecar(
        command="select-measures",
        model=name,
        settings={"budget": selection.budget},
        result={
            "best": {"members": list(best.members), "effectiveness": best.effectiveness, "tco": best.tco},
            "table": [
                {
                    "mask": s.mask,
                    "members": list(s.members),
                    "effectiveness": s.effectiveness,
                    "tco": s.tco,
                    "feasible": s.feasible,
                    "reason": s.reason,
                }
                for s in selection.table
            ],
        },
    )
    return Report("select-measures", "\n".join(lines) + "\n", sidecar)


# ---------------------------------------------------------------------------
# Planners
# ---------------------------------------------------------------------------


def channels_report(problem: ChannelProblem, closed_form: int, searched: int, profit: float, name: str = "") -> Report:
    lines = [
        _title(name, "Secure channels"),
        "",
        f"demand between {problem.low} and {problem.high}, profitability {format_number(problem.profitability)}",
        f"optimal channels: {closed_form} (search: {searched}), expected profit {profit:.6g}",
    ]
    sidecar = ReportSidecar(
        command="plan channels",
        model=name,
        result={"channels": closed_form, "search": searched, "expected_profit": profit},
    )
    return Report("plan channels", "\n".join(lines) + "\n", sidecar)


def choice_report(choice: Choice, mode: str, name: str = "") -> Report:
    rows = [(k, format_number(s)) for k, s in enumerate(choice.scores, 1)]
    lines = [
        _title(name, "System choice"),
        "",
        format_table(["strategy", "worst case" if mode == "minimax" else "expected"], rows),
        "",
        f"{mode}: strategy {choice.strategy}, score {format_number(choice.score)}",
    ]
    sidecar = ReportSidecar(
        command="plan choose",
        model=name,
        settings={"mode": mode},
        result={"strategy": choice.strategy, "score": choice.score, "scores": list(choice.scores)},
    )
    return Report("plan choose", "\n".join(lines) + "\n", sidecar)


def placement_report(placement: Placement, name: str = "") -> Report:
    lower, upper = placement.absolute
    lines = [
        _title(name, "Sensor placement"),
        "",
        f"absolute: [{lower:g}, {upper:g}] on a segment of length {placement.length:g}",
        f"[{format_number(placement.lower)}, {format_number(placement.upper)}], "
        f"W={format_number(placement.mean_distance)}",
    ]
    sidecar = ReportSidecar(
        command="plan place",
        model=name,
        result={
            "lower": str(placement.lower),
            "upper": str(placement.upper),
            "mean_distance": str(placement.mean_distance),
            "absolute": [lower, upper],
        },
    )
    return Report("plan place", "\n".join(lines) + "\n", sidecar)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_atomic(path: Path, text: str, atomic: bool = True) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not atomic:
        path.write_text(text, encoding="utf-8")
        return
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_report(report: Report, out: Path, atomic: bool = True) -> list[Path]:
    """Write the text report to ``out`` and its sidecar next to it."""
    written = [out, out.with_suffix(".json")]
    write_atomic(out, report.text, atomic)
    write_atomic(written[1], report.sidecar.model_dump_json(indent=2) + "\n", atomic)
    if report.events is not None:
        written.append(out.with_suffix(".events.log"))
        write_atomic(written[-1], "".join(line + "\n" for line in report.events), atomic)
    if report.journal is not None:
        written.append(out.with_suffix(".journal.log"))
        write_atomic(written[-1], "".join(line + "\n" for line in report.journal), atomic)
    logger.info("Wrote %s", ", ".join(str(p) for p in written))
    return written
