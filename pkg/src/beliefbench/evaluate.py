"""Evaluation harness: probe a model, score it against the referee.

For every case the harness asks 13 probes pre-edit, applies the edit
through the model's edit hook, asks the same 13 probes post-edit, and
reverts.  Three families of metrics come out, per data subset and per
phase (pre / post / delta):

* generative accuracy — does the model's generated object match a
  referee argmax (any tied argmax counts);
* probabilistic coherence — mean absolute error between model
  probabilities and referee target probabilities, per probe tag;
* logical coherence — mean absolute violation of the probability
  axioms across the model's own probabilities (truth-claim agreement,
  complement, product rule, inclusion-exclusion), no referee involved.

Cases whose responses go missing are excluded and counted; reported
tallies always satisfy evaluated + failed = total.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import artifacts
from .agents import ProbeQuery, ProbeResponse, ProtocolError
from .bench import LOGIC_TAGS, PROB_TAGS, TestCase

logger = logging.getLogger(__name__)

TRUTH_TAGS = LOGIC_TAGS + ("b",)
SUBSET_NAMES = ("all", "downstream_change", "error_fixing")


class EvalError(RuntimeError):
    pass


@dataclass
class PhaseAnswers:
    gen: dict[str, str] = field(default_factory=dict)
    p: dict[str, float] = field(default_factory=dict)
    t: dict[str, float] = field(default_factory=dict)


@dataclass
class CaseResult:
    case: TestCase
    pre: Optional[PhaseAnswers] = None
    post: Optional[PhaseAnswers] = None

    @property
    def ok(self) -> bool:
        return self.pre is not None and self.post is not None


@dataclass
class MetricsReport:
    weight_mode: str
    subsets: dict[str, dict]

    def to_payload(self) -> dict:
        return {"weight_mode": self.weight_mode, "subsets": self.subsets}

    @classmethod
    def from_payload(cls, payload: dict) -> "MetricsReport":
        return cls(payload["weight_mode"], payload["subsets"])


def case_queries(case: TestCase, phase: str) -> list[ProbeQuery]:
    queries = []
    for tag in PROB_TAGS:
        spec = case.prompts[tag]
        queries.append(ProbeQuery(f"{case.id}|{phase}|gen|{tag}", "generate", spec["prompt"]))
        queries.append(
            ProbeQuery(f"{case.id}|{phase}|p|{tag}", "next_object", spec["prompt"], spec["candidate"])
        )
    for tag in TRUTH_TAGS:
        queries.append(ProbeQuery(f"{case.id}|{phase}|t|{tag}", "truth", case.prompts[tag]["prompt"]))
    return queries


def _collect_phase(case: TestCase, phase: str, responses: dict[str, ProbeResponse]) -> Optional[PhaseAnswers]:
    """Validate one phase's responses; None marks the case failed."""
    answers = PhaseAnswers()
    for query in case_queries(case, phase):
        resp = responses.get(query.id)
        if resp is None or resp.error is not None:
            logger.warning("case %s failed: no answer for %s", case.id, query.id)
            return None
        _, _, family, tag = query.id.split("|")
        if family == "gen":
            if resp.text is None:
                return None
            answers.gen[tag] = resp.text
        else:
            if resp.probability is None:
                return None
            if not 0.0 <= resp.probability <= 1.0:
                raise ProtocolError(
                    f"probability out of range for {query.id}: {resp.probability}"
                )
            if family == "p":
                answers.p[tag] = resp.probability
            else:
                answers.t[tag] = resp.probability
    return answers


def run_eval(
    cases: list[TestCase],
    client,
    weight_mode: str = "auto",
    edit_hook: Optional[Callable[[str, TestCase], None]] = None,
) -> MetricsReport:
    """Probe the model on every case and aggregate the metrics.

    `client` needs ask/apply_edit/revert (LocalClient or ExternalModel).
    A custom edit_hook(action, case) overrides the default one that
    forwards the case's edit to the client.
    """

    def default_hook(action: str, case: TestCase) -> None:
        weight = case.weight(weight_mode)
        if weight <= 0:
            return  # a zero-weight edit is a no-op
        spec = case.prompts["edit"]
        if action == "apply":
            client.apply_edit(spec["prompt"], spec["target"], weight)
        else:
            client.revert()

    hook = edit_hook or default_hook
    results: list[CaseResult] = []
    for case in cases:
        result = CaseResult(case)
        result.pre = _collect_phase(case, "pre", client.ask(case_queries(case, "pre")))
        if result.pre is not None:
            hook("apply", case)
            try:
                result.post = _collect_phase(case, "post", client.ask(case_queries(case, "post")))
            finally:
                hook("revert", case)
        results.append(result)
    return aggregate(results, weight_mode)


# -- metric primitives ---------------------------------------------------


def generative_accuracy(pairs: list[tuple[str, list[str]]]) -> float:
    """Fraction of (generated text, tied referee argmaxes) that match."""
    if not pairs:
        raise EvalError("no probes")
    return sum(1 for text, winners in pairs if text in winners) / len(pairs)


def prob_coherence(pairs: list[tuple[float, float]]) -> float:
    """Mean absolute error between model and referee probabilities."""
    if not pairs:
        raise EvalError("no probes")
    return math.fsum(abs(p - q) for p, q in pairs) / len(pairs)


def logical_coherence(records: list[dict[str, float]]) -> dict[str, float]:
    """Mean absolute axiom violations over the model's own probabilities.

    Each record carries p_o (object probability for the edit fact),
    p_tf, p_not, p_and, p_or (truth probabilities) and p_b (partner
    truth probability).
    """
    if not records:
        raise EvalError("no probes")
    sums = {tag: 0.0 for tag in LOGIC_TAGS}
    for rec in records:
        sums["tf"] += abs(rec["p_o"] - rec["p_tf"])
        sums["not"] += abs(rec["p_tf"] - (1.0 - rec["p_not"]))
        sums["and"] += abs(rec["p_and"] - rec["p_tf"] * rec["p_b"])
        sums["or"] += abs(rec["p_or"] - (rec["p_tf"] + rec["p_b"] - rec["p_tf"] * rec["p_b"]))
    return {tag: sums[tag] / len(records) for tag in LOGIC_TAGS}


def _phase_metrics(results: list[CaseResult], phase: str, weight_mode: str) -> dict:
    answers = [(r.case, getattr(r, phase)) for r in results]
    gen_acc = {}
    prob_mae = {}
    for tag in PROB_TAGS:
        gen_acc[tag] = generative_accuracy(
            [(a.gen[tag], case.argmax(phase, weight_mode)[tag]) for case, a in answers]
        )
        prob_mae[tag] = prob_coherence(
            [(a.p[tag], case.targets(phase, weight_mode)[tag]) for case, a in answers]
        )
    logic_records = [
        {
            "p_o": a.p["s1r1"],
            "p_tf": a.t["tf"],
            "p_not": a.t["not"],
            "p_and": a.t["and"],
            "p_or": a.t["or"],
            "p_b": a.t["b"],
        }
        for _, a in answers
    ]
    return {"gen_acc": gen_acc, "prob_mae": prob_mae, "logic_mae": logical_coherence(logic_records)}


def aggregate(results: list[CaseResult], weight_mode: str) -> MetricsReport:
    from .bench import split_subsets

    subsets = {}
    by_name = split_subsets([r.case for r in results])
    result_of = {r.case.id: r for r in results}
    for name in SUBSET_NAMES:
        member_results = [result_of[c.id] for c in by_name[name]]
        evaluated = [r for r in member_results if r.ok]
        entry: dict = {
            "cases": len(member_results),
            "failed": len(member_results) - len(evaluated),
        }
        if evaluated:
            pre = _phase_metrics(evaluated, "pre", weight_mode)
            post = _phase_metrics(evaluated, "post", weight_mode)
            entry["pre"] = pre
            entry["post"] = post
            entry["delta"] = {
                group: {k: post[group][k] - pre[group][k] for k in pre[group]}
                for group in ("gen_acc", "prob_mae", "logic_mae")
            }
        else:
            entry["pre"] = entry["post"] = entry["delta"] = None
        subsets[name] = entry
    return MetricsReport(weight_mode, subsets)


# -- rendering -------------------------------------------------------------


def _fmt(value, signed: bool = False) -> str:
    if value is None:
        return "   n/a"
    return f"{value:+6.3f}" if signed else f"{value:6.3f}"


def render_report(report: MetricsReport) -> str:
    lines = []
    header_tags = "  ".join(f"{t:>6}" for t in PROB_TAGS)
    header_logic = "  ".join(f"{t:>6}" for t in LOGIC_TAGS)
    bar = "-" * 100
    lines.append(f"edit weight mode: {report.weight_mode}")
    for name in SUBSET_NAMES:
        entry = report.subsets[name]
        lines.append(bar)
        lines.append(f"subset: {name}  (cases={entry['cases']}, failed={entry['failed']})")
        lines.append(
            f"{'':12}| {'generative accuracy':^30} | {'probabilistic coherence':^30} | {'logical coherence':^30}"
        )
        lines.append(f"{'':12}| {header_tags} | {header_tags} | {header_logic}")
        for phase, label in (("pre", "pre-edit"), ("post", "post-edit"), ("delta", "delta")):
            metrics = entry[phase]
            signed = phase == "delta"
            if metrics is None:
                row = " | ".join("  ".join(["   n/a"] * 4) for _ in range(3))
            else:
                row = " | ".join(
                    "  ".join(_fmt(metrics[group][k], signed) for k in keys)
                    for group, keys in (
                        ("gen_acc", PROB_TAGS),
                        ("prob_mae", PROB_TAGS),
                        ("logic_mae", LOGIC_TAGS),
                    )
                )
            lines.append(f"{label:12}| {row}")
    lines.append(bar)
    return "\n".join(lines)


def save_report(report: MetricsReport, json_path: str, text_path: str, config: dict | None = None, seed=None) -> None:
    payload = {"header": artifacts.header_dict(config or {}, seed, fmt="beliefbench-report/1")}
    payload.update(report.to_payload())
    artifacts.write_json(json_path, payload)
    lines = artifacts.header_lines(config or {}, seed) + render_report(report).split("\n")
    artifacts.write_text(text_path, lines)


def load_report(json_path: str) -> MetricsReport:
    payload = artifacts.read_json(json_path)
    if payload.get("header", {}).get("format") != "beliefbench-report/1":
        raise EvalError(f"not a report file: {json_path}")
    return MetricsReport.from_payload(payload)
