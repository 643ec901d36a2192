"""Editing test cases with exact pre- and post-edit target probabilities.

Each case is one requested edit (s1, r1, o*) with two evidence weights
(the fixed n=1000 and the minimal n' reaching a 0.95 posterior), four
atomic probes tagged s1r1/s1r2/s2r1/s2r2, and four logic probes
(truth claim, negation, conjunction, disjunction built from the edit
sentence A and a random sentence B about another subject).  Targets
come from the referee with a snapshot/restore bracket around each
edit, so case generation leaves the referee untouched.

Edits reinforce the corpus ground truth half the time (error fixing)
and contradict it half the time (counterfactual); counterfactual
objects are rejection-sampled so the downstream answer flips for
roughly 80% of the cases that have a live downstream probe.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import artifacts
from .language import And, Atom, Body, Language, Not, Or
from .oracle import OracleState
from .world import WorldModel

logger = logging.getLogger(__name__)

PROB_TAGS = ("s1r1", "s1r2", "s2r1", "s2r2")
LOGIC_TAGS = ("tf", "not", "and", "or")
ARGMAX_TIE_TOL = 1e-12


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class EditRequest:
    atom: Atom
    kind: str  # "error_fixing" | "counterfactual"
    weight_fixed: int = 1000
    weight_auto: int = 0


@dataclass
class TestCase:
    __test__ = False  # not a pytest class, despite the name

    id: str
    edit: EditRequest
    prob_probes: dict[str, Atom]
    atom_b: Atom
    prompts: dict[str, dict[str, str]] = field(default_factory=dict)
    targets_pre: dict[str, float] = field(default_factory=dict)
    targets_post: dict[str, float] = field(default_factory=dict)
    targets_post_fixed: dict[str, float] = field(default_factory=dict)
    argmax_pre: dict[str, list[str]] = field(default_factory=dict)
    argmax_post: dict[str, list[str]] = field(default_factory=dict)
    argmax_post_fixed: dict[str, list[str]] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)

    def logic_bodies(self) -> dict[str, Body]:
        a = self.edit.atom
        return {"tf": a, "not": Not(a), "and": And(a, self.atom_b), "or": Or(a, self.atom_b)}

    def weight(self, mode: str) -> int:
        if mode == "auto":
            return self.edit.weight_auto
        if mode == "fixed":
            return self.edit.weight_fixed
        raise BenchError(f"unknown weight mode {mode!r}")

    def targets(self, phase: str, mode: str = "auto") -> dict[str, float]:
        if phase == "pre":
            return self.targets_pre
        return self.targets_post if mode == "auto" else self.targets_post_fixed

    def argmax(self, phase: str, mode: str = "auto") -> dict[str, list[str]]:
        if phase == "pre":
            return self.argmax_pre
        return self.argmax_post if mode == "auto" else self.argmax_post_fixed


def tied_argmax(dist) -> list[str]:
    top = max(dist.probs)
    return [o for o, p in zip(dist.objects, dist.probs) if p >= top - ARGMAX_TIE_TOL]


def compute_targets(state: OracleState, case: TestCase) -> tuple[dict[str, float], dict[str, list[str]]]:
    """Targets and tied argmaxes at the referee's current state."""
    targets: dict[str, float] = {}
    argmax: dict[str, list[str]] = {}
    for tag, atom in case.prob_probes.items():
        targets[tag] = state.candidate_probability(atom.subject, atom.relation, atom.object)
        argmax[tag] = tied_argmax(state.query_distribution(atom.subject, atom.relation))
    for tag, body in case.logic_bodies().items():
        targets[tag] = state.body_probability(body)
    targets["b"] = state.atom_probability(case.atom_b)
    return targets, argmax


def fill_case_targets(state: OracleState, case: TestCase) -> None:
    """Populate pre/post targets with a snapshot/restore bracket; the
    referee is bit-identical before and after."""
    case.targets_pre, case.argmax_pre = compute_targets(state, case)

    token = state.snapshot()
    if case.edit.weight_auto > 0:
        state.apply_edit(case.edit.atom, case.edit.weight_auto)
    case.targets_post, case.argmax_post = compute_targets(state, case)
    state.restore(token)

    token = state.snapshot()
    state.apply_edit(case.edit.atom, case.edit.weight_fixed)
    case.targets_post_fixed, case.argmax_post_fixed = compute_targets(state, case)
    state.restore(token)

    case.flags["downstream_change"] = case.argmax_pre["s1r2"] != case.argmax_post["s1r2"]


def gen_cases(
    world: WorldModel,
    state: OracleState,
    trained_facts: list[tuple[str, str, str]],
    n_cases: int = 5000,
    seed: int = 0,
    threshold: float = 0.95,
    prefer_downstream: float = 0.8,
    flip_cap: int = 50,
) -> list[TestCase]:
    rng = np.random.default_rng(artifacts.stable_rng_seed(seed, "bench"))
    gt_of = {(s, r): o for s, r, o in trained_facts}
    trained_keys = sorted(gt_of)
    by_subject: dict[str, list[str]] = {}
    subjects_with: dict[str, set[str]] = {}
    for s, r in trained_keys:
        by_subject.setdefault(s, []).append(r)
        subjects_with.setdefault(r, set()).add(s)

    eligible = [
        (s, r)
        for s, r in trained_keys
        if not state.is_routed(s, r) and len(by_subject[s]) >= 2
    ]
    if not eligible:
        raise BenchError("no eligible edit facts (need unrouted facts on multi-fact subjects)")

    language = Language(world.vocabulary())
    cases: list[TestCase] = []
    for i in range(n_cases):
        s1, r1 = eligible[int(rng.integers(len(eligible)))]
        gt = gt_of[(s1, r1)]
        error_fixing = rng.random() < 0.5

        r2 = state.deps.downstream_of(r1)
        s1r2_fallback = r2 is None or (s1, r2) not in gt_of
        if s1r2_fallback:
            others = [r for r in by_subject[s1] if r != r1]
            r2 = others[int(rng.integers(len(others)))]

        pool = [o for o in world.graph.objects_of_relation(r1) if o != gt]
        pre_s1r2_argmax = tied_argmax(state.query_distribution(s1, r2))
        if error_fixing:
            o_star = gt
        elif not s1r2_fallback and rng.random() < prefer_downstream:
            o_star = _flip_candidate(state, s1, r1, r2, pool, pre_s1r2_argmax, threshold, flip_cap, rng)
        else:
            o_star = pool[int(rng.integers(len(pool)))]

        s2, s2r1_rel, s2r2_rel, s2_fallback = _pick_s2(rng, s1, r1, r2, by_subject, subjects_with)
        atom_b = _pick_b(rng, state, trained_keys, exclude_subject=s1)

        edit_atom = Atom(s1, r1, o_star)
        n_auto = state.min_weight_for(edit_atom, threshold)
        probes = {
            "s1r1": edit_atom,
            "s1r2": Atom(s1, r2, tied_argmax(state.query_distribution(s1, r2))[0]),
            "s2r1": Atom(s2, s2r1_rel, tied_argmax(state.query_distribution(s2, s2r1_rel))[0]),
            "s2r2": Atom(s2, s2r2_rel, tied_argmax(state.query_distribution(s2, s2r2_rel))[0]),
        }
        case = TestCase(
            id=f"case-{i:05d}",
            edit=EditRequest(edit_atom, "error_fixing" if error_fixing else "counterfactual", 1000, n_auto),
            prob_probes=probes,
            atom_b=atom_b,
            flags={
                "error_fixing": error_fixing,
                "s1r2_fallback": s1r2_fallback,
                "s2_fallback": s2_fallback,
            },
        )
        fill_case_targets(state, case)
        case.prompts = render_case_prompts(case, language)
        for name in ("argmax_pre", "argmax_post", "argmax_post_fixed"):
            ids = getattr(case, name)
            setattr(
                case,
                name,
                {tag: [language.vocab.entity_surface(o) for o in objs] for tag, objs in ids.items()},
            )
        cases.append(case)
    return cases


def _flip_candidate(state, s1, r1, r2, pool, pre_argmax, threshold, flip_cap, rng) -> str:
    """Rejection-sample a counterfactual object until the downstream
    answer flips, up to flip_cap draws."""
    candidate = pool[int(rng.integers(len(pool)))]
    for _ in range(flip_cap):
        candidate = pool[int(rng.integers(len(pool)))]
        atom = Atom(s1, r1, candidate)
        weight = state.min_weight_for(atom, threshold)
        if weight <= 0:
            continue
        token = state.snapshot()
        state.apply_edit(atom, weight)
        flipped = tied_argmax(state.query_distribution(s1, r2)) != pre_argmax
        state.restore(token)
        if flipped:
            return candidate
    return candidate


def _pick_s2(rng, s1, r1, r2, by_subject, subjects_with):
    both = sorted((subjects_with.get(r1, set()) & subjects_with.get(r2, set())) - {s1})
    if both:
        s2 = both[int(rng.integers(len(both)))]
        return s2, r1, r2, False
    with_r1 = sorted(subjects_with.get(r1, set()) - {s1})
    if with_r1:
        s2 = with_r1[int(rng.integers(len(with_r1)))]
        others = [r for r in by_subject[s2] if r != r1] or [r1]
        return s2, r1, others[int(rng.integers(len(others)))], True
    candidates = sorted(s for s in by_subject if s != s1)
    if not candidates:
        raise BenchError("need at least two trained subjects")
    s2 = candidates[int(rng.integers(len(candidates)))]
    rels = by_subject[s2]
    return s2, rels[int(rng.integers(len(rels)))], rels[int(rng.integers(len(rels)))], True


def _pick_b(rng, state, trained_keys, exclude_subject) -> Atom:
    for _ in range(1000):
        s, r = trained_keys[int(rng.integers(len(trained_keys)))]
        if s != exclude_subject:
            support = sorted(state.basic[(s, r)])
            return Atom(s, r, support[int(rng.integers(len(support)))])
    raise BenchError("could not sample a partner sentence about another subject")


def split_subsets(cases: list[TestCase]) -> dict[str, list[TestCase]]:
    return {
        "all": list(cases),
        "downstream_change": [c for c in cases if c.flags.get("downstream_change")],
        "error_fixing": [c for c in cases if c.flags.get("error_fixing")],
    }


# -- persistence -------------------------------------------------------------


def _atom_record(atom: Atom) -> dict[str, str]:
    return {"subject": atom.subject, "relation": atom.relation, "object": atom.object}


def _atom_from(record: dict[str, str]) -> Atom:
    return Atom(record["subject"], record["relation"], record["object"])


def render_case_prompts(case: TestCase, language: Language) -> dict[str, dict[str, str]]:
    """Prompt/candidate text for every probe, so the benchmark file is
    self-contained for external models."""
    prompts: dict[str, dict[str, str]] = {}
    for tag, atom in case.prob_probes.items():
        prompts[tag] = {
            "prompt": language.fact_prompt(atom.subject, atom.relation),
            "candidate": language.vocab.entity_surface(atom.object),
        }
    for tag, body in case.logic_bodies().items():
        prompts[tag] = {"prompt": language.truth_prompt(body)}
    prompts["b"] = {"prompt": language.truth_prompt(case.atom_b)}
    prompts["edit"] = {
        "prompt": language.fact_prompt(case.edit.atom.subject, case.edit.atom.relation),
        "target": language.vocab.entity_surface(case.edit.atom.object),
    }
    return prompts


def save_benchmark(
    cases: list[TestCase],
    path: str,
    language: Language,
    config: dict | None = None,
    seed=None,
) -> None:
    lines = artifacts.header_lines(config or {}, seed)
    for case in cases:
        if not case.prompts:
            case.prompts = render_case_prompts(case, language)
        record = {
            "id": case.id,
            "edit": {**_atom_record(case.edit.atom), "kind": case.edit.kind},
            "weights": {"fixed": case.edit.weight_fixed, "auto": case.edit.weight_auto},
            "probes": {tag: _atom_record(a) for tag, a in case.prob_probes.items()},
            "b": _atom_record(case.atom_b),
            "prompts": case.prompts,
            "targets_pre": case.targets_pre,
            "targets_post": case.targets_post,
            "targets_post_fixed": case.targets_post_fixed,
            "argmax_pre": case.argmax_pre,
            "argmax_post": case.argmax_post,
            "argmax_post_fixed": case.argmax_post_fixed,
            "flags": case.flags,
        }
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    artifacts.write_text(path, lines)


def load_benchmark(path: str) -> list[TestCase]:
    cases = []
    for line in artifacts.read_text(path):
        if not line:
            continue
        rec = json.loads(line)
        cases.append(
            TestCase(
                id=rec["id"],
                edit=EditRequest(
                    _atom_from(rec["edit"]),
                    rec["edit"]["kind"],
                    rec["weights"]["fixed"],
                    rec["weights"]["auto"],
                ),
                prob_probes={tag: _atom_from(a) for tag, a in rec["probes"].items()},
                atom_b=_atom_from(rec["b"]),
                prompts=rec["prompts"],
                targets_pre=rec["targets_pre"],
                targets_post=rec["targets_post"],
                targets_post_fixed=rec["targets_post_fixed"],
                argmax_pre=rec["argmax_pre"],
                argmax_post=rec["argmax_post"],
                argmax_post_fixed=rec["argmax_post_fixed"],
                flags=rec["flags"],
            )
        )
    return cases
