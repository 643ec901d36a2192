"""Built-in probe-answering agents.

Three reference models make the evaluation harness self-contained:

* bayes      — wraps a referee state; its probabilities are the
               benchmark targets by construction, so it scores perfect
               coherence and accuracy.
* memorizer  — relative-frequency counts over the corpus's atomic
               sentences; treats edits as weighted observations.
* stale      — a memorizer that ignores edit requests entirely.

Agents speak the same query schema as the wire protocol, just without
the serialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .language import And, Atom, Atomic, Body, Language, LanguageError, Not, Or, Sentence
from .oracle import OracleState


@dataclass
class ProbeQuery:
    id: str
    kind: str  # next_object | truth | generate
    prompt: str
    candidate: Optional[str] = None


@dataclass
class ProbeResponse:
    id: str
    probability: Optional[float] = None
    text: Optional[str] = None
    error: Optional[str] = None


class ProtocolError(RuntimeError):
    """A model answered outside the probe protocol's contract."""


class AgentError(ValueError):
    pass


class BayesAgent:
    """The referee answering its own benchmark."""

    name = "bayes"

    def __init__(self, state: OracleState, language: Language):
        self.state = state
        self.language = language
        self._tokens: list = []

    def answer(self, query: ProbeQuery) -> ProbeResponse:
        try:
            if query.kind == "next_object":
                s, r = self.language.parse_fact_prompt(query.prompt)
                obj = self.language.vocab.entity_of_surface.get(query.candidate or "")
                if obj is None:
                    return ProbeResponse(query.id, error=f"unknown candidate {query.candidate!r}")
                return ProbeResponse(query.id, probability=self.state.candidate_probability(s, r, obj))
            if query.kind == "truth":
                body = self.language.parse_prompt(query.prompt)
                return ProbeResponse(query.id, probability=self.state.body_probability(body))
            if query.kind == "generate":
                s, r = self.language.parse_fact_prompt(query.prompt)
                dist = self.state.query_distribution(s, r)
                top = max(dist.probs)
                winner = min(o for o, p in zip(dist.objects, dist.probs) if p == top)
                return ProbeResponse(query.id, text=self.language.vocab.entity_surface(winner))
            return ProbeResponse(query.id, error=f"unknown probe kind {query.kind!r}")
        except (LanguageError, ValueError) as exc:
            return ProbeResponse(query.id, error=str(exc))

    def apply_edit(self, prompt: str, target: str, weight: float) -> None:
        s, r = self.language.parse_fact_prompt(prompt)
        obj = self.language.vocab.entity_of_surface.get(target)
        if obj is None:
            raise AgentError(f"unknown edit target {target!r}")
        self._tokens.append(self.state.snapshot())
        if weight > 0:
            self.state.apply_edit(Atom(s, r, obj), weight)

    def revert(self) -> None:
        if not self._tokens:
            raise AgentError("no edit to revert")
        self.state.restore(self._tokens.pop())


class MemorizerAgent:
    """Relative-frequency counts over the corpus's atomic sentences."""

    name = "memorizer"

    def __init__(self, sentences: list[Sentence], language: Language):
        self.language = language
        self.counts: dict[tuple[str, str], dict[str, float]] = {}
        for sentence in sentences:
            if isinstance(sentence, Atomic):
                a = sentence.atom
                cell = self.counts.setdefault((a.subject, a.relation), {})
                cell[a.object] = cell.get(a.object, 0.0) + 1.0
        self._undo: list[list[tuple[tuple[str, str], str, Optional[float]]]] = []

    def _freq(self, subject: str, relation: str, obj: str) -> float:
        cell = self.counts.get((subject, relation))
        if not cell:
            return 0.0
        total = sum(cell.values())
        return cell.get(obj, 0.0) / total if total > 0 else 0.0

    def _atom_prob(self, atom: Atom) -> float:
        return self._freq(atom.subject, atom.relation, atom.object)

    def _body_prob(self, body: Body) -> float:
        if isinstance(body, Atom):
            return self._atom_prob(body)
        if isinstance(body, Not):
            return 1.0 - self._atom_prob(body.atom)
        if isinstance(body, And):
            return self._atom_prob(body.left) * self._atom_prob(body.right)
        if isinstance(body, Or):
            pa, pb = self._atom_prob(body.left), self._atom_prob(body.right)
            return pa + pb - pa * pb
        raise AgentError(f"not a body: {body!r}")

    def answer(self, query: ProbeQuery) -> ProbeResponse:
        try:
            if query.kind == "next_object":
                s, r = self.language.parse_fact_prompt(query.prompt)
                obj = self.language.vocab.entity_of_surface.get(query.candidate or "")
                if obj is None:
                    return ProbeResponse(query.id, error=f"unknown candidate {query.candidate!r}")
                return ProbeResponse(query.id, probability=self._freq(s, r, obj))
            if query.kind == "truth":
                body = self.language.parse_prompt(query.prompt)
                return ProbeResponse(query.id, probability=self._body_prob(body))
            if query.kind == "generate":
                s, r = self.language.parse_fact_prompt(query.prompt)
                cell = self.counts.get((s, r))
                if not cell:
                    return ProbeResponse(query.id, text="")
                top = max(cell.values())
                winner = min(o for o, c in cell.items() if c == top)
                return ProbeResponse(query.id, text=self.language.vocab.entity_surface(winner))
            return ProbeResponse(query.id, error=f"unknown probe kind {query.kind!r}")
        except (LanguageError, ValueError) as exc:
            return ProbeResponse(query.id, error=str(exc))

    def apply_edit(self, prompt: str, target: str, weight: float) -> None:
        s, r = self.language.parse_fact_prompt(prompt)
        obj = self.language.vocab.entity_of_surface.get(target)
        if obj is None:
            raise AgentError(f"unknown edit target {target!r}")
        cell = self.counts.setdefault((s, r), {})
        self._undo.append([((s, r), obj, cell.get(obj))])
        cell[obj] = cell.get(obj, 0.0) + weight

    def revert(self) -> None:
        if not self._undo:
            raise AgentError("no edit to revert")
        for key, obj, old in reversed(self._undo.pop()):
            if old is None:
                del self.counts[key][obj]
            else:
                self.counts[key][obj] = old


class StaleAgent(MemorizerAgent):
    """A memorizer that silently drops edit requests."""

    name = "stale"

    def apply_edit(self, prompt: str, target: str, weight: float) -> None:
        pass

    def revert(self) -> None:
        pass
