"""The exact Bayesian referee.

Beliefs are Dirichlet-Categorical count tables with a symmetric
pseudo-count prior: one table per (subject, relation) key, and one
conditional table per (downstream relation, upstream relation,
upstream object), shared across subjects.  The posterior predictive of
a table with counts c over K registered objects is

    p(o) = (alpha + c_o) / (K * alpha + sum(c))

and downstream relations marginalize over upstream objects:

    p(o_d | s, r_d) = sum_u p(o_d | r_d, r_u, o_u) p(o_u | s, r_u)

Evidence weighting follows the corpus semantics: atomic and "is true"
sentences count 1 toward their object; "is false" spreads 1 uniformly
over the rest of the support; connective sentences weight each
constituent atom by the probability the atom is true given the
sentence label, computed from the post-pass-1 state under independence
of distinct-subject atoms.  Downstream observations also credit the
conditional tables, apportioned by the current upstream posterior.

Probabilities of objects outside a registered support use the
"as-if-registered" value alpha / ((K+1) * alpha + N), a pure function
of the current counts, so querying never mutates state.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from . import artifacts
from .language import And, Atom, Atomic, Body, Not, Or, Sentence, Truth, atoms_of
from .world import DependencyMap, Distribution

logger = logging.getLogger(__name__)

_EPS = 1e-15


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotToken:
    serial: int


class OracleState:
    """Mutable belief state; reads are pure, writes need exclusive access."""

    def __init__(self, deps: DependencyMap, prior_alpha: float = 1.0):
        if prior_alpha <= 0:
            raise OracleError("prior pseudo-count must be positive")
        self.deps = deps
        self.prior_alpha = float(prior_alpha)
        self.basic: dict[tuple[str, str], dict[str, float]] = {}
        self.cond: dict[tuple[str, str, str], dict[str, float]] = {}
        self.global_support: dict[str, set[str]] = {}
        self._journals: list[tuple[SnapshotToken, list[tuple]]] = []
        self._serial = 0

    # -- journaling -----------------------------------------------------

    def _record(self, entry: tuple) -> None:
        if self._journals:
            self._journals[-1][1].append(entry)

    def snapshot(self) -> SnapshotToken:
        self._serial += 1
        token = SnapshotToken(self._serial)
        self._journals.append((token, []))
        return token

    def restore(self, token: SnapshotToken) -> None:
        positions = [i for i, (t, _) in enumerate(self._journals) if t is token or t == token]
        if not positions:
            raise OracleError("stale snapshot token")
        keep = positions[0]
        for _, journal in reversed(self._journals[keep:]):
            for entry in reversed(journal):
                self._undo(entry)
        del self._journals[keep:]

    def _undo(self, entry: tuple) -> None:
        kind = entry[0]
        if kind == "basic":
            _, key, obj, old = entry
            if old is None:
                del self.basic[key][obj]
            else:
                self.basic[key][obj] = old
        elif kind == "cond":
            _, key, obj, old = entry
            if old is None:
                del self.cond[key][obj]
            else:
                self.cond[key][obj] = old
        elif kind == "basic_cell":
            del self.basic[entry[1]]
        elif kind == "cond_cell":
            del self.cond[entry[1]]
        elif kind == "global":
            self.global_support[entry[1]].discard(entry[2])
        else:  # pragma: no cover
            raise OracleError(f"bad journal entry {entry!r}")

    # -- registration ----------------------------------------------------

    def register(self, subject: str, relation: str, objects: Iterable[str]) -> None:
        """Add objects to the (s, r) support and the relation-wide support."""
        key = (subject, relation)
        if key not in self.basic:
            self.basic[key] = {}
            self._record(("basic_cell", key))
        cell = self.basic[key]
        support = self.global_support.setdefault(relation, set())
        for obj in objects:
            if obj not in cell:
                cell[obj] = 0.0
                self._record(("basic", key, obj, None))
            if obj not in support:
                support.add(obj)
                self._record(("global", relation, obj))

    def is_registered(self, subject: str, relation: str) -> bool:
        return (subject, relation) in self.basic

    # -- core accounting ---------------------------------------------------

    def _bump_basic(self, subject: str, relation: str, obj: str, weight: float) -> None:
        self.register(subject, relation, (obj,))
        cell = self.basic[(subject, relation)]
        self._record(("basic", (subject, relation), obj, cell[obj]))
        cell[obj] += weight

    def _bump_cond(self, ckey: tuple[str, str, str], obj: str, weight: float) -> None:
        if ckey not in self.cond:
            self.cond[ckey] = {}
            self._record(("cond_cell", ckey))
        cell = self.cond[ckey]
        old = cell.get(obj)
        self._record(("cond", ckey, obj, old))
        cell[obj] = (old or 0.0) + weight

    def _credit_conditionals(self, subject: str, relation: str, obj: str, weight: float) -> None:
        """Apportion a downstream observation across upstream values by
        the current upstream posterior."""
        ru = self.deps.upstream_of(relation)
        if ru is None or (subject, ru) not in self.basic:
            return
        upstream = self.posterior_basic(subject, ru)
        for o_u, p_u in zip(upstream.objects, upstream.probs):
            if p_u > 0.0:
                self._bump_cond((relation, ru, o_u), obj, weight * p_u)

    def observe_atomic(self, atom: Atom, weight: float = 1.0) -> None:
        if weight < 0:
            raise OracleError(f"negative evidence weight {weight}")
        self._bump_basic(atom.subject, atom.relation, atom.object, weight)
        if weight > 0:
            self._credit_conditionals(atom.subject, atom.relation, atom.object, weight)

    def observe_false(self, atom: Atom, weight: float = 1.0) -> None:
        """'X is false': spread the weight uniformly over the rest of the
        registered support."""
        if weight < 0:
            raise OracleError(f"negative evidence weight {weight}")
        self.register(atom.subject, atom.relation, (atom.object,))
        others = sorted(
            o for o in self.basic[(atom.subject, atom.relation)] if o != atom.object
        )
        if not others:
            logger.debug("no alternative object to credit for %s", atom)
            return
        share = weight / len(others)
        for other in others:
            self.observe_atomic(Atom(atom.subject, atom.relation, other), share)

    # -- corpus fitting -----------------------------------------------------

    def observe_corpus(self, sentences: Sequence[Sentence]) -> None:
        """Two-pass fit: atomic/TF evidence first (order-free), then
        connective evidence weighted by the intermediate posteriors."""
        for sentence in sentences:
            for atom in atoms_of(sentence):
                self.register(atom.subject, atom.relation, (atom.object,))

        pending: list[tuple[str, str, str, float]] = []

        def stage(atom: Atom, weight: float) -> None:
            self._bump_basic(atom.subject, atom.relation, atom.object, weight)
            pending.append((atom.subject, atom.relation, atom.object, weight))

        connectives: list[Truth] = []
        for sentence in sentences:
            if isinstance(sentence, Atomic):
                stage(sentence.atom, 1.0)
            elif isinstance(sentence.body, Atom):
                if sentence.label:
                    stage(sentence.body, 1.0)
                else:
                    atom = sentence.body
                    others = sorted(
                        o for o in self.basic[(atom.subject, atom.relation)] if o != atom.object
                    )
                    for other in others:
                        stage(Atom(atom.subject, atom.relation, other), 1.0 / len(others))
            else:
                connectives.append(sentence)

        for subject, relation, obj, weight in pending:
            if weight > 0:
                self._credit_conditionals(subject, relation, obj, weight)

        weighted: list[tuple[Atom, float]] = []
        for sentence in connectives:
            weighted.extend(self._connective_weights(sentence.body, sentence.label).items())
        for atom, weight in weighted:
            if weight > 0:
                self.observe_atomic(atom, weight)

    def _connective_weights(self, body: Body, label: bool) -> dict[Atom, float]:
        """P(atom true | sentence label) for each constituent atom,
        under independence of the two atoms."""
        if isinstance(body, Not):
            return {body.atom: 1.0 if not label else 0.0}
        if isinstance(body, (And, Or)):
            pa = self.atom_probability(body.left)
            pb = self.atom_probability(body.right)
            if isinstance(body, And):
                if label:
                    return {body.left: 1.0, body.right: 1.0}
                denom = 1.0 - pa * pb
                if denom < _EPS:
                    return {body.left: 0.0, body.right: 0.0}
                return {
                    body.left: _clamp01(pa * (1.0 - pb) / denom),
                    body.right: _clamp01(pb * (1.0 - pa) / denom),
                }
            if label:
                denom = pa + pb - pa * pb
                if denom < _EPS:
                    return {body.left: 0.0, body.right: 0.0}
                return {
                    body.left: _clamp01(pa / denom),
                    body.right: _clamp01(pb / denom),
                }
            return {body.left: 0.0, body.right: 0.0}
        raise OracleError(f"not a connective body: {body!r}")

    # -- posteriors -----------------------------------------------------------

    def _cell_distribution(self, counts: dict[str, float], support: Iterable[str]) -> Distribution:
        objects = tuple(sorted(support))
        if not objects:
            raise OracleError("empty support")
        alpha = self.prior_alpha
        total = len(objects) * alpha + math.fsum(counts.get(o, 0.0) for o in objects)
        probs = tuple((alpha + counts.get(o, 0.0)) / total for o in objects)
        return Distribution(objects, probs)

    def posterior_basic(self, subject: str, relation: str) -> Distribution:
        key = (subject, relation)
        if key not in self.basic:
            raise OracleError(f"unknown fact key ({subject}, {relation})")
        return self._cell_distribution(self.basic[key], self.basic[key].keys())

    def is_routed(self, subject: str, relation: str) -> bool:
        """True when queries on (s, r) marginalize over upstream values."""
        ru = self.deps.upstream_of(relation)
        return ru is not None and (subject, ru) in self.basic

    def posterior_downstream(self, subject: str, relation: str) -> Distribution:
        ru = self.deps.upstream_of(relation)
        if ru is None or (subject, ru) not in self.basic:
            logger.warning(
                "no upstream evidence for (%s, %s); falling back to the per-subject table",
                subject,
                relation,
            )
            return self.posterior_basic(subject, relation)
        support = tuple(sorted(self.global_support.get(relation, ())))
        if not support:
            raise OracleError(f"no objects registered for relation {relation}")
        upstream = self.posterior_basic(subject, ru)
        mix = [0.0] * len(support)
        for o_u, p_u in zip(upstream.objects, upstream.probs):
            row = self._cell_distribution(self.cond.get((relation, ru, o_u), {}), support)
            for i, p in enumerate(row.probs):
                mix[i] += p_u * p
        return Distribution(support, tuple(mix))

    def query_distribution(self, subject: str, relation: str) -> Distribution:
        if self.is_routed(subject, relation):
            return self.posterior_downstream(subject, relation)
        return self.posterior_basic(subject, relation)

    def _cell_candidate(self, counts: dict[str, float], support: Iterable[str], obj: str) -> float:
        objects = set(support)
        alpha = self.prior_alpha
        n = math.fsum(counts.get(o, 0.0) for o in objects)
        if obj in objects:
            return (alpha + counts.get(obj, 0.0)) / (len(objects) * alpha + n)
        return alpha / ((len(objects) + 1) * alpha + n)

    def candidate_probability(self, subject: str, relation: str, obj: str) -> float:
        """Probability of one object, extending the support as if the
        object were registered when it is not."""
        if self.is_routed(subject, relation):
            ru = self.deps.upstream_of(relation)
            support = self.global_support.get(relation, set())
            upstream = self.posterior_basic(subject, ru)
            return math.fsum(
                p_u * self._cell_candidate(self.cond.get((relation, ru, o_u), {}), support, obj)
                for o_u, p_u in zip(upstream.objects, upstream.probs)
            )
        key = (subject, relation)
        if key not in self.basic:
            raise OracleError(f"unknown fact key ({subject}, {relation})")
        return self._cell_candidate(self.basic[key], self.basic[key].keys(), obj)

    def atom_probability(self, atom: Atom) -> float:
        return self.candidate_probability(atom.subject, atom.relation, atom.object)

    def truth_probability(self, sentence: Union[Sentence, Body]) -> float:
        """Probability the sentence (or bare body) is true."""
        if isinstance(sentence, Atomic):
            return self.atom_probability(sentence.atom)
        if isinstance(sentence, Truth):
            p = self.body_probability(sentence.body)
            return p if sentence.label else 1.0 - p
        return self.body_probability(sentence)

    def body_probability(self, body: Body) -> float:
        if isinstance(body, Atom):
            return self.atom_probability(body)
        if isinstance(body, Not):
            return 1.0 - self.atom_probability(body.atom)
        if isinstance(body, (And, Or)):
            a, b = body.left, body.right
            if (a.subject, a.relation) == (b.subject, b.relation):
                raise OracleError("dependence unsupported: operands share a fact key")
            pa = self.atom_probability(a)
            pb = self.atom_probability(b)
            if isinstance(body, And):
                return pa * pb
            return pa + pb - pa * pb
        raise OracleError(f"not a body: {body!r}")

    # -- edits ------------------------------------------------------------------

    def apply_edit(self, atom: Atom, weight: float) -> None:
        if weight <= 0:
            raise OracleError(f"edit weight must be positive, got {weight}")
        self.observe_atomic(atom, weight)

    def min_weight_for(self, atom: Atom, threshold: float = 0.95) -> int:
        """Smallest integer weight making the per-key posterior of the
        atom's object reach the threshold."""
        if threshold >= 1.0:
            raise OracleError("threshold must be below 1")
        key = (atom.subject, atom.relation)
        if key not in self.basic:
            raise OracleError(f"unknown fact key {key}")
        cell = self.basic[key]
        alpha = self.prior_alpha
        if atom.object in cell:
            k = len(cell)
            c = cell[atom.object]
        else:
            k = len(cell) + 1
            c = 0.0
        n = math.fsum(cell.values())

        def posterior_at(w: float) -> float:
            return (alpha + c + w) / (k * alpha + n + w)

        if posterior_at(0) >= threshold:
            return 0
        guess = math.ceil((threshold * (k * alpha + n) - alpha - c) / (1.0 - threshold))
        w = max(1, guess)
        while w > 0 and posterior_at(w - 1) >= threshold:
            w -= 1
        while posterior_at(w) < threshold:
            w += 1
        return int(w)

    # -- persistence ---------------------------------------------------------------

    def fingerprint(self) -> str:
        payload = {
            "alpha": self.prior_alpha,
            "deps": [list(p) for p in self.deps.pairs],
            "basic": {f"{s}\t{r}": sorted(cell.items()) for (s, r), cell in self.basic.items()},
            "cond": {
                f"{rd}\t{ru}\t{ou}": sorted(cell.items())
                for (rd, ru, ou), cell in self.cond.items()
            },
            "global": {r: sorted(objs) for r, objs in self.global_support.items()},
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def save(self, path: str, config: dict | None = None, seed=None) -> None:
        payload = {
            "header": artifacts.header_dict(config or {}, seed, fmt="beliefbench-oracle/1"),
            "prior_alpha": self.prior_alpha,
            "deps": [list(p) for p in self.deps.pairs],
            "global": {r: sorted(objs) for r, objs in self.global_support.items()},
            "basic": sorted(
                [s, r, sorted(cell), [cell[o] for o in sorted(cell)]]
                for (s, r), cell in self.basic.items()
            ),
            "cond": sorted(
                [rd, ru, ou, sorted(cell), [cell[o] for o in sorted(cell)]]
                for (rd, ru, ou), cell in self.cond.items()
            ),
        }
        artifacts.write_json(path, payload)

    @classmethod
    def load(cls, path: str) -> "OracleState":
        payload = artifacts.read_json(path)
        if payload.get("header", {}).get("format") != "beliefbench-oracle/1":
            raise OracleError(f"not an oracle state file: {path}")
        state = cls(
            DependencyMap(tuple((ru, rd) for ru, rd in payload["deps"])),
            prior_alpha=payload["prior_alpha"],
        )
        state.global_support = {r: set(objs) for r, objs in payload["global"].items()}
        for s, r, objs, counts in payload["basic"]:
            state.basic[(s, r)] = dict(zip(objs, counts))
        for rd, ru, ou, objs, counts in payload["cond"]:
            state.cond[(rd, ru, ou)] = dict(zip(objs, counts))
        return state


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def fit_oracle(
    sentences: Sequence[Sentence], deps: DependencyMap, prior_alpha: float = 1.0
) -> OracleState:
    state = OracleState(deps, prior_alpha=prior_alpha)
    state.observe_corpus(sentences)
    return state
