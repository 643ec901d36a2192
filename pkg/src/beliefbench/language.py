"""The formal language of the testbed.

Sentences are either bare atomic claims ("subject relation object") or
truth claims over a body, where a body is a quoted atom, a negated
quoted atom, or a conjunction/disjunction of two quoted atoms:

    grace stone coates educated at scions
    "grace stone coates educated at scions" is false
    not "grace stone coates educated at scions" is false
    "A" and "B" is true
    "A" or "B" is false

Connectives never nest: a body holds atoms only, and the truth label
sits on top.  Documents join sentences with " . " and end with " .".
The grammar is spelled out in docs/grammar.ebnf.

Entity and relation names may contain spaces; parsing resolves them
greedily against the vocabulary (longest match first, with backtracking
so that an over-long subject match never shadows a valid split).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import artifacts

TRUE_SUFFIX = " is true"
FALSE_SUFFIX = " is false"

# Tokens that would make a rendered atom collide with the truth-claim
# suffix.  "is"/"and"/"or"/"not" inside names are harmless because
# connective syntax only occurs outside quoted atom bodies.
FORBIDDEN_NAME_TOKENS = frozenset({"true", "false"})
FORBIDDEN_NAME_CHARS = '"\t\n.'


class LanguageError(ValueError):
    """Raised on malformed sentences; carries the failing offset."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Atom:
    subject: str
    relation: str
    object: str


@dataclass(frozen=True)
class Not:
    atom: Atom


@dataclass(frozen=True)
class And:
    left: Atom
    right: Atom


@dataclass(frozen=True)
class Or:
    left: Atom
    right: Atom


Body = Union[Atom, Not, And, Or]


@dataclass(frozen=True)
class Atomic:
    atom: Atom


@dataclass(frozen=True)
class Truth:
    body: Body
    label: bool


Sentence = Union[Atomic, Truth]


@dataclass(frozen=True)
class Document:
    sentences: tuple[Sentence, ...]
    topic_subject: str


def atoms_of(sentence: Sentence) -> tuple[Atom, ...]:
    """All atoms mentioned by a sentence, left to right."""
    if isinstance(sentence, Atomic):
        return (sentence.atom,)
    body = sentence.body
    if isinstance(body, Atom):
        return (body,)
    if isinstance(body, Not):
        return (body.atom,)
    return (body.left, body.right)


def valid_name(name: str) -> bool:
    if not name or name != name.strip():
        return False
    if any(ch in name for ch in FORBIDDEN_NAME_CHARS):
        return False
    return not any(tok in FORBIDDEN_NAME_TOKENS for tok in name.split())


class Vocabulary:
    """Entity and relation ids with their surface forms.

    Ids double as default surface forms; the two are kept distinct in
    the file format so graphs with opaque ids still round-trip.
    """

    def __init__(self, entities: dict[str, str], relations: dict[str, str]):
        self.entities = dict(entities)
        self.relations = dict(relations)
        self._check_surfaces()
        self.entity_of_surface = {v: k for k, v in self.entities.items()}
        self.relation_of_surface = {v: k for k, v in self.relations.items()}
        if len(self.entity_of_surface) != len(self.entities):
            raise LanguageError("duplicate entity surface forms")
        if len(self.relation_of_surface) != len(self.relations):
            raise LanguageError("duplicate relation surface forms")

    def _check_surfaces(self) -> None:
        for surface in list(self.entities.values()) + list(self.relations.values()):
            if not valid_name(surface):
                raise LanguageError(f"invalid surface form: {surface!r}")

    def entity_surface(self, entity_id: str) -> str:
        return self.entities[entity_id]

    def relation_surface(self, relation_id: str) -> str:
        return self.relations[relation_id]

    def save(self, path: str, config: dict | None = None, seed=None) -> None:
        lines = artifacts.header_lines(config or {}, seed)
        lines.append("# relations")
        for rid in sorted(self.relations):
            lines.append(f"{rid}\t{self.relations[rid]}")
        lines.append("# entities")
        for eid in sorted(self.entities):
            lines.append(f"{eid}\t{self.entities[eid]}")
        artifacts.write_text(path, lines)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        entities: dict[str, str] = {}
        relations: dict[str, str] = {}
        section = None
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.rstrip("\n")
                if line == "# relations":
                    section = relations
                    continue
                if line == "# entities":
                    section = entities
                    continue
                if artifacts.is_header_line(line) or not line:
                    continue
                if section is None or "\t" not in line:
                    raise LanguageError(f"malformed vocabulary line: {line!r}")
                key, surface = line.split("\t", 1)
                section[key] = surface
        return cls(entities, relations)


class _SurfaceIndex:
    """Surfaces grouped by first token, longest first, for greedy matching."""

    def __init__(self, surface_to_id: dict[str, str]):
        self.by_first: dict[str, list[tuple[str, str]]] = {}
        for surface, ident in surface_to_id.items():
            first = surface.split(" ", 1)[0]
            self.by_first.setdefault(first, []).append((surface, ident))
        for bucket in self.by_first.values():
            bucket.sort(key=lambda item: (-len(item[0]), item[0]))

    def prefix_matches(self, text: str) -> list[tuple[str, str]]:
        """(surface, id) pairs where text == surface or text starts with surface + ' '."""
        first = text.split(" ", 1)[0]
        out = []
        for surface, ident in self.by_first.get(first, ()):
            if text == surface or text.startswith(surface + " "):
                out.append((surface, ident))
        return out


class Language:
    """Renderer and parser bound to one vocabulary."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._entity_index = _SurfaceIndex(vocab.entity_of_surface)
        self._relation_index = _SurfaceIndex(vocab.relation_of_surface)

    # -- rendering ----------------------------------------------------

    def atom_text(self, atom: Atom) -> str:
        return " ".join(
            (
                self.vocab.entity_surface(atom.subject),
                self.vocab.relation_surface(atom.relation),
                self.vocab.entity_surface(atom.object),
            )
        )

    def body_text(self, body: Body) -> str:
        if isinstance(body, Atom):
            return f'"{self.atom_text(body)}"'
        if isinstance(body, Not):
            return f'not "{self.atom_text(body.atom)}"'
        if isinstance(body, And):
            return f'"{self.atom_text(body.left)}" and "{self.atom_text(body.right)}"'
        if isinstance(body, Or):
            return f'"{self.atom_text(body.left)}" or "{self.atom_text(body.right)}"'
        raise TypeError(f"not a body: {body!r}")

    def render(self, sentence: Sentence) -> str:
        if isinstance(sentence, Atomic):
            return self.atom_text(sentence.atom)
        if isinstance(sentence, Truth):
            label = "true" if sentence.label else "false"
            return f"{self.body_text(sentence.body)} is {label}"
        raise TypeError(f"not a sentence: {sentence!r}")

    def fact_prompt(self, subject: str, relation: str) -> str:
        """The completion prompt 'subject relation'."""
        return f"{self.vocab.entity_surface(subject)} {self.vocab.relation_surface(relation)}"

    def truth_prompt(self, body: Body) -> str:
        """The label prompt '<body> is'."""
        return f"{self.body_text(body)} is"

    def render_document(self, doc: Document) -> str:
        return " . ".join(self.render(s) for s in doc.sentences) + " ."

    # -- parsing ------------------------------------------------------

    def parse(self, text: str) -> Sentence:
        if text.endswith(TRUE_SUFFIX):
            return Truth(self._parse_body(text[: -len(TRUE_SUFFIX)]), True)
        if text.endswith(FALSE_SUFFIX):
            return Truth(self._parse_body(text[: -len(FALSE_SUFFIX)]), False)
        return Atomic(self.parse_atom(text))

    def parse_prompt(self, prompt: str) -> Body:
        """Parse a truth prompt of the form '<body> is'."""
        if not prompt.endswith(" is"):
            raise LanguageError("not a truth prompt", len(prompt))
        return self._parse_body(prompt[:-3])

    def parse_fact_prompt(self, prompt: str) -> tuple[str, str]:
        """Parse a completion prompt 'subject relation' into ids."""
        for s_surface, s_id in self._entity_index.prefix_matches(prompt):
            rest = prompt[len(s_surface) + 1 :]
            r_id = self.vocab.relation_of_surface.get(rest)
            if r_id is not None:
                return s_id, r_id
        raise LanguageError(f"cannot split fact prompt: {prompt!r}", 0)

    def _parse_body(self, text: str) -> Body:
        if text.startswith('not "'):
            inner = text[len("not ") :]
            atom, rest = self._take_quoted(inner, offset=len("not "))
            if rest:
                raise LanguageError("trailing text after negated claim", len(text) - len(rest))
            return Not(atom)
        if text.startswith('"'):
            left, rest = self._take_quoted(text, offset=0)
            if not rest:
                return left
            for word, ctor in ((" and ", And), (" or ", Or)):
                if rest.startswith(word):
                    right, tail = self._take_quoted(rest[len(word) :], offset=len(text) - len(rest) + len(word))
                    if tail:
                        raise LanguageError("trailing text after connective", len(text) - len(tail))
                    return ctor(left, right)
            raise LanguageError("expected 'and' or 'or'", len(text) - len(rest))
        raise LanguageError("expected quoted claim", 0)

    def _take_quoted(self, text: str, offset: int) -> tuple[Atom, str]:
        if not text.startswith('"'):
            raise LanguageError("expected opening quote", offset)
        close = text.find('"', 1)
        if close < 0:
            raise LanguageError("unterminated quote", offset + len(text))
        atom = self.parse_atom(text[1:close], offset=offset + 1)
        return atom, text[close + 1 :]

    def parse_atom(self, text: str, offset: int = 0) -> Atom:
        """Resolve 'subject relation object' against the vocabulary.

        Greedy longest match on the subject, then the relation, with
        backtracking: the object must consume the remainder exactly.
        """
        for s_surface, s_id in self._entity_index.prefix_matches(text):
            after_subject = text[len(s_surface) + 1 :]
            for r_surface, r_id in self._relation_index.prefix_matches(after_subject):
                obj_surface = after_subject[len(r_surface) + 1 :]
                o_id = self.vocab.entity_of_surface.get(obj_surface)
                if o_id is not None:
                    return Atom(s_id, r_id, o_id)
        first = text.split(" ", 1)[0]
        if first not in self._entity_index.by_first:
            raise LanguageError(f"unknown entity: {first!r}", offset)
        raise LanguageError(f"cannot split atom: {text!r}", offset)

    def split_document(self, line: str) -> list[str]:
        if not line.endswith(" ."):
            raise LanguageError("document must end with ' .'", len(line))
        return line[:-2].split(" . ")

    def parse_document(self, line: str) -> list[Sentence]:
        return [self.parse(part) for part in self.split_document(line)]


def token_count(text: str) -> int:
    """The tokenizer of record: whitespace tokens."""
    return len(text.split())


def evaluate_body(body: Body, atom_is_true) -> bool:
    """Truth value of a body given a predicate on atoms."""
    if isinstance(body, Atom):
        return atom_is_true(body)
    if isinstance(body, Not):
        return not atom_is_true(body.atom)
    if isinstance(body, And):
        return atom_is_true(body.left) and atom_is_true(body.right)
    if isinstance(body, Or):
        return atom_is_true(body.left) or atom_is_true(body.right)
    raise TypeError(f"not a body: {body!r}")
