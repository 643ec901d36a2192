"""Sampling the noisy pretraining corpus from a world model.

Each consumed fact contributes a block of 10 noisy atomic sentences
(rejection-sampled so at least 6 carry the modal object) plus 10
true/false sentences labeled in exact proportion to the samples.  Each
subject additionally gets logically complex and/or/not sentences with
truthful labels.  Sentences are shuffled per subject and chunked into
documents of at most 10.

Per-subject RNG streams are derived from (seed, subject), so output is
reproducible and independent of how many subjects precede.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

from . import artifacts
from .language import And, Atom, Atomic, Document, Language, Not, Or, Sentence, Truth, atoms_of
from .world import WorldModel

logger = logging.getLogger(__name__)

MAX_REJECTION_ATTEMPTS = 10_000


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class FactBlock:
    key: tuple[str, str]
    atomic_samples: tuple[Atom, ...]
    tf_sentences: tuple[Truth, ...]


@dataclass
class CorpusStats:
    true_atomic_facts: int = 0
    atomic_sentences: int = 0
    tf_sentences: int = 0
    connective_sentences: int = 0
    total_sentences: int = 0
    documents: int = 0
    tokens: int = 0
    subjects: int = 0
    relations: int = 0
    objects: int = 0

    def lines(self) -> list[str]:
        return [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "CorpusStats":
        values = {}
        for line in lines:
            if "=" in line:
                k, v = line.split("=", 1)
                values[k] = int(v)
        return cls(**{f.name: values[f.name] for f in fields(cls)})


def sample_object(world: WorldModel, subject: str, relation: str, rng: np.random.Generator) -> str:
    """One draw from the fact's generative distribution (conditional on
    the subject's ground-truth upstream property when it has one)."""
    return world.generative_dist(subject, relation).sample(rng)


def gen_fact_block(world: WorldModel, subject: str, relation: str, rng: np.random.Generator) -> FactBlock:
    """10 noisy samples with >= 6 modal objects, plus matched TF sentences.

    Sample i becomes '"s r o_i" is true' when o_i is the modal object
    and '"s r o_i" is false' otherwise, so true labels appear in exact
    proportion to the true samples.
    """
    dist = world.generative_dist(subject, relation)
    gt = dist.modal()[0]
    for _ in range(MAX_REJECTION_ATTEMPTS):
        samples = [dist.sample(rng) for _ in range(10)]
        if sum(1 for o in samples if o == gt) >= 6:
            break
    else:
        raise CorpusError(f"rejection sampling failed for ({subject}, {relation})")
    atoms = tuple(Atom(subject, relation, o) for o in samples)
    tf = tuple(Truth(a, a.object == gt) for a in atoms)
    return FactBlock((subject, relation), atoms, tf)


class PartnerSampler:
    """Draws partner atoms about other subjects, true or false 50/50."""

    def __init__(self, world: WorldModel):
        self.world = world
        self.keys = sorted(world.graph.by_key)

    def sample(self, rng: np.random.Generator, exclude_subject: str) -> tuple[Atom, bool]:
        for _ in range(1000):
            s, r = self.keys[int(rng.integers(len(self.keys)))]
            if s != exclude_subject:
                break
        else:
            raise CorpusError("no partner subject available")
        if rng.random() < 0.5:
            return Atom(s, r, self.world.ground_truth(s, r)), True
        return Atom(s, r, self.world.false_object(s, r, rng)), False


def gen_connective_sentences(
    world: WorldModel,
    subject: str,
    rng: np.random.Generator,
    partner_pool: PartnerSampler,
    count: int = 20,
) -> list[Sentence]:
    """A truthful mixture of and/or/not sentences about one subject.

    Negations use the ground-truth object ('not "s r o" is false') or a
    distractor ('not "s r o_false" is true').  And/or sentences borrow a
    partner atom about another subject that may be true or false; labels
    always follow the world's ground truth.
    """
    relations = sorted(r for s, r in world.graph.by_key if s == subject)
    if not relations:
        raise CorpusError(f"subject {subject} has no facts")
    kinds = ["and", "or", "not"] * (count // 3)
    kinds += [("and", "or", "not")[int(rng.integers(3))] for _ in range(count - len(kinds))]

    def own_atom(truthful: bool) -> Atom:
        rel = relations[int(rng.integers(len(relations)))]
        if truthful:
            return Atom(subject, rel, world.ground_truth(subject, rel))
        return Atom(subject, rel, world.false_object(subject, rel, rng))

    out: list[Sentence] = []
    for kind in kinds:
        if kind == "not":
            if rng.random() < 0.5:
                out.append(Truth(Not(own_atom(True)), False))
            else:
                out.append(Truth(Not(own_atom(False)), True))
            continue
        a_true = rng.random() < 0.5
        a = own_atom(a_true)
        b, b_true = partner_pool.sample(rng, exclude_subject=subject)
        left, right = (a, b) if rng.random() < 0.5 else (b, a)
        if kind == "and":
            out.append(Truth(And(left, right), a_true and b_true))
        else:
            out.append(Truth(Or(left, right), a_true or b_true))
    return out


def assemble_documents(
    sentences_by_subject: dict[str, list[Sentence]],
    rng_for_subject: Callable[[str], np.random.Generator],
    max_per_doc: int = 10,
) -> list[Document]:
    """Shuffle each subject's sentences and chunk into documents."""
    docs: list[Document] = []
    for subject in sentences_by_subject:
        rng = rng_for_subject(subject)
        sents = list(sentences_by_subject[subject])
        order = rng.permutation(len(sents))
        shuffled = [sents[int(i)] for i in order]
        for start in range(0, len(shuffled), max_per_doc):
            chunk = tuple(shuffled[start : start + max_per_doc])
            docs.append(Document(chunk, topic_subject=subject))
    return docs


@dataclass
class CorpusPaths:
    corpus: str
    stats: str
    vocab: str
    facts: str

    @classmethod
    def in_dir(cls, out_dir: str) -> "CorpusPaths":
        return cls(
            corpus=os.path.join(out_dir, "corpus.txt"),
            stats=os.path.join(out_dir, "stats.txt"),
            vocab=os.path.join(out_dir, "vocab.tsv"),
            facts=os.path.join(out_dir, "facts.tsv"),
        )


def emit_corpus(
    world: WorldModel,
    target_facts: int,
    seed: int,
    out_dir: str,
    connectives_per_subject: int = 20,
    max_per_doc: int = 10,
    config: dict | None = None,
) -> CorpusStats:
    """Sample subjects until target_facts facts are consumed and write
    corpus.txt, stats.txt, vocab.tsv, and the facts.tsv manifest."""
    all_keys = sorted(world.graph.by_key)
    if target_facts > len(all_keys):
        raise CorpusError(f"world has {len(all_keys)} facts, need {target_facts}")
    os.makedirs(out_dir, exist_ok=True)
    paths = CorpusPaths.in_dir(out_dir)
    cfg = dict(config or {})
    cfg.update(
        facts=target_facts,
        connectives_per_subject=connectives_per_subject,
        max_per_doc=max_per_doc,
    )

    language = Language(world.vocabulary())
    partner_pool = PartnerSampler(world)
    subjects = sorted(world.graph.subject_relations)
    master = np.random.default_rng(artifacts.stable_rng_seed(seed, "corpus-order"))
    order = [subjects[int(i)] for i in master.permutation(len(subjects))]

    def subject_rng(subject: str) -> np.random.Generator:
        return np.random.default_rng(artifacts.stable_rng_seed(seed, "corpus-subject", subject))

    stats = CorpusStats()
    consumed: list[tuple[str, str, str]] = []
    doc_lines: list[str] = []
    mentioned_objects: set[str] = set()
    mentioned_relations: set[str] = set()

    remaining = target_facts
    for subject in order:
        if remaining <= 0:
            break
        rng = subject_rng(subject)
        take = sorted(world.graph.subject_relations[subject])[:remaining]
        if not take:
            continue
        sentences: list[Sentence] = []
        for rel in take:
            block = gen_fact_block(world, subject, rel, rng)
            consumed.append((subject, rel, world.ground_truth(subject, rel)))
            sentences.extend(Atomic(a) for a in block.atomic_samples)
            sentences.extend(block.tf_sentences)
            stats.atomic_sentences += 10
            stats.tf_sentences += 10
            mentioned_relations.add(rel)
            mentioned_objects.update(a.object for a in block.atomic_samples)
        remaining -= len(take)
        stats.true_atomic_facts += len(take)
        connectives = gen_connective_sentences(
            world, subject, rng, partner_pool, count=connectives_per_subject
        )
        sentences.extend(connectives)
        stats.connective_sentences += len(connectives)
        for sent in connectives:
            for atom in atoms_of(sent):
                mentioned_relations.add(atom.relation)
                mentioned_objects.add(atom.object)
        stats.subjects += 1

        docs = assemble_documents({subject: sentences}, lambda _s: rng, max_per_doc=max_per_doc)
        for doc in docs:
            line = language.render_document(doc)
            doc_lines.append(line)
            stats.tokens += len(line.split())
        stats.documents += len(docs)

    stats.total_sentences = stats.atomic_sentences + stats.tf_sentences + stats.connective_sentences
    stats.relations = len(mentioned_relations)
    stats.objects = len(mentioned_objects)

    try:
        artifacts.write_text(paths.corpus, artifacts.header_lines(cfg, seed) + doc_lines)
        artifacts.write_text(paths.stats, artifacts.header_lines(cfg, seed) + stats.lines())
        language.vocab.save(paths.vocab, config=cfg, seed=seed)
        facts_lines = [f"{s}\t{r}\t{o}" for s, r, o in sorted(consumed)]
        artifacts.write_text(paths.facts, artifacts.header_lines(cfg, seed) + facts_lines)
    except BaseException:
        for path in (paths.corpus, paths.stats, paths.vocab, paths.facts):
            if os.path.exists(path):
                os.remove(path)
        raise
    return stats


def load_corpus_sentences(corpus_path: str, language: Language) -> list[Sentence]:
    """Parse every sentence of an emitted corpus file, document order."""
    sentences: list[Sentence] = []
    for line in artifacts.read_text(corpus_path):
        if line:
            sentences.extend(language.parse_document(line))
    return sentences


def load_facts_manifest(path: str) -> list[tuple[str, str, str]]:
    out = []
    for line in artifacts.read_text(path):
        if line:
            s, r, o = line.split("\t")
            out.append((s, r, o))
    return out


def load_stats(path: str) -> CorpusStats:
    return CorpusStats.from_lines(artifacts.read_text(path))
