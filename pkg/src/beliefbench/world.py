"""Construction of the hypothetical world.

A world is a knowledge graph (1:1 facts over ten-or-fewer relations),
a map of upstream->downstream relation dependencies, and the ground
truth generative distributions used to sample the noisy corpus:

* facts with no upstream property draw from a two-point distribution
  over {graph object, fixed distractor}, graph object >= floor;
* facts whose subject also holds the paired upstream relation draw
  from the empirical conditional distribution of downstream objects
  given that upstream value, pooled over all subjects and renormalized
  so the modal object also clears the floor.

Graphs come either from a triple file (with the standard denylists
applied) or from the built-in synthesizer, which plants the same kind
of dependency structure so the full pipeline runs standalone.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import artifacts
from .language import Vocabulary, valid_name

logger = logging.getLogger(__name__)

DEFAULT_RELATION_DENYLIST = frozenset({"P735", "P131"})
DEFAULT_ENTITY_DENYLIST = frozenset({"Q16521", "Q5"})
MAX_PAIRING_RELATIONS = 12


class WorldError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Triple:
    subject: str
    relation: str
    object: str


class KnowledgeGraph:
    """Triples plus entity/relation inventories.

    (subject, relation) keys may be multi-valued until
    enforce_one_to_one has run.
    """

    def __init__(self, triples: Sequence[Triple], entities: dict[str, str] | None = None):
        self.triples = list(triples)
        self.by_key: dict[tuple[str, str], list[str]] = {}
        self.subject_relations: dict[str, set[str]] = {}
        relations: set[str] = set()
        for t in self.triples:
            self.by_key.setdefault((t.subject, t.relation), []).append(t.object)
            self.subject_relations.setdefault(t.subject, set()).add(t.relation)
            relations.add(t.relation)
        self.relations = sorted(relations)
        if entities is None:
            entities = {}
            for t in self.triples:
                entities.setdefault(t.subject, t.subject)
                entities.setdefault(t.object, t.object)
        self.entities = entities

    def __len__(self) -> int:
        return len(self.triples)

    def object_of(self, subject: str, relation: str) -> str:
        objs = self.by_key[(subject, relation)]
        if len(objs) != 1:
            raise WorldError(f"({subject}, {relation}) is not 1:1")
        return objs[0]

    def objects_of_relation(self, relation: str) -> list[str]:
        pool = {t.object for t in self.triples if t.relation == relation}
        return sorted(pool)

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(dict(self.entities), {r: r for r in self.relations})


@dataclass(frozen=True)
class DependencyMap:
    """Disjoint upstream->downstream relation pairs."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for ru, rd in self.pairs:
            if ru == rd or ru in seen or rd in seen:
                raise WorldError(f"dependency pairs must be disjoint: {self.pairs}")
            seen.update((ru, rd))

    def upstream_of(self, relation: str) -> Optional[str]:
        for ru, rd in self.pairs:
            if rd == relation:
                return ru
        return None

    def downstream_of(self, relation: str) -> Optional[str]:
        for ru, rd in self.pairs:
            if ru == relation:
                return rd
        return None


@dataclass(frozen=True)
class Distribution:
    """A categorical distribution over object ids, support sorted."""

    objects: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-9:
            raise WorldError(f"distribution sums to {total}, not 1")
        if any(p < 0 for p in self.probs):
            raise WorldError("negative probability")

    def prob_of(self, obj: str) -> float:
        try:
            return self.probs[self.objects.index(obj)]
        except ValueError:
            return 0.0

    def modal(self) -> tuple[str, float]:
        top = max(self.probs)
        for i, p in enumerate(self.probs):
            if p == top:
                return self.objects[i], p
        raise WorldError("empty distribution")

    def sample(self, rng: np.random.Generator) -> str:
        idx = rng.choice(len(self.objects), p=np.asarray(self.probs) / math.fsum(self.probs))
        return self.objects[int(idx)]


def _floored(counts: dict[str, float], floor: float) -> Distribution:
    """Normalize counts, then raise the modal probability to the floor,
    scaling the rest of the mass proportionally."""
    objects = tuple(sorted(counts))
    total = math.fsum(counts[o] for o in objects)
    probs = [counts[o] / total for o in objects]
    top = max(probs)
    modal_idx = probs.index(top)
    if top < floor and len(probs) > 1:
        scale = (1.0 - floor) / (1.0 - top)
        probs = [p * scale for p in probs]
        probs[modal_idx] = floor
    probs[modal_idx] += 1.0 - math.fsum(probs)  # absorb rounding residue
    return Distribution(objects, tuple(probs))


class WorldModel:
    """The finished world: immutable once built, safe to share."""

    def __init__(
        self,
        graph: KnowledgeGraph,
        deps: DependencyMap,
        base_dist: dict[tuple[str, str], Distribution],
        cond_dist: dict[tuple[str, str, str], Distribution],
        floor: float,
    ):
        self.graph = graph
        self.deps = deps
        self.base_dist = base_dist
        self.cond_dist = cond_dist
        self.floor = floor

    def facts(self) -> list[tuple[str, str]]:
        return sorted(self.by_key_keys())

    def by_key_keys(self):
        return self.graph.by_key.keys()

    def has_upstream(self, subject: str, relation: str) -> bool:
        ru = self.deps.upstream_of(relation)
        return ru is not None and (subject, ru) in self.graph.by_key

    def generative_dist(self, subject: str, relation: str) -> Distribution:
        if (subject, relation) not in self.graph.by_key:
            raise WorldError(f"unknown fact key ({subject}, {relation})")
        if self.has_upstream(subject, relation):
            ru = self.deps.upstream_of(relation)
            o_u = self.graph.object_of(subject, ru)
            return self.cond_dist[(relation, ru, o_u)]
        return self.base_dist[(subject, relation)]

    def ground_truth(self, subject: str, relation: str) -> str:
        return self.generative_dist(subject, relation).modal()[0]

    def false_object(self, subject: str, relation: str, rng: np.random.Generator) -> str:
        """An object known to be wrong for (subject, relation)."""
        dist = self.generative_dist(subject, relation)
        gt = dist.modal()[0]
        others = [o for o in dist.objects if o != gt]
        if not others:
            others = [o for o in self.graph.objects_of_relation(relation) if o != gt]
        if not others:
            raise WorldError(f"no distractor available for ({subject}, {relation})")
        return others[int(rng.integers(len(others)))]

    def upstream_fraction(self) -> float:
        keys = list(self.graph.by_key)
        flagged = sum(1 for s, r in keys if self.has_upstream(s, r))
        return flagged / len(keys) if keys else 0.0

    def vocabulary(self) -> Vocabulary:
        return self.graph.vocabulary()

    # -- persistence ----------------------------------------------------

    def save(self, path: str, config: dict | None = None, seed=None) -> None:
        payload = {
            "header": artifacts.header_dict(config or {}, seed, fmt="beliefbench-world/1"),
            "entities": self.graph.entities,
            "relations": self.graph.relations,
            "triples": sorted([t.subject, t.relation, t.object] for t in self.graph.triples),
            "deps": [list(p) for p in self.deps.pairs],
            "floor": self.floor,
            "base": sorted(
                [s, r, list(d.objects), list(d.probs)] for (s, r), d in self.base_dist.items()
            ),
            "cond": sorted(
                [rd, ru, ou, list(d.objects), list(d.probs)]
                for (rd, ru, ou), d in self.cond_dist.items()
            ),
        }
        artifacts.write_json(path, payload)

    @classmethod
    def load(cls, path: str) -> "WorldModel":
        payload = artifacts.read_json(path)
        if payload.get("header", {}).get("format") != "beliefbench-world/1":
            raise WorldError(f"not a world archive: {path}")
        graph = KnowledgeGraph(
            [Triple(s, r, o) for s, r, o in payload["triples"]],
            entities=payload["entities"],
        )
        deps = DependencyMap(tuple((ru, rd) for ru, rd in payload["deps"]))
        base = {
            (s, r): Distribution(tuple(objs), tuple(probs))
            for s, r, objs, probs in payload["base"]
        }
        cond = {
            (rd, ru, ou): Distribution(tuple(objs), tuple(probs))
            for rd, ru, ou, objs, probs in payload["cond"]
        }
        return cls(graph, deps, base, cond, payload["floor"])


# -- ingestion ----------------------------------------------------------


def ingest_triples(
    records: Iterable[str],
    limit: int | None = None,
    relation_denylist: frozenset[str] = DEFAULT_RELATION_DENYLIST,
    entity_denylist: frozenset[str] = DEFAULT_ENTITY_DENYLIST,
) -> KnowledgeGraph:
    """Read subject/relation/object rows (tab- or comma-separated).

    Malformed rows are skipped with a warning; denylisted relations and
    entities are dropped.  At most `limit` rows are read.
    """
    triples: list[Triple] = []
    rows_read = 0
    for raw in records:
        if limit is not None and rows_read >= limit:
            break
        rows_read += 1
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t") if "\t" in line else line.split(",")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            logger.warning("skipping malformed triple row: %r", line)
            continue
        s, r, o = (p.strip() for p in parts)
        if not all(valid_name(x) for x in (s, r, o)):
            logger.warning("skipping row with unusable name: %r", line)
            continue
        if r in relation_denylist or s in entity_denylist or o in entity_denylist:
            continue
        triples.append(Triple(s, r, o))
    if rows_read > 0 and not triples:
        raise WorldError("no usable triples")
    return KnowledgeGraph(triples)


# -- relation filtering --------------------------------------------------


def cooccurrence_counts(graph: KnowledgeGraph) -> tuple[list[str], np.ndarray]:
    """Pairwise counts of subjects holding both relations; zero diagonal."""
    relations = sorted(graph.relations)
    index = {r: i for i, r in enumerate(relations)}
    counts = np.zeros((len(relations), len(relations)), dtype=float)
    for rels in graph.subject_relations.values():
        held = sorted(index[r] for r in rels)
        for i, j in itertools.combinations(held, 2):
            counts[i, j] += 1
            counts[j, i] += 1
    return relations, counts


def filter_relations(graph: KnowledgeGraph, min_cooccur: int = 1000, top_k: int = 10) -> KnowledgeGraph:
    """Keep relations that co-occur with some other relation at least
    min_cooccur times, ranked by total co-occurrence, top_k of them."""
    if not graph.triples:
        raise WorldError("graph is empty")
    relations, counts = cooccurrence_counts(graph)
    qualifying = [
        r for i, r in enumerate(relations) if counts[i].max(initial=0.0) >= min_cooccur
    ]
    ranked = sorted(
        qualifying,
        key=lambda r: (-counts[relations.index(r)].sum(), r),
    )
    kept = set(ranked[:top_k])
    if len(kept) < 2:
        raise WorldError("world too sparse")
    survivors = [t for t in graph.triples if t.relation in kept]
    return KnowledgeGraph(survivors, entities=graph.entities)


def enforce_one_to_one(graph: KnowledgeGraph, seed: int = 0) -> KnowledgeGraph:
    """Collapse every multi-valued (subject, relation) to one object,
    chosen deterministically from the seed."""
    rng = np.random.default_rng(artifacts.stable_rng_seed(seed, "one-to-one"))
    triples = []
    for key in sorted(graph.by_key):
        objs = sorted(set(graph.by_key[key]))
        pick = objs[int(rng.integers(len(objs)))] if len(objs) > 1 else objs[0]
        triples.append(Triple(key[0], key[1], pick))
    return KnowledgeGraph(triples, entities=graph.entities)


# -- dependency assignment ------------------------------------------------


def ipf_normalize(counts: np.ndarray, rounds: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Iterative proportional fitting toward a doubly stochastic matrix."""
    m = counts.astype(float).copy()
    for _ in range(rounds):
        row = m.sum(axis=1, keepdims=True)
        m = np.divide(m, row, out=np.zeros_like(m), where=row > 0)
        col = m.sum(axis=0, keepdims=True)
        m = np.divide(m, col, out=np.zeros_like(m), where=col > 0)
        err = max(np.abs(m.sum(axis=1) - 1).max(), np.abs(m.sum(axis=0) - 1).max())
        if err < tol:
            break
    return m


def best_pairing(weights: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-total-weight set of disjoint index pairs (self-pairs
    forbidden), by exhaustive search over all partial matchings.

    Pair weight is weights[i,j] + weights[j,i]; totals use fsum so ties
    are exact, and ties break toward the lexicographically smallest
    pair list.
    """
    n = weights.shape[0]
    if n > MAX_PAIRING_RELATIONS:
        raise WorldError(f"pairing supports at most {MAX_PAIRING_RELATIONS} relations, got {n}")
    best: tuple[float, tuple[tuple[int, int], ...]] | None = None

    def visit(lowest: int, used: int, pairs: tuple[tuple[int, int], ...]):
        nonlocal best
        i = lowest
        while i < n and (used >> i) & 1:
            i += 1
        if i >= n:
            total = math.fsum(weights[a, b] + weights[b, a] for a, b in pairs)
            key = (-total, pairs)
            if best is None or key < (-best[0], best[1]):
                best = (total, pairs)
            return
        visit(i + 1, used | (1 << i), pairs)  # leave i unpaired
        for j in range(i + 1, n):
            if not (used >> j) & 1:
                visit(i + 1, used | (1 << i) | (1 << j), pairs + ((i, j),))

    visit(0, 0, ())
    assert best is not None
    return [p for p in best[1]]


def assign_dependencies(graph: KnowledgeGraph) -> DependencyMap:
    """Pair relations by maximum co-occurrence weight on the
    doubly-stochastic normalized matrix, then orient each pair:
    upstream = the relation with more distinct objects (tie:
    lexicographically smaller id)."""
    relations, counts = cooccurrence_counts(graph)
    if counts.sum() == 0:
        raise WorldError("no co-occurrence structure")
    normalized = ipf_normalize(counts)
    idx_pairs = best_pairing(normalized)
    pool_size = {r: len(graph.objects_of_relation(r)) for r in relations}
    oriented = []
    for i, j in idx_pairs:
        a, b = relations[i], relations[j]
        if pool_size[a] > pool_size[b] or (pool_size[a] == pool_size[b] and a < b):
            ru, rd = a, b
        else:
            ru, rd = b, a
        oriented.append((ru, rd))
    oriented.sort()
    return DependencyMap(tuple(oriented))


# -- synthetic graphs ------------------------------------------------------

_FIRST_NAMES = (
    "amber ada alma avery bela boris carla cyrus dana dmitri edie felix gwen hana ivo "
    "jonas kiri lena marco nadia otto priya quinn rosa stefan tao uma viktor wanda yuri "
    "zelda arlo bridget caleb delia emrys farida gideon helga idris"
).split()

_LAST_NAMES = (
    "stone river marsh vale thorn cliff ash brook frost reed hale moor finch crane heath "
    "lark dune birch wren slate fenn gale holt kemp lund moss nash penn root sage tarn "
    "vost wilde yarrow zeller quill orr ives ebner dray"
).split()

_ADJECTIVES = (
    "amber azure bronze coral crimson dusky emerald fallow gilded hollow indigo jade keen "
    "lunar mossy noble ochre pale quartz russet silver tawny umber velvet western young "
    "zephyr ancient bright calm deep eager fabled grand humble iron"
).split()

_OBJECT_THEMES = (
    "academy institute guild league chorus circle forum lodge society union "
    "workshop order troupe assembly syndicate council"
).split()

_RELATION_NAMES = (
    "studied at",
    "works as",
    "born in",
    "lives near",
    "plays for",
    "speaks in",
    "trained with",
    "writes about",
    "presides over",
    "belongs to",
    "reports to",
    "competes in",
    "teaches at",
    "serves under",
    "travels from",
    "collects from",
)


@dataclass(frozen=True)
class CooccurProfile:
    """Knobs coupling paired relations in synthetic graphs.

    Defaults give roughly 20% of facts an upstream property, matching
    the target world shape.
    """

    p_upstream: float = 0.6
    p_downstream_given_upstream: float = 0.35
    p_downstream_alone: float = 0.3
    coupling: float = 0.75
    n_coupled_pairs: int | None = None  # None = as many as fit


def synth_graph(
    n_subjects: int,
    n_relations: int,
    n_objects: int,
    cooccur_profile: CooccurProfile | None = None,
    seed: int = 0,
) -> KnowledgeGraph:
    """Generate a 1:1 knowledge graph with planted upstream/downstream
    dependency structure, deterministic in the seed."""
    if n_relations < 2:
        raise WorldError("need at least 2 relations")
    if n_relations > len(_RELATION_NAMES):
        raise WorldError(f"at most {len(_RELATION_NAMES)} synthetic relations supported")
    if n_objects < 2:
        raise WorldError("need at least 2 objects per relation for distractors")
    if n_objects > len(_ADJECTIVES):
        raise WorldError(f"at most {len(_ADJECTIVES)} objects per relation supported")
    profile = cooccur_profile or CooccurProfile()
    rng = np.random.default_rng(artifacts.stable_rng_seed(seed, "synth-graph"))

    relations = list(_RELATION_NAMES[:n_relations])
    pools = {
        rel: [f"{_ADJECTIVES[k]} {_OBJECT_THEMES[i % len(_OBJECT_THEMES)]}" for k in range(n_objects)]
        for i, rel in enumerate(relations)
    }

    capacity = len(_FIRST_NAMES) * len(_LAST_NAMES)
    if n_subjects > capacity:
        raise WorldError(f"at most {capacity} synthetic subjects supported")
    order = rng.permutation(capacity)[:n_subjects]
    subjects = [
        f"{_FIRST_NAMES[k // len(_LAST_NAMES)]} {_LAST_NAMES[k % len(_LAST_NAMES)]}"
        for k in sorted(int(v) for v in order)
    ]

    n_pairs = n_relations // 2
    if profile.n_coupled_pairs is not None:
        n_pairs = min(n_pairs, profile.n_coupled_pairs)
    planted = [(relations[2 * i], relations[2 * i + 1]) for i in range(n_pairs)]
    # one preferred downstream value per upstream value
    value_map = {
        (ru, rd): {u: pools[rd][int(rng.integers(n_objects))] for u in pools[ru]}
        for ru, rd in planted
    }

    triples: list[Triple] = []
    for subj in subjects:
        for ru, rd in planted:
            has_u = rng.random() < profile.p_upstream
            o_u = None
            if has_u:
                o_u = pools[ru][int(rng.integers(n_objects))]
                triples.append(Triple(subj, ru, o_u))
            p_d = profile.p_downstream_given_upstream if has_u else profile.p_downstream_alone
            if rng.random() < p_d:
                if o_u is not None and rng.random() < profile.coupling:
                    o_d = value_map[(ru, rd)][o_u]
                else:
                    o_d = pools[rd][int(rng.integers(n_objects))]
                triples.append(Triple(subj, rd, o_d))
        for rel in relations[2 * n_pairs :]:
            if rng.random() < 0.5:
                triples.append(Triple(subj, rel, pools[rel][int(rng.integers(n_objects))]))
    if not triples:
        raise WorldError("synthetic parameters produced an empty graph")
    return KnowledgeGraph(triples)


# -- generative model -------------------------------------------------------


def build_generative_model(
    graph: KnowledgeGraph,
    deps: DependencyMap,
    floor: float = 0.6,
    seed: int = 0,
) -> WorldModel:
    """Attach ground truth distributions to every fact in the graph."""
    if not 0.5 < floor <= 1.0:
        raise WorldError(f"floor must be in (0.5, 1], got {floor}")
    for ru, rd in deps.pairs:
        if ru not in graph.relations or rd not in graph.relations:
            raise WorldError(f"dependency ({ru}, {rd}) references unknown relation")

    pools = {r: graph.objects_of_relation(r) for r in graph.relations}

    cond: dict[tuple[str, str, str], Distribution] = {}
    for ru, rd in deps.pairs:
        grouped: dict[str, dict[str, float]] = {}
        for subj, rels in sorted(graph.subject_relations.items()):
            if ru in rels and rd in rels:
                o_u = graph.object_of(subj, ru)
                o_d = graph.object_of(subj, rd)
                grouped.setdefault(o_u, {}).setdefault(o_d, 0.0)
                grouped[o_u][o_d] += 1.0
        for o_u, counts in grouped.items():
            cond[(rd, ru, o_u)] = _floored(counts, floor)

    base: dict[tuple[str, str], Distribution] = {}
    for subj, rel in sorted(graph.by_key):
        ru = deps.upstream_of(rel)
        if ru is not None and (subj, ru) in graph.by_key:
            continue  # conditioned facts sample from the shared tables
        gt = graph.object_of(subj, rel)
        candidates = [o for o in pools[rel] if o != gt]
        if not candidates:
            raise WorldError(f"relation {rel} has a single object; no distractor for ({subj}, {rel})")
        rng = np.random.default_rng(artifacts.stable_rng_seed(seed, "base-dist", subj, rel))
        distractor = candidates[int(rng.integers(len(candidates)))]
        p_gt = float(rng.uniform(floor, 1.0))
        objs = tuple(sorted((gt, distractor)))
        probs = tuple(p_gt if o == gt else 1.0 - p_gt for o in objs)
        base[(subj, rel)] = Distribution(objs, probs)

    model = WorldModel(graph, deps, base, cond, floor)
    _validate_model(model)
    return model


def _validate_model(model: WorldModel) -> None:
    for dist in list(model.base_dist.values()) + list(model.cond_dist.values()):
        total = math.fsum(dist.probs)
        if abs(total - 1.0) > 1e-9:
            raise WorldError(f"distribution sums to {total}")
        if dist.modal()[1] < model.floor - 1e-12:
            raise WorldError("modal probability below floor")
    for s, r in model.graph.by_key:
        if not model.has_upstream(s, r) and len(model.base_dist[(s, r)].objects) != 2:
            raise WorldError("base distribution must have exactly 2 support objects")
