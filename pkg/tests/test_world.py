"""World construction tests, with independent brute-force oracles for
co-occurrence counting and dependency pairing."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefbench import world as w
from beliefbench.world import (
    CooccurProfile,
    DependencyMap,
    KnowledgeGraph,
    Triple,
    WorldError,
    assign_dependencies,
    best_pairing,
    build_generative_model,
    enforce_one_to_one,
    filter_relations,
    ingest_triples,
    ipf_normalize,
    synth_graph,
)


# -- ingestion ----------------------------------------------------------


def test_ingest_empty_stream():
    graph = ingest_triples([])
    assert len(graph) == 0


def test_ingest_denylist_drops_rows():
    rows = [
        "alice\tborn in\tparis",
        "alice\tP735\talicia",  # denylisted relation
        "bob\tborn in\tlyon",
        "carol\tworks as\tbaker",
        "dave\tworks as\tsmith",
        "erin\tborn in\tnice",
    ]
    graph = ingest_triples(rows)
    assert len(graph) == 5
    assert "P735" not in graph.relations


def test_ingest_limit_reads_first_rows_only():
    rows = [f"s{i}\tr\to{i}" for i in range(10)]
    graph = ingest_triples(rows, limit=4)
    assert len(graph) == 4
    assert {t.subject for t in graph.triples} == {"s0", "s1", "s2", "s3"}


def test_ingest_malformed_rows_skipped_not_fatal(caplog):
    rows = ["only two\tfields", "alice\tr\tparis", "b,c,d", ""]
    graph = ingest_triples(rows)
    assert len(graph) == 2  # tab row and comma row both usable


def test_ingest_all_rows_unusable_errors():
    with pytest.raises(WorldError, match="no usable triples"):
        ingest_triples(["garbage row without separators"])


def test_ingest_comma_separated():
    graph = ingest_triples(["alice,born in,paris"])
    assert graph.triples[0] == Triple("alice", "born in", "paris")


# -- relation filtering ---------------------------------------------------


def _brute_force_cooccur(triples):
    """Independent recount: subjects holding each unordered relation pair."""
    held = {}
    for t in triples:
        held.setdefault(t.subject, set()).add(t.relation)
    counts = {}
    for rels in held.values():
        for a, b in itertools.combinations(sorted(rels), 2):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts


def test_filter_removes_never_cooccurring_relation():
    rows = []
    for i in range(3):
        rows += [Triple(f"s{i}", "ra", f"x{i}"), Triple(f"s{i}", "rb", f"y{i}")]
    rows.append(Triple("lonely", "rX", "z"))
    graph = KnowledgeGraph(rows)
    filtered = filter_relations(graph, min_cooccur=2, top_k=10)
    assert "rX" not in filtered.relations
    assert set(filtered.relations) == {"ra", "rb"}


def test_filter_top_k_ranking():
    triples = []
    # 12 relations; relation ri co-occurs with r0 on i subjects
    for i in range(1, 12):
        for k in range(i):
            subj = f"s{i}-{k}"
            triples += [Triple(subj, "r00", "o"), Triple(subj, f"r{i:02d}", "o")]
    graph = KnowledgeGraph(triples)
    filtered = filter_relations(graph, min_cooccur=1, top_k=10)
    assert len(filtered.relations) == 10
    assert "r01" not in filtered.relations  # lowest total co-occurrence dropped


def test_filter_matches_brute_force_on_synthetic_graph():
    rng = np.random.default_rng(3)
    triples = []
    for s in range(30):
        for r in ("ra", "rb", "rc"):
            if rng.random() < 0.5:
                triples.append(Triple(f"s{s}", r, f"o{rng.integers(4)}"))
    graph = KnowledgeGraph(triples)
    counts = _brute_force_cooccur(triples)
    expected = set()
    for rel in graph.relations:
        best = max(
            (c for (a, b), c in counts.items() if rel in (a, b)),
            default=0,
        )
        if best >= 2:
            expected.add(rel)
    if len(expected) >= 2:
        filtered = filter_relations(graph, min_cooccur=2, top_k=10)
        assert set(filtered.relations) == expected


def test_filter_too_sparse_errors():
    graph = KnowledgeGraph([Triple("a", "r1", "x"), Triple("b", "r2", "y")])
    with pytest.raises(WorldError, match="too sparse"):
        filter_relations(graph, min_cooccur=1, top_k=10)


# -- 1:1 enforcement ---------------------------------------------------------


def test_one_to_one_keeps_singletons():
    graph = KnowledgeGraph([Triple("a", "r", "x")])
    out = enforce_one_to_one(graph, seed=5)
    assert out.triples == [Triple("a", "r", "x")]


def test_one_to_one_deterministic():
    triples = [Triple("a", "r", o) for o in ("x", "y", "z")]
    graph = KnowledgeGraph(triples)
    pick1 = enforce_one_to_one(graph, seed=9).triples
    pick2 = enforce_one_to_one(graph, seed=9).triples
    assert pick1 == pick2
    assert len(pick1) == 1


def test_one_to_one_count_equals_keys():
    rng = np.random.default_rng(0)
    triples = []
    for i in range(5):
        for _ in range(int(rng.integers(2, 5))):
            triples.append(Triple(f"s{i}", "r", f"o{rng.integers(6)}"))
    graph = KnowledgeGraph(triples)
    out = enforce_one_to_one(graph, seed=1)
    assert len(out.triples) == len(out.by_key) == 5


# -- dependency assignment ------------------------------------------------------


def _oracle_best_pairing(weights):
    """Independent exhaustive enumerator over all sets of disjoint pairs."""
    n = weights.shape[0]
    indices = list(range(n))
    best = None

    def all_pairings(avail):
        if not avail:
            yield ()
            return
        first = avail[0]
        rest = avail[1:]
        yield from all_pairings(rest)  # leave first unpaired
        for j, other in enumerate(rest):
            for tail in all_pairings(rest[:j] + rest[j + 1 :]):
                yield ((first, other),) + tail

    for pairing in all_pairings(indices):
        pairs = tuple(sorted(pairing))
        total = math.fsum(weights[i, j] + weights[j, i] for i, j in pairs)
        key = (-total, pairs)
        if best is None or key < best:
            best = key
    return [list(p) for p in best[1]]


def test_pairing_2x2_worked_example():
    m = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert best_pairing(m) == [(0, 1)]
    assert _oracle_best_pairing(m) == [[0, 1]]


def test_pairing_uniform_matrix_lexicographic():
    m = np.ones((6, 6))
    np.fill_diagonal(m, 0.0)
    assert best_pairing(m) == [(0, 1), (2, 3), (4, 5)]


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_pairing_matches_enumeration(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.random((n, n))
    np.fill_diagonal(m, 0.0)
    got = [list(p) for p in best_pairing(m)]
    assert got == _oracle_best_pairing(m)


def test_assign_dependencies_all_zero_matrix_errors():
    graph = KnowledgeGraph([Triple("a", "r1", "x"), Triple("b", "r2", "y")])
    with pytest.raises(WorldError, match="no co-occurrence"):
        assign_dependencies(graph)


def test_assign_dependencies_orientation_by_object_richness():
    # rich has 4 distinct objects, coarse has 1; they co-occur heavily
    triples = []
    for i in range(8):
        triples.append(Triple(f"s{i}", "rich", f"o{i % 4}"))
        triples.append(Triple(f"s{i}", "coarse", "only"))
    deps = assign_dependencies(KnowledgeGraph(triples))
    assert deps.pairs == (("rich", "coarse"),)


def test_ipf_rows_and_columns_sum_to_one():
    rng = np.random.default_rng(4)
    m = rng.random((5, 5)) + 0.1
    np.fill_diagonal(m, 0.0)
    out = ipf_normalize(m)
    assert np.allclose(out.sum(axis=0), 1.0, atol=1e-6)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


def test_dependency_map_rejects_overlap():
    with pytest.raises(WorldError):
        DependencyMap((("a", "b"), ("b", "c")))


# -- synthetic graphs -------------------------------------------------------------


def test_synth_deterministic():
    g1 = synth_graph(50, 4, 6, seed=1)
    g2 = synth_graph(50, 4, 6, seed=1)
    assert g1.triples == g2.triples
    assert synth_graph(50, 4, 6, seed=2).triples != g1.triples


def test_synth_cardinality_and_one_to_one():
    graph = synth_graph(100, 4, 6, seed=3)
    assert len(graph) <= 400
    assert all(len(objs) == 1 for objs in graph.by_key.values())


def test_synth_recovers_planted_pairs():
    graph = synth_graph(400, 4, 8, CooccurProfile(coupling=0.9), seed=5)
    deps = assign_dependencies(graph)
    planted = {("studied at", "works as"), ("born in", "lives near")}
    assert planted & {tuple(p) for p in deps.pairs} or any(
        (b, a) in planted for a, b in deps.pairs
    )
    assert len(deps.pairs) >= 1


def test_synth_validates_parameters():
    with pytest.raises(WorldError):
        synth_graph(10, 1, 5, seed=0)
    with pytest.raises(WorldError):
        synth_graph(10, 4, 1, seed=0)


# -- generative model ----------------------------------------------------------------


def _tiny_world(seed=0):
    graph = synth_graph(300, 4, 6, seed=seed)
    graph = filter_relations(graph, min_cooccur=1, top_k=10)
    deps = assign_dependencies(graph)
    return build_generative_model(graph, deps, floor=0.6, seed=seed)


def test_floor_rescale_worked_example():
    dist = w._floored({"a": 0.5, "b": 0.3, "c": 0.2}, floor=0.6)
    by_obj = dict(zip(dist.objects, dist.probs))
    assert by_obj["a"] == pytest.approx(0.6, abs=1e-12)
    assert by_obj["b"] == pytest.approx(0.24, abs=1e-12)
    assert by_obj["c"] == pytest.approx(0.16, abs=1e-12)
    assert math.fsum(dist.probs) == pytest.approx(1.0, abs=1e-12)


def test_floor_noop_when_modal_already_high():
    dist = w._floored({"a": 0.9, "b": 0.1}, floor=0.6)
    assert dict(zip(dist.objects, dist.probs))["a"] == pytest.approx(0.9, abs=1e-12)


def test_floor_validation():
    graph = synth_graph(50, 2, 4, seed=0)
    deps = DependencyMap(())
    for bad in (0.5, 0.4, 1.5, 0.0):
        with pytest.raises(WorldError):
            build_generative_model(graph, deps, floor=bad, seed=0)


def test_model_invariants():
    model = _tiny_world()
    for dist in list(model.base_dist.values()) + list(model.cond_dist.values()):
        assert math.fsum(dist.probs) == pytest.approx(1.0, abs=1e-9)
        assert dist.modal()[1] >= model.floor - 1e-12
    for (s, r), dist in model.base_dist.items():
        assert len(dist.objects) == 2
        gt = model.graph.object_of(s, r)
        assert gt in dist.objects
        assert dist.prob_of(gt) >= model.floor


def test_distractor_never_equals_ground_truth():
    model = _tiny_world()
    for (s, r), dist in model.base_dist.items():
        gt = model.graph.object_of(s, r)
        others = [o for o in dist.objects if o != gt]
        assert len(others) == 1 and others[0] != gt


def test_upstream_fraction_matches_recount():
    model = _tiny_world()
    flagged = 0
    for s, r in model.graph.by_key:
        ru = model.deps.upstream_of(r)
        if ru is not None and (s, ru) in model.graph.by_key:
            flagged += 1
    assert model.upstream_fraction() == pytest.approx(flagged / len(model.graph.by_key))
    assert 0.05 < model.upstream_fraction() < 0.5  # near the 20% target shape


def test_world_save_load_roundtrip(tmp_path):
    model = _tiny_world()
    path = str(tmp_path / "world.json.gz")
    model.save(path, config={"seed": 0}, seed=0)
    loaded = type(model).load(path)
    assert loaded.base_dist == model.base_dist
    assert loaded.cond_dist == model.cond_dist
    assert loaded.deps == model.deps
    assert sorted(loaded.graph.triples) != []  # triples survive
    assert {t for t in loaded.graph.triples} == {t for t in model.graph.triples}
