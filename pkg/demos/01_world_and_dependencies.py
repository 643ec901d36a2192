"""Build a hypothetical world and inspect its dependency structure.

Walks through the world-construction pipeline on a synthetic graph:
relation filtering by co-occurrence, 1:1 enforcement, dependency
pairing on the normalized co-occurrence matrix, and the ground-truth
generative distributions with their 0.6 probability floor.
"""

import numpy as np

from beliefbench.world import (
    assign_dependencies,
    build_generative_model,
    cooccurrence_counts,
    enforce_one_to_one,
    filter_relations,
    ipf_normalize,
    synth_graph,
)

# A small world: 400 subjects, 6 relations (three planted dependency
# pairs), 10 objects per relation.
graph = synth_graph(n_subjects=400, n_relations=6, n_objects=10, seed=4)
print(f"raw graph: {len(graph)} triples, relations: {graph.relations}")

graph = filter_relations(graph, min_cooccur=5, top_k=10)
graph = enforce_one_to_one(graph, seed=4)
print(f"after filtering + 1:1: {len(graph)} facts")

relations, counts = cooccurrence_counts(graph)
normalized = ipf_normalize(counts)
print("\nnormalized co-occurrence matrix (rows/cols sum to 1):")
with np.printoptions(precision=2, suppress=True):
    print(normalized)

deps = assign_dependencies(graph)
print("\ndependency pairs (upstream -> downstream):")
for ru, rd in deps.pairs:
    print(f"  {ru}  ->  {rd}")

world = build_generative_model(graph, deps, floor=0.6, seed=4)
print(f"\nupstream-conditioned fraction of facts: {world.upstream_fraction():.2%}")

# A basic fact draws from {ground truth, distractor}:
subject, relation = next(iter(sorted(world.base_dist)))
dist = world.base_dist[(subject, relation)]
print(f"\nbasic fact: {subject} / {relation}")
for obj, p in zip(dist.objects, dist.probs):
    print(f"  p({obj}) = {p:.3f}")

# A conditioned fact draws from the shared conditional table for its
# subject's upstream value:
conditioned = [k for k in sorted(world.graph.by_key) if world.has_upstream(*k)]
subject, relation = conditioned[0]
ru = world.deps.upstream_of(relation)
o_u = world.graph.object_of(subject, ru)
dist = world.generative_dist(subject, relation)
print(f"\nconditioned fact: {subject} / {relation}  (upstream: {ru} = {o_u})")
for obj, p in sorted(zip(dist.objects, dist.probs), key=lambda t: -t[1])[:4]:
    print(f"  p({obj}) = {p:.3f}")
print(f"ground truth (modal object): {world.ground_truth(subject, relation)}")
