"""Fit the Bayesian referee and revise its beliefs with weighted edits.

The referee is a set of Dirichlet-Categorical tables: per-fact counts
plus shared conditional tables for downstream relations, which are
marginalized over upstream values at query time. Edits are weighted
observations; n' is the smallest weight that lifts the edited fact's
posterior to 0.95, and snapshot/restore brackets leave the state
bit-identical.
"""

import tempfile

import numpy as np

from beliefbench.corpus import CorpusPaths, emit_corpus, load_corpus_sentences
from beliefbench.language import Atom, Language
from beliefbench.oracle import fit_oracle
from beliefbench.world import assign_dependencies, build_generative_model, filter_relations, synth_graph

graph = synth_graph(n_subjects=400, n_relations=6, n_objects=10, seed=4)
graph = filter_relations(graph, min_cooccur=5, top_k=10)
deps = assign_dependencies(graph)
world = build_generative_model(graph, deps, floor=0.6, seed=4)
language = Language(world.vocabulary())

out_dir = tempfile.mkdtemp(prefix="beliefbench-demo-")
emit_corpus(world, target_facts=300, seed=11, out_dir=out_dir)
sentences = load_corpus_sentences(CorpusPaths.in_dir(out_dir).corpus, language)
referee = fit_oracle(sentences, world.deps)
print(f"fitted {len(referee.basic)} fact tables and {len(referee.cond)} conditional tables "
      f"from {len(sentences)} sentences")

# -- posterior for a basic fact ------------------------------------------------
upstream_keys = [k for k in sorted(referee.basic) if referee.deps.downstream_of(k[1])]
subject, relation = upstream_keys[0]
dist = referee.posterior_basic(subject, relation)
print(f"\nposterior for ({subject}, {relation}):")
for obj, p in sorted(zip(dist.objects, dist.probs), key=lambda t: -t[1]):
    print(f"  p({obj}) = {p:.3f}")

# -- downstream marginalization ---------------------------------------------------
rd = referee.deps.downstream_of(relation)
if referee.is_routed(subject, rd):
    down = referee.posterior_downstream(subject, rd)
    top = sorted(zip(down.objects, down.probs), key=lambda t: -t[1])[:3]
    print(f"\nmarginalized downstream posterior for ({subject}, {rd}):")
    for obj, p in top:
        print(f"  p({obj}) = {p:.3f}")

# -- a weighted edit with the minimal 0.95 weight -----------------------------------
pool = [o for o in world.graph.objects_of_relation(relation) if o not in dist.objects]
requested = pool[0]
atom = Atom(subject, relation, requested)
n_prime = referee.min_weight_for(atom, threshold=0.95)
print(f"\nedit request: {language.atom_text(atom)}")
print(f"  pre-edit probability:  {referee.candidate_probability(subject, relation, requested):.4f}")
print(f"  minimal weight n' for a 0.95 posterior: {n_prime}")

token = referee.snapshot()
referee.apply_edit(atom, n_prime)
print(f"  post-edit probability: {referee.atom_probability(atom):.4f}")
if referee.is_routed(subject, rd):
    down_after = referee.posterior_downstream(subject, rd)
    moved = dict(zip(down_after.objects, down_after.probs))
    print(f"  downstream answer now: {max(moved, key=moved.get)!r}")
not_body = language.parse_prompt(f'not "{language.atom_text(atom)}" is')
print(f"  p(not-claim true):      {referee.body_probability(not_body):.4f} "
      f"= 1 - {referee.atom_probability(atom):.4f}")
referee.restore(token)
print(f"  restored: pre-edit probability again "
      f"{referee.candidate_probability(subject, relation, requested):.4f}")
