"""Sample the noisy pretraining corpus and check its statistics.

Shows a fact block (10 noisy samples, at least 6 of them the modal
object, with matched true/false sentences), the truthful connective
sentences, and a full corpus emission whose statistics are exact
recounts of the emitted file.
"""

import os
import tempfile

import numpy as np

from beliefbench.corpus import PartnerSampler, emit_corpus, gen_connective_sentences, gen_fact_block
from beliefbench.language import Language
from beliefbench.world import assign_dependencies, build_generative_model, filter_relations, synth_graph

graph = synth_graph(n_subjects=400, n_relations=6, n_objects=10, seed=4)
graph = filter_relations(graph, min_cooccur=5, top_k=10)
deps = assign_dependencies(graph)
world = build_generative_model(graph, deps, floor=0.6, seed=4)
language = Language(world.vocabulary())
rng = np.random.default_rng(0)

# -- one fact block ---------------------------------------------------------
subject, relation = sorted(world.graph.by_key)[0]
block = gen_fact_block(world, subject, relation, rng)
gt = world.ground_truth(subject, relation)
n_true = sum(1 for a in block.atomic_samples if a.object == gt)
print(f"fact block for ({subject}, {relation}), ground truth = {gt!r}")
print(f"  {n_true}/10 samples carry the ground truth (always >= 6)")
for tf in block.tf_sentences[:3]:
    print("  " + language.render(tf))

# -- connective sentences -----------------------------------------------------
partners = PartnerSampler(world)
print("\nconnective sentences (labels always truthful):")
for sentence in gen_connective_sentences(world, subject, rng, partners, count=6):
    print("  " + language.render(sentence))

# -- full corpus --------------------------------------------------------------
out_dir = tempfile.mkdtemp(prefix="beliefbench-demo-")
stats = emit_corpus(world, target_facts=200, seed=11, out_dir=out_dir)
print(f"\nemitted corpus under {out_dir}")
for line in stats.lines():
    print("  " + line)

with open(os.path.join(out_dir, "corpus.txt"), encoding="utf-8") as fh:
    docs = [ln for ln in fh if not ln.startswith("#")]
print(f"\nper-fact ratios: atomic={stats.atomic_sentences // stats.true_atomic_facts}x, "
      f"true/false={stats.tf_sentences // stats.true_atomic_facts}x")
print("first document:")
print("  " + docs[0].strip())
