"""Generate editing test cases and score the built-in agents.

The bayes agent is the referee answering its own benchmark: accuracy
1.0 and zero coherence error, the fixed point that validates the whole
pipeline. The memorizer nails the corpus facts but is probabilistically
incoherent; the stale agent additionally ignores edits, so its post-edit
scores collapse on counterfactual cases.
"""

import tempfile

from beliefbench.agents import BayesAgent, MemorizerAgent, StaleAgent
from beliefbench.bench import gen_cases, split_subsets
from beliefbench.corpus import CorpusPaths, emit_corpus, load_corpus_sentences, load_facts_manifest
from beliefbench.evaluate import render_report, run_eval
from beliefbench.language import Language
from beliefbench.oracle import fit_oracle
from beliefbench.protocol import LocalClient
from beliefbench.world import assign_dependencies, build_generative_model, filter_relations, synth_graph

graph = synth_graph(n_subjects=600, n_relations=6, n_objects=10, seed=4)
graph = filter_relations(graph, min_cooccur=5, top_k=10)
deps = assign_dependencies(graph)
world = build_generative_model(graph, deps, floor=0.6, seed=4)
language = Language(world.vocabulary())

out_dir = tempfile.mkdtemp(prefix="beliefbench-demo-")
emit_corpus(world, target_facts=400, seed=11, out_dir=out_dir)
paths = CorpusPaths.in_dir(out_dir)
sentences = load_corpus_sentences(paths.corpus, language)
referee = fit_oracle(sentences, world.deps)

cases = gen_cases(world, referee, load_facts_manifest(paths.facts), n_cases=80, seed=3)
subsets = split_subsets(cases)
print(f"{len(cases)} cases: {len(subsets['downstream_change'])} downstream-change, "
      f"{len(subsets['error_fixing'])} error-fixing")

example = subsets["downstream_change"][0]
print("\nan edit whose downstream answer should change:")
print(f"  edit:       {example.prompts['edit']['prompt']} -> {example.prompts['edit']['target']}"
      f"  (weight n' = {example.edit.weight_auto})")
print(f"  s1r2 probe: {example.prompts['s1r2']['prompt']} ...")
print(f"    referee argmax pre:  {example.argmax_pre['s1r2']}")
print(f"    referee argmax post: {example.argmax_post['s1r2']}")

for name, agent in (
    ("bayes", BayesAgent(referee, language)),
    ("memorizer", MemorizerAgent(sentences, language)),
    ("stale", StaleAgent(sentences, language)),
):
    report = run_eval(cases, LocalClient(agent))
    print(f"\n=== model: {name} ===")
    print(render_report(report))
