"""beliefbench: a semi-synthetic testbed for belief revision.

Builds a hypothetical world from a knowledge graph, samples a noisy
formal-language corpus from it, fits an exact Dirichlet-Categorical
referee to the same corpus, generates editing test cases with exact
pre/post-edit target probabilities, and scores any probe-answering
model for generative accuracy, probabilistic coherence, and logical
coherence.
"""

from .artifacts import TOOL_VERSION as __version__
from .language import And, Atom, Atomic, Document, Language, Not, Or, Sentence, Truth, Vocabulary
from .world import (
    CooccurProfile,
    DependencyMap,
    Distribution,
    KnowledgeGraph,
    Triple,
    WorldModel,
    assign_dependencies,
    build_generative_model,
    enforce_one_to_one,
    filter_relations,
    ingest_triples,
    synth_graph,
)
from .corpus import CorpusStats, emit_corpus, gen_connective_sentences, gen_fact_block, sample_object
from .oracle import OracleState, fit_oracle
from .bench import EditRequest, TestCase, gen_cases, load_benchmark, save_benchmark, split_subsets
from .agents import BayesAgent, MemorizerAgent, ProbeQuery, ProbeResponse, StaleAgent
from .evaluate import MetricsReport, run_eval, render_report

__all__ = [
    "__version__",
    "And", "Atom", "Atomic", "Document", "Language", "Not", "Or", "Sentence", "Truth", "Vocabulary",
    "CooccurProfile", "DependencyMap", "Distribution", "KnowledgeGraph", "Triple", "WorldModel",
    "assign_dependencies", "build_generative_model", "enforce_one_to_one", "filter_relations",
    "ingest_triples", "synth_graph",
    "CorpusStats", "emit_corpus", "gen_connective_sentences", "gen_fact_block", "sample_object",
    "OracleState", "fit_oracle",
    "EditRequest", "TestCase", "gen_cases", "load_benchmark", "save_benchmark", "split_subsets",
    "BayesAgent", "MemorizerAgent", "ProbeQuery", "ProbeResponse", "StaleAgent",
    "MetricsReport", "run_eval", "render_report",
]
