"""Command line pipeline.

Subcommands: world build|synth, corpus gen, oracle fit|query|edit,
bench gen, eval run, report.  Every stage takes --seed and emits
artifacts whose headers echo the effective configuration, so a full
run is reproducible byte for byte.  Flag values override a --config
key=value file, which overrides built-in defaults; BELIEFBENCH_OUT
sets the default output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import artifacts, bench, corpus, evaluate, world as world_mod
from .agents import BayesAgent, MemorizerAgent, StaleAgent
from .language import Language
from .oracle import OracleState, fit_oracle
from .protocol import ExternalModel, LocalClient
from .world import CooccurProfile, WorldModel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_EMPTY = 3


def _out_dir() -> str:
    return os.environ.get("BELIEFBENCH_OUT", ".")


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    conf = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#") and "=" in line:
                k, v = line.split("=", 1)
                conf[k.strip()] = v.strip()
    return conf


def _resolve(args: argparse.Namespace, config: dict[str, str], defaults: dict):
    """flags > config file > defaults."""
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            raw = config.get(key)
            if raw is None:
                setattr(args, key, default)
            else:
                caster = type(default) if default is not None else str
                setattr(args, key, caster(raw) if caster is not bool else raw.lower() == "true")


def _require(path: str, what: str, hint: str) -> None:
    if not path or not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact: {what} at {path!r} ({hint})")


def _effective(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


# -- world ------------------------------------------------------------------


def cmd_world_build(args, config) -> int:
    _resolve(args, config, dict(limit=2_000_000, min_cooccur=1000, top_k=10, floor=0.6, seed=0))
    _require(args.triples, "triple file", "provide a TSV of subject/relation/object rows")
    rel_deny = frozenset(args.denylist_relations.split(",")) if args.denylist_relations else world_mod.DEFAULT_RELATION_DENYLIST
    ent_deny = frozenset(args.denylist_entities.split(",")) if args.denylist_entities else world_mod.DEFAULT_ENTITY_DENYLIST
    with open(args.triples, encoding="utf-8") as fh:
        graph = world_mod.ingest_triples(fh, limit=args.limit, relation_denylist=rel_deny, entity_denylist=ent_deny)
    graph = world_mod.filter_relations(graph, min_cooccur=args.min_cooccur, top_k=args.top_k)
    graph = world_mod.enforce_one_to_one(graph, seed=args.seed)
    deps = world_mod.assign_dependencies(graph)
    model = world_mod.build_generative_model(graph, deps, floor=args.floor, seed=args.seed)
    cfg = _effective(args, ("limit", "min_cooccur", "top_k", "floor", "seed"))
    model.save(args.out, config=cfg, seed=args.seed)
    print(
        f"world: {len(graph)} facts, {len(graph.relations)} relations, "
        f"{len(deps.pairs)} dependency pairs, upstream fraction {model.upstream_fraction():.3f}"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_world_synth(args, config) -> int:
    _resolve(
        args,
        config,
        dict(
            subjects=600, relations=6, objects=12, seed=0, floor=0.6,
            min_cooccur=1, top_k=10, coupling=0.75, p_upstream=0.6,
            p_downstream_given_upstream=0.35, p_downstream_alone=0.3,
        ),
    )
    profile = CooccurProfile(
        p_upstream=args.p_upstream,
        p_downstream_given_upstream=args.p_downstream_given_upstream,
        p_downstream_alone=args.p_downstream_alone,
        coupling=args.coupling,
    )
    graph = world_mod.synth_graph(args.subjects, args.relations, args.objects, profile, seed=args.seed)
    graph = world_mod.filter_relations(graph, min_cooccur=args.min_cooccur, top_k=args.top_k)
    graph = world_mod.enforce_one_to_one(graph, seed=args.seed)
    deps = world_mod.assign_dependencies(graph)
    model = world_mod.build_generative_model(graph, deps, floor=args.floor, seed=args.seed)
    cfg = _effective(
        args,
        ("subjects", "relations", "objects", "seed", "floor", "min_cooccur", "top_k",
         "coupling", "p_upstream", "p_downstream_given_upstream", "p_downstream_alone"),
    )
    model.save(args.out, config=cfg, seed=args.seed)
    print(
        f"world: {len(graph)} facts, {len(graph.relations)} relations, "
        f"{len(deps.pairs)} dependency pairs, upstream fraction {model.upstream_fraction():.3f}"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


# -- corpus -----------------------------------------------------------------


def cmd_corpus_gen(args, config) -> int:
    _resolve(args, config, dict(facts=1000, connectives_per_subject=20, max_per_doc=10, seed=0))
    _require(args.world, "world archive", "run `beliefbench world build|synth` first")
    model = WorldModel.load(args.world)
    cfg = _effective(args, ("facts", "connectives_per_subject", "max_per_doc", "seed"))
    stats = corpus.emit_corpus(
        model,
        target_facts=args.facts,
        seed=args.seed,
        out_dir=args.out_dir,
        connectives_per_subject=args.connectives_per_subject,
        max_per_doc=args.max_per_doc,
        config=cfg,
    )
    for line in stats.lines():
        print(line)
    print(f"wrote corpus under {args.out_dir}")
    return EXIT_OK


# -- oracle -----------------------------------------------------------------


def _load_language(world_path: str) -> tuple[WorldModel, Language]:
    _require(world_path, "world archive", "run `beliefbench world build|synth` first")
    model = WorldModel.load(world_path)
    return model, Language(model.vocabulary())


def cmd_oracle_fit(args, config) -> int:
    _resolve(args, config, dict(alpha=1.0, seed=0))
    model, language = _load_language(args.world)
    _require(args.corpus, "corpus file", "run `beliefbench corpus gen` first")
    sentences = corpus.load_corpus_sentences(args.corpus, language)
    state = fit_oracle(sentences, model.deps, prior_alpha=args.alpha)
    cfg = _effective(args, ("alpha", "seed"))
    state.save(args.out, config=cfg, seed=args.seed)
    print(f"fitted {len(state.basic)} fact tables, {len(state.cond)} conditional tables")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_oracle_query(args, config) -> int:
    _, language = _load_language(args.world)
    _require(args.state, "oracle state file", "run `beliefbench oracle fit` first")
    state = OracleState.load(args.state)
    sentence = language.parse(args.sentence)
    prob = state.truth_probability(sentence)
    print(json.dumps({"sentence": args.sentence, "probability": prob}))
    return EXIT_OK


def cmd_oracle_edit(args, config) -> int:
    _resolve(args, config, dict(threshold=0.95, seed=0))
    _, language = _load_language(args.world)
    _require(args.state, "oracle state file", "run `beliefbench oracle fit` first")
    state = OracleState.load(args.state)
    parsed = language.parse(args.sentence)
    from .language import Atomic

    if not isinstance(parsed, Atomic):
        raise ValueError("edit sentence must be atomic: 'subject relation object'")
    atom = parsed.atom
    if args.weight == "auto95":
        weight = state.min_weight_for(atom, threshold=args.threshold)
    else:
        weight = float(args.weight)
    if weight > 0:
        state.apply_edit(atom, weight)
    out = args.out or args.state
    cfg = dict(threshold=args.threshold, seed=args.seed, weight=weight)
    state.save(out, config=cfg, seed=args.seed)
    print(json.dumps({"weight": weight, "probability": state.atom_probability(atom)}))
    print(f"wrote {out}")
    return EXIT_OK


# -- bench -------------------------------------------------------------------


def cmd_bench_gen(args, config) -> int:
    _resolve(args, config, dict(cases=5000, seed=0, threshold=0.95, prefer_downstream=0.8))
    model, language = _load_language(args.world)
    _require(args.oracle, "oracle state file", "run `beliefbench oracle fit` first")
    _require(args.facts, "facts manifest", "run `beliefbench corpus gen` first")
    state = OracleState.load(args.oracle)
    trained = corpus.load_facts_manifest(args.facts)
    before = state.fingerprint()
    cases = bench.gen_cases(
        model,
        state,
        trained,
        n_cases=args.cases,
        seed=args.seed,
        threshold=args.threshold,
        prefer_downstream=args.prefer_downstream,
    )
    assert state.fingerprint() == before, "referee state changed during case generation"
    cfg = _effective(args, ("cases", "seed", "threshold", "prefer_downstream"))
    bench.save_benchmark(cases, args.out, language, config=cfg, seed=args.seed)
    subsets = bench.split_subsets(cases)
    print(
        f"cases: {len(cases)} total, {len(subsets['downstream_change'])} downstream-change, "
        f"{len(subsets['error_fixing'])} error-fixing"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------


def _build_client(args):
    if args.model in ("bayes", "memorizer", "stale"):
        _, language = _load_language(args.world)
        if args.model == "bayes":
            _require(args.oracle, "oracle state file", "run `beliefbench oracle fit` first")
            return LocalClient(BayesAgent(OracleState.load(args.oracle), language))
        _require(args.corpus, "corpus file", "run `beliefbench corpus gen` first")
        sentences = corpus.load_corpus_sentences(args.corpus, language)
        cls = MemorizerAgent if args.model == "memorizer" else StaleAgent
        return LocalClient(cls(sentences, language))
    return ExternalModel(args.model, timeout=args.timeout)


def cmd_eval_run(args, config) -> int:
    _resolve(args, config, dict(subset="all", edit_weight="auto", seed=0, timeout=120.0))
    _require(args.bench, "benchmark file", "run `beliefbench bench gen` first")
    cases = bench.load_benchmark(args.bench)
    if args.subset == "downstream":
        cases = [c for c in cases if c.flags.get("downstream_change")]
    elif args.subset == "errorfix":
        cases = [c for c in cases if c.flags.get("error_fixing")]
    client = _build_client(args)
    try:
        report = evaluate.run_eval(cases, client, weight_mode=args.edit_weight)
    finally:
        client.close()
    cfg = _effective(args, ("subset", "edit_weight", "seed")) | {"model": args.model, "bench": os.path.basename(args.bench)}
    text_path = args.report_text or (os.path.splitext(args.report)[0] + ".txt")
    evaluate.save_report(report, args.report, text_path, config=cfg, seed=args.seed)
    print(evaluate.render_report(report))
    print(f"wrote {args.report} and {text_path}")
    return EXIT_EMPTY if not cases else EXIT_OK


def cmd_report(args, config) -> int:
    _require(args.report, "report file", "run `beliefbench eval run` first")
    report = evaluate.load_report(args.report)
    print(evaluate.render_report(report))
    empty = all(entry["cases"] == 0 for entry in report.subsets.values())
    return EXIT_EMPTY if empty else EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefbench", description=__doc__)
    parser.add_argument("--config", help="key=value config file (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("world", help="build or synthesize a world").add_subparsers(dest="sub", required=True)
    wb = w.add_parser("build", help="ingest a triple file")
    wb.add_argument("--triples", required=True)
    wb.add_argument("--limit", type=int)
    wb.add_argument("--min-cooccur", dest="min_cooccur", type=int)
    wb.add_argument("--top-k", dest="top_k", type=int)
    wb.add_argument("--floor", type=float)
    wb.add_argument("--seed", type=int)
    wb.add_argument("--denylist-relations", dest="denylist_relations")
    wb.add_argument("--denylist-entities", dest="denylist_entities")
    wb.add_argument("--out", default=os.path.join(_out_dir(), "world.json.gz"))
    wb.set_defaults(func=cmd_world_build)
    ws = w.add_parser("synth", help="generate a synthetic world")
    for flag, typ in (
        ("--subjects", int), ("--relations", int), ("--objects", int), ("--seed", int),
        ("--floor", float), ("--min-cooccur", int), ("--top-k", int), ("--coupling", float),
        ("--p-upstream", float), ("--p-downstream-given-upstream", float), ("--p-downstream-alone", float),
    ):
        ws.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    ws.add_argument("--out", default=os.path.join(_out_dir(), "world.json.gz"))
    ws.set_defaults(func=cmd_world_synth)

    c = sub.add_parser("corpus", help="generate the corpus").add_subparsers(dest="sub", required=True)
    cg = c.add_parser("gen")
    cg.add_argument("--world", required=True)
    cg.add_argument("--facts", type=int)
    cg.add_argument("--connectives-per-subject", dest="connectives_per_subject", type=int)
    cg.add_argument("--max-per-doc", dest="max_per_doc", type=int)
    cg.add_argument("--seed", type=int)
    cg.add_argument("--out-dir", dest="out_dir", default=_out_dir())
    cg.set_defaults(func=cmd_corpus_gen)

    o = sub.add_parser("oracle", help="fit, query, or edit the referee").add_subparsers(dest="sub", required=True)
    of = o.add_parser("fit")
    of.add_argument("--corpus", required=True)
    of.add_argument("--world", required=True)
    of.add_argument("--alpha", type=float)
    of.add_argument("--seed", type=int)
    of.add_argument("--out", default=os.path.join(_out_dir(), "oracle.json.gz"))
    of.set_defaults(func=cmd_oracle_fit)
    oq = o.add_parser("query")
    oq.add_argument("--state", required=True)
    oq.add_argument("--world", required=True)
    oq.add_argument("--sentence", required=True)
    oq.set_defaults(func=cmd_oracle_query)
    oe = o.add_parser("edit")
    oe.add_argument("--state", required=True)
    oe.add_argument("--world", required=True)
    oe.add_argument("--sentence", required=True)
    oe.add_argument("--weight", required=True, help="a number, or auto95 for the minimal 0.95 weight")
    oe.add_argument("--threshold", type=float)
    oe.add_argument("--seed", type=int)
    oe.add_argument("--out")
    oe.set_defaults(func=cmd_oracle_edit)

    b = sub.add_parser("bench", help="generate editing test cases").add_subparsers(dest="sub", required=True)
    bg = b.add_parser("gen")
    bg.add_argument("--world", required=True)
    bg.add_argument("--oracle", required=True)
    bg.add_argument("--facts", required=True, help="facts manifest from corpus gen")
    bg.add_argument("--cases", type=int)
    bg.add_argument("--seed", type=int)
    bg.add_argument("--threshold", type=float)
    bg.add_argument("--prefer-downstream", dest="prefer_downstream", type=float)
    bg.add_argument("--out", default=os.path.join(_out_dir(), "bench.jsonl"))
    bg.set_defaults(func=cmd_bench_gen)

    e = sub.add_parser("eval", help="evaluate a model against the benchmark").add_subparsers(dest="sub", required=True)
    er = e.add_parser("run")
    er.add_argument("--bench", required=True)
    er.add_argument("--model", required=True, help="bayes|memorizer|stale|exec:CMD|tcp:HOST:PORT")
    er.add_argument("--world")
    er.add_argument("--oracle")
    er.add_argument("--corpus")
    er.add_argument("--subset", choices=["all", "downstream", "errorfix"])
    er.add_argument("--edit-weight", dest="edit_weight", choices=["auto", "fixed"])
    er.add_argument("--timeout", type=float)
    er.add_argument("--seed", type=int)
    er.add_argument("--report", default=os.path.join(_out_dir(), "report.json"))
    er.add_argument("--report-text", dest="report_text")
    er.set_defaults(func=cmd_eval_run)

    r = sub.add_parser("report", help="render a stored report")
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = _load_config(args.config)
    try:
        return args.func(args, config)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
