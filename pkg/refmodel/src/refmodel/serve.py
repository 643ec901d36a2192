"""Probe-protocol server for a trained checkpoint.

Speaks newline-delimited JSON over stdio: next_object / truth /
generate queries plus edit / revert control records, matched by id.

Probability conventions:
* truth prompts score the next token restricted to {true, false};
* next_object candidates score as the length-normalized product of
  their token probabilities, renormalized over the relation's known
  object pool (from the facts manifest recorded at training time) plus
  the queried candidate itself;
* generate greedily decodes the object span until a terminator.
"""

from __future__ import annotations

import json
import logging
import math
from typing import IO

from .edit import EditConfig, EditHandle, apply_edit
from .model import TinyLM
from .tokenizer import Tokenizer, TokenizerError

logger = logging.getLogger(__name__)


class ProbeServer:
    def __init__(self, model: TinyLM, tok: Tokenizer, meta: dict, edit_cfg: EditConfig | None = None):
        self.model = model
        self.tok = tok
        self.relations = sorted(meta.get("relations", []), key=len, reverse=True)
        self.pools = {r: list(objs) for r, objs in meta.get("relation_pools", {}).items()}
        self.relation_subjects = meta.get("relation_subjects", {})
        self.edit_cfg = edit_cfg or EditConfig()
        self._handle: EditHandle | None = None
        self._stop = {self.tok.eos}
        for t in (".", '"', "is"):
            if t in self.tok.id_of:
                self._stop.add(self.tok.id_of[t])

    # -- scoring ------------------------------------------------------

    def _relation_of(self, prompt: str) -> str | None:
        for rel in self.relations:
            if prompt == rel or prompt.endswith(" " + rel):
                return rel
        return None

    def _candidate_score(self, prefix: list[int], surface: str) -> float:
        ids = self.tok.encode(surface)
        logprob = self.model.sequence_logprob(prefix, ids)
        return math.exp(logprob / len(ids))

    def next_object_probability(self, prompt: str, candidate: str) -> float:
        prefix = [self.tok.bos] + self.tok.encode(prompt)
        relation = self._relation_of(prompt)
        pool = list(self.pools.get(relation, []))
        if candidate not in pool:
            pool.append(candidate)
        scores = {obj: self._candidate_score(prefix, obj) for obj in pool}
        total = sum(scores.values())
        if total <= 0.0:
            return 0.0
        return min(1.0, max(0.0, scores[candidate] / total))

    def truth_probability(self, prompt: str) -> float:
        prefix = [self.tok.bos] + self.tok.encode(prompt)
        logprobs = self.model.next_token_logprobs(prefix)

        def label_prob(label: str) -> float:
            ident = self.tok.id_of.get(label)
            return math.exp(float(logprobs[ident])) if ident is not None else 0.0

        p_true, p_false = label_prob("true"), label_prob("false")
        if p_true + p_false == 0.0:
            return 0.5
        return min(1.0, max(0.0, p_true / (p_true + p_false)))

    def generate(self, prompt: str) -> str:
        """Greedy-decode the object span; the span ends at the longest
        known object surface (multi-token objects have no terminator of
        their own inside a sentence)."""
        prefix = [self.tok.bos] + self.tok.encode(prompt)
        out = self.model.greedy_decode(prefix, stop=self._stop, max_new=8)
        pool = self.pools.get(self._relation_of(prompt) or "", [])
        for cand in sorted((self.tok.encode(o) for o in pool), key=len, reverse=True):
            if out[: len(cand)] == cand:
                return self.tok.decode(cand)
        return self.tok.decode(out)

    # -- edits ----------------------------------------------------------

    def edit(self, prompt: str, target: str, weight: float) -> None:
        if self._handle is not None and self._handle.active:
            raise RuntimeError("an edit is already active; revert first")
        relation = self._relation_of(prompt)
        if relation is not None and target not in self.pools.setdefault(relation, []):
            self.pools[relation].append(target)  # edit-introduced objects join the pool
        references = [
            f"{subj} {relation}" for subj in self.relation_subjects.get(relation, [])
        ]
        # weight conveys evidence strength; this editor treats any
        # requested fact as the new target outright
        self._handle = apply_edit(
            self.model, self.tok, prompt, target, self.edit_cfg, reference_prompts=references
        )

    def revert(self) -> None:
        if self._handle is None or not self._handle.active:
            raise RuntimeError("no edit to revert")
        self._handle.revert()

    # -- protocol loop -----------------------------------------------------

    def handle_record(self, rec: dict) -> dict:
        rid = rec.get("id")
        kind = rec.get("kind")
        try:
            if kind == "edit":
                self.edit(rec["prompt"], rec["target"], float(rec.get("weight", 0)))
                return {"id": rid}
            if kind == "revert":
                self.revert()
                return {"id": rid}
            if kind == "next_object":
                return {"id": rid, "probability": self.next_object_probability(rec["prompt"], rec["candidate"])}
            if kind == "truth":
                return {"id": rid, "probability": self.truth_probability(rec["prompt"])}
            if kind == "generate":
                return {"id": rid, "text": self.generate(rec["prompt"])}
            return {"id": rid, "error": f"unknown kind {kind!r}"}
        except (TokenizerError, KeyError, RuntimeError, ValueError) as exc:
            return {"id": rid, "error": str(exc)}

    def serve(self, instream: IO[str], outstream: IO[str]) -> None:
        for raw in instream:
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                outstream.write(json.dumps({"id": None, "error": "bad json"}) + "\n")
                outstream.flush()
                continue
            if rec.get("kind") == "shutdown":
                outstream.write(json.dumps({"id": rec.get("id")}) + "\n")
                outstream.flush()
                return
            outstream.write(json.dumps(self.handle_record(rec), ensure_ascii=False) + "\n")
            outstream.flush()
