"""Training loop: next-token prediction over the corpus documents.

Documents become <bos> ... <eos> token runs, concatenated and chunked
into fixed-length blocks.  AdamW, cross-entropy, deterministic given
the seed.  Generative accuracy on a sample of training facts (from the
facts manifest) is reported as training progresses.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .model import ModelConfig, TinyLM
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    seq_len: int = 128
    batch_size: int = 16
    lr: float = 1e-3
    epochs: int = 4
    seed: int = 0
    accuracy_sample: int = 100


def read_artifact_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if not ln.startswith("#") and ln.strip()]


def read_facts(path: str) -> list[tuple[str, str, str]]:
    return [tuple(ln.split("\t")) for ln in read_artifact_lines(path)]


def _token_stream(doc_lines: list[str], tok: Tokenizer) -> torch.Tensor:
    stream: list[int] = []
    for line in doc_lines:
        stream.append(tok.bos)
        stream.extend(tok.encode(line))
        stream.append(tok.eos)
    return torch.tensor(stream, dtype=torch.long)


def _blocks(stream: torch.Tensor, seq_len: int, offset: int = 0) -> torch.Tensor:
    """Chunk the stream into (seq_len + 1) windows starting at `offset`.

    A fresh offset each epoch keeps any token from being welded to one
    absolute position, so short probe prompts stay in-distribution.
    """
    usable = len(stream) - offset
    n = (usable - 1) // seq_len
    if n == 0:
        raise ValueError("corpus too small for one training block")
    ids = stream[offset : offset + n * seq_len + 1]
    return torch.stack([ids[i * seq_len : i * seq_len + seq_len + 1] for i in range(n)])


def fact_accuracy(model: TinyLM, tok: Tokenizer, facts: list[tuple[str, str, str]]) -> float:
    """Fraction of facts whose greedy completion matches the manifest."""
    stop = {tok.eos, tok.id_of.get(".", -1), tok.id_of.get('"', -1)}
    hits = 0
    for s, r, o in facts:
        prefix = [tok.bos] + tok.encode(f"{s} {r}")
        target = tok.encode(o)
        decoded = model.greedy_decode(prefix, stop=stop, max_new=len(target) + 2)
        hits += decoded[: len(target)] == target
    return hits / len(facts) if facts else 0.0


def train(
    corpus_path: str,
    facts_path: str | None,
    cfg: TrainConfig,
    out_dir: str,
    log_every: int = 50,
) -> dict:
    torch.manual_seed(cfg.seed)
    doc_lines = read_artifact_lines(corpus_path)
    tok = Tokenizer.from_corpus(doc_lines)
    stream = _token_stream(doc_lines, tok)
    blocks = _blocks(stream, cfg.seq_len)
    model_cfg = ModelConfig(
        vocab_size=len(tok), n_layers=cfg.n_layers, d_model=cfg.d_model,
        n_heads=cfg.n_heads, d_ff=cfg.d_ff, seq_len=cfg.seq_len,
    )
    model = TinyLM(model_cfg)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    steps_per_epoch = (len(blocks) + cfg.batch_size - 1) // cfg.batch_size
    schedule = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=max(1, steps_per_epoch * cfg.epochs), eta_min=cfg.lr * 0.05
    )
    rng = np.random.default_rng(cfg.seed)
    facts = read_facts(facts_path) if facts_path else []
    probe_facts = [facts[i] for i in rng.permutation(len(facts))[: cfg.accuracy_sample]] if facts else []

    losses: list[float] = []
    epoch_losses: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        blocks = _blocks(stream, cfg.seq_len, offset=int(rng.integers(cfg.seq_len)))
        order = rng.permutation(len(blocks))
        epoch_total, epoch_n = 0.0, 0
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            batch = blocks[order[start : start + cfg.batch_size]]
            logits = model(batch[:, :-1])
            loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), batch[:, 1:].reshape(-1))
            opt.zero_grad()
            loss.backward()
            opt.step()
            schedule.step()
            losses.append(float(loss.detach()))
            epoch_total += losses[-1]
            epoch_n += 1
            step += 1
            if step % log_every == 0:
                logger.info("step %d loss %.4f", step, losses[-1])
        epoch_losses.append(epoch_total / max(epoch_n, 1))
        model.eval()
        acc = fact_accuracy(model, tok, probe_facts)
        print(f"epoch {epoch + 1}/{cfg.epochs}: mean loss {epoch_losses[-1]:.4f}, "
              f"fact accuracy {acc:.3f} (n={len(probe_facts)})")

    os.makedirs(out_dir, exist_ok=True)
    relation_pools: dict[str, list[str]] = {}
    relation_subjects: dict[str, list[str]] = {}
    for s, r, o in facts:
        pool = relation_pools.setdefault(r, [])
        if o not in pool:
            pool.append(o)
        subjects = relation_subjects.setdefault(r, [])
        if s not in subjects and len(subjects) < 8:
            subjects.append(s)
    payload = {
        "train_config": asdict(cfg),
        "model_config": model_cfg.to_payload(),
        "tokens": tok.to_payload(),
        "relations": sorted(relation_pools),
        "relation_pools": {r: sorted(v) for r, v in relation_pools.items()},
        "relation_subjects": relation_subjects,
        "losses": losses,
        "epoch_losses": epoch_losses,
    }
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    torch.save(model.state_dict(), os.path.join(out_dir, "weights.pt"))
    return payload


def load_checkpoint(ckpt_dir: str) -> tuple[TinyLM, Tokenizer, dict]:
    with open(os.path.join(ckpt_dir, "config.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    tok = Tokenizer.from_payload(payload["tokens"])
    model = TinyLM(ModelConfig(**payload["model_config"]))
    model.load_state_dict(torch.load(os.path.join(ckpt_dir, "weights.pt"), weights_only=True))
    model.eval()
    return model, tok, payload
