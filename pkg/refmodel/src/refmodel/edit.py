"""Rank-1 editing of the MLP down-projections.

An edit attaches one rank-1 delta per layer whose input side is the
edit prompt's own MLP activation, centered against reference prompts
(other subjects with the same relation) so the delta fires on the
edited context and little else.  Only the output sides are trained,
raising the probability of the full target object span within a fixed
gradient-step budget; a KL penalty toward the pre-edit predictions on
the reference prompts keeps the edit local.  The returned handle
reverts the edit exactly by dropping the deltas.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .model import TinyLM
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass
class EditConfig:
    rank: int = 1  # the delta is a single outer product per layer
    steps: int = 40  # gradient-step budget
    lr: float = 0.1
    ref_weight: float = 0.3  # KL penalty toward pre-edit reference predictions
    target_prob: float = 0.99  # stop early once the span reaches this


class EditHandle:
    def __init__(self, model: TinyLM, converged: bool):
        self.model = model
        self.converged = converged
        self.active = True

    def revert(self) -> None:
        if self.active:
            self.model.detach_deltas()
            self.active = False


def _centered_keys(model: TinyLM, prefix: list[int], reference_ids: list[list[int]]) -> list[torch.Tensor]:
    """Per-layer keys: the prompt's activation projected orthogonal to
    the span of the reference activations, so the deltas are exactly
    silent on the reference contexts."""
    keys = model.mlp_activations(prefix)
    if not reference_ids:
        return keys
    ref_acts: list[list[torch.Tensor]] = [[] for _ in keys]
    for ids in reference_ids:
        for i, act in enumerate(model.mlp_activations(ids)):
            ref_acts[i].append(act)
    out = []
    for key, refs in zip(keys, ref_acts):
        basis, _ = torch.linalg.qr(torch.stack(refs, dim=1))
        out.append(key - basis @ (basis.T @ key))
    return out


def apply_edit(
    model: TinyLM,
    tok: Tokenizer,
    prompt: str,
    target: str,
    cfg: EditConfig | None = None,
    reference_prompts: list[str] | None = None,
) -> EditHandle:
    """Optimize p(target | prompt) through the rank-1 deltas."""
    cfg = cfg or EditConfig()
    if cfg.rank != 1:
        raise ValueError("only rank-1 deltas are supported")
    prefix = [tok.bos] + tok.encode(prompt)
    target_ids = tok.encode(target)
    ids = torch.tensor(prefix + target_ids, dtype=torch.long).unsqueeze(0)
    positions = list(range(len(prefix) - 1, len(prefix) + len(target_ids) - 1))
    targets = torch.tensor(target_ids, dtype=torch.long)
    reference_ids = [
        [tok.bos] + tok.encode(ref) for ref in (reference_prompts or []) if ref != prompt
    ]

    model.eval()  # edits never touch dropout/batch statistics
    params = model.attach_deltas(_centered_keys(model, prefix, reference_ids))
    ref_tensors = [torch.tensor(r, dtype=torch.long).unsqueeze(0) for r in reference_ids]
    with torch.no_grad():
        # deltas start at zero, so these are the pre-edit predictions
        ref_priors = [F.log_softmax(model(r)[0, -1], dim=-1) for r in ref_tensors]

    opt = torch.optim.Adam(params, lr=cfg.lr)
    final_prob = 0.0
    for _ in range(cfg.steps):
        logits = model(ids)[0]
        logprobs = F.log_softmax(logits[positions], dim=-1)
        edit_loss = -logprobs[torch.arange(len(targets)), targets].sum()
        final_prob = float((-edit_loss.detach() / len(targets)).exp())
        if final_prob >= cfg.target_prob:
            break  # the span is learned; stop before collateral damage grows
        loss = edit_loss
        if ref_tensors and cfg.ref_weight > 0:
            kl = 0.0
            for r, prior in zip(ref_tensors, ref_priors):
                post = F.log_softmax(model(r)[0, -1], dim=-1)
                kl = kl + F.kl_div(post, prior, log_target=True, reduction="sum")
            loss = loss + cfg.ref_weight * kl / len(ref_tensors) * len(targets)
        opt.zero_grad()
        loss.backward()
        opt.step()
    else:
        with torch.no_grad():
            logprobs = F.log_softmax(model(ids)[0][positions], dim=-1)
            final_prob = float(logprobs[torch.arange(len(targets)), targets].mean().exp())
    converged = final_prob >= cfg.target_prob
    if not converged:
        logger.warning("edit did not converge: per-token prob %.3f after %d steps", final_prob, cfg.steps)
    for p in params:
        p.requires_grad_(False)
    return EditHandle(model, converged)
