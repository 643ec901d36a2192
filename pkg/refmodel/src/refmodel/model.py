"""A small decoder-only transformer with editable MLP down-projections.

Pre-norm blocks (RMSNorm), gated SiLU MLPs, learned positions, tied
embedding/output weights.  Each MLP's down-projection carries an
optional rank-1 additive delta (B a^T), which is what the editing
procedure trains; the base weights are never touched, so removing the
delta restores the original model bit for bit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    seq_len: int = 128

    def to_payload(self) -> dict:
        return asdict(self)


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.eps = eps

    def forward(self, x):
        scale = torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps)
        return self.weight * (x * scale)


class EditableDownProj(nn.Module):
    """Linear layer plus an optional rank-1 delta (b a^T) used for edits.

    The input side `a` is a fixed key (the edit prompt's own activation
    direction), so the delta fires on the edited context and barely
    anywhere else; only the output side `b` is trained.
    """

    def __init__(self, d_ff: int, d_model: int):
        super().__init__()
        self.base = nn.Linear(d_ff, d_model, bias=False)
        self.key: torch.Tensor | None = None  # (d_ff,), frozen
        self.lora_b: nn.Parameter | None = None  # (d_model,)

    def attach_delta(self, key: torch.Tensor) -> nn.Parameter:
        norm = key.norm()
        if float(norm) == 0.0:
            norm = torch.ones(())
        self.key = (key / norm).detach()
        self.lora_b = nn.Parameter(torch.zeros(self.base.out_features))
        return self.lora_b

    def detach_delta(self):
        self.key = None
        self.lora_b = None

    def forward(self, x):
        out = self.base(x)
        if self.lora_b is not None:
            coeff = (x * self.key).sum(-1, keepdim=True)
            out = out + coeff * self.lora_b
        return out


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = RMSNorm(cfg.d_model)
        self.attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads, batch_first=True)
        self.norm2 = RMSNorm(cfg.d_model)
        self.gate = nn.Linear(cfg.d_model, cfg.d_ff, bias=False)
        self.up = nn.Linear(cfg.d_model, cfg.d_ff, bias=False)
        self.down = EditableDownProj(cfg.d_ff, cfg.d_model)

    def forward(self, x, attn_mask):
        h = self.norm1(x)
        attn, _ = self.attn(h, h, h, attn_mask=attn_mask, need_weights=False)
        x = x + attn
        h = self.norm2(x)
        x = x + self.down(F.silu(self.gate(h)) * self.up(h))
        return x


class TinyLM(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos = nn.Embedding(cfg.seq_len, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.norm = RMSNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)
        self.head.weight = self.embed.weight  # tied

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        n = ids.shape[-1]
        if n > self.cfg.seq_len:
            raise ValueError(f"sequence length {n} exceeds {self.cfg.seq_len}")
        x = self.embed(ids) + self.pos(torch.arange(n, device=ids.device))
        mask = torch.triu(torch.full((n, n), float("-inf"), device=ids.device), diagonal=1)
        for block in self.blocks:
            x = block(x, mask)
        return self.head(self.norm(x))

    def mlp_activations(self, ids: list[int]) -> list[torch.Tensor]:
        """Per-layer down-projection inputs at the final token."""
        acts: list[torch.Tensor] = []
        hooks = [
            block.down.register_forward_pre_hook(
                lambda module, inputs: acts.append(inputs[0][0, -1].detach())
            )
            for block in self.blocks
        ]
        try:
            with torch.no_grad():
                self(torch.tensor(ids, dtype=torch.long).unsqueeze(0))
        finally:
            for hook in hooks:
                hook.remove()
        return acts

    def attach_deltas(self, keys: list[torch.Tensor]) -> list[nn.Parameter]:
        """Attach one rank-1 delta per layer with the given input keys."""
        return [block.down.attach_delta(key) for block, key in zip(self.blocks, keys)]

    def detach_deltas(self) -> None:
        for block in self.blocks:
            block.down.detach_delta()

    @torch.no_grad()
    def next_token_logprobs(self, prefix: list[int]) -> torch.Tensor:
        ids = torch.tensor(prefix[-self.cfg.seq_len :], dtype=torch.long).unsqueeze(0)
        logits = self(ids)[0, -1]
        return F.log_softmax(logits, dim=-1)

    @torch.no_grad()
    def sequence_logprob(self, prefix: list[int], continuation: list[int]) -> float:
        """Sum of log p(continuation tokens | prefix, previous tokens)."""
        ids = torch.tensor((prefix + continuation)[-self.cfg.seq_len :], dtype=torch.long)
        logits = self(ids.unsqueeze(0))[0]
        logprobs = F.log_softmax(logits, dim=-1)
        start = len(ids) - len(continuation)
        total = 0.0
        for offset, tok in enumerate(continuation):
            total += float(logprobs[start + offset - 1, tok])
        return total

    @torch.no_grad()
    def greedy_decode(self, prefix: list[int], stop: set[int], max_new: int = 8) -> list[int]:
        ids = list(prefix)
        out = []
        for _ in range(max_new):
            nxt = int(self.next_token_logprobs(ids).argmax())
            if nxt in stop:
                break
            out.append(nxt)
            ids.append(nxt)
        return out
