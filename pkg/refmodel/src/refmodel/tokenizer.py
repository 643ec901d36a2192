"""Closed-vocabulary word tokenizer for the corpus language.

Tokens are whitespace words with double quotes split off as their own
tokens, so '"grace stone" is true' becomes
['"', 'grace', 'stone', '"', 'is', 'true'].  The vocabulary is closed:
encoding an unknown token raises, because the corpus language has a
fixed token inventory and anything else signals a broken pipeline.
"""

from __future__ import annotations

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
SPECIALS = (PAD, BOS, EOS)


class TokenizerError(ValueError):
    pass


def split_tokens(text: str) -> list[str]:
    out: list[str] = []
    for piece in text.split():
        while piece.startswith('"'):
            out.append('"')
            piece = piece[1:]
        tail = 0
        while piece.endswith('"'):
            tail += 1
            piece = piece[:-1]
        if piece:
            out.append(piece)
        out.extend('"' * tail)
    return out


class Tokenizer:
    def __init__(self, tokens: list[str]):
        self.id_of = {tok: i for i, tok in enumerate(SPECIALS)}
        for tok in tokens:
            if tok not in self.id_of:
                self.id_of[tok] = len(self.id_of)
        self.token_of = {i: t for t, i in self.id_of.items()}

    def __len__(self) -> int:
        return len(self.id_of)

    @classmethod
    def from_corpus(cls, lines: list[str]) -> "Tokenizer":
        seen: dict[str, None] = {}
        for line in lines:
            for tok in split_tokens(line):
                seen[tok] = None
        return cls(sorted(seen))

    def encode(self, text: str) -> list[int]:
        ids = []
        for tok in split_tokens(text):
            if tok not in self.id_of:
                raise TokenizerError(f"token not in the closed vocabulary: {tok!r}")
            ids.append(self.id_of[tok])
        return ids

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.token_of[i] for i in ids)

    def to_payload(self) -> list[str]:
        return [self.token_of[i] for i in range(len(self.id_of))]

    @classmethod
    def from_payload(cls, tokens: list[str]) -> "Tokenizer":
        tok = cls.__new__(cls)
        tok.id_of = {t: i for i, t in enumerate(tokens)}
        tok.token_of = {i: t for t, i in tok.id_of.items()}
        return tok

    @property
    def pad(self) -> int:
        return self.id_of[PAD]

    @property
    def bos(self) -> int:
        return self.id_of[BOS]

    @property
    def eos(self) -> int:
        return self.id_of[EOS]
