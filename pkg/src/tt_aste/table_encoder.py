"""Sentence -> initial relation table.

Token embeddings stand in for a pretrained encoder. Aspect/opinion
projections feed a biaffine scorer; each cell (i, j) is the concatenation

    W1 (ha_i ++ ho_j)  ++  ha_i^T W2 ho_j  ++  maxpool(h_min(i,j) .. h_max(i,j))

compressed to ``d_prime`` channels by ``linear_d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .numerics import (
    DimensionError,
    Parameter,
    ParameterStore,
    Tensor,
    concat,
    matmul,
    getitem,
    linear_forward,
    take_rows,
    transpose,
)

PAD = "<pad>"
UNK = "<unk>"


class VocabularyError(KeyError):
    pass


class Vocab:
    """String <-> id map with ``<pad>`` = 0 and ``<unk>`` = 1."""

    def __init__(self, words: Iterable[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    @classmethod
    def from_records(cls, records) -> "Vocab":
        words = sorted({t for r in records for t in r.tokens})
        return cls(words)


@dataclass
class EncoderConfig:
    vocab_size: int
    d: int = 32
    d_bilinear: int | None = None
    d_prime: int = 48

    def __post_init__(self):
        if self.d_bilinear is None:
            self.d_bilinear = math.ceil(math.sqrt(self.d))
        for name in ("vocab_size", "d", "d_bilinear", "d_prime"):
            if getattr(self, name) < 1:
                raise ValueError(f"EncoderConfig.{name} must be >= 1")

    @property
    def raw_width(self) -> int:
        return 2 * self.d + self.d_bilinear


@dataclass
class EncoderParams:
    embedding: Parameter
    linear_a_w: Parameter
    linear_a_b: Parameter
    linear_o_w: Parameter
    linear_o_b: Parameter
    W1: Parameter
    W2: Parameter
    linear_d_w: Parameter
    linear_d_b: Parameter

    @classmethod
    def create(cls, store: ParameterStore, cfg: EncoderConfig, prefix: str = "encoder") -> "EncoderParams":
        d, k = cfg.d, cfg.d_bilinear
        return cls(
            embedding=store.create(f"{prefix}.embedding", (cfg.vocab_size, d)),
            linear_a_w=store.create(f"{prefix}.linear_a.weight", (d, d)),
            linear_a_b=store.create(f"{prefix}.linear_a.bias", (d,), "zeros"),
            linear_o_w=store.create(f"{prefix}.linear_o.weight", (d, d)),
            linear_o_b=store.create(f"{prefix}.linear_o.bias", (d,), "zeros"),
            W1=store.create(f"{prefix}.W1", (2 * d, d)),
            W2=store.create(f"{prefix}.W2", (d, k, d)),
            linear_d_w=store.create(f"{prefix}.linear_d.weight", (cfg.raw_width, cfg.d_prime)),
            linear_d_b=store.create(f"{prefix}.linear_d.bias", (cfg.d_prime,), "zeros"),
        )


def encode_sentence(token_ids, params: EncoderParams) -> Tensor:
    """Embedding lookup: ids ``(..., n)`` -> ``(..., n, d)``."""
    ids = np.asarray(token_ids, dtype=np.int64)
    vocab_size = params.embedding.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = ids[(ids < 0) | (ids >= vocab_size)][0]
        raise VocabularyError(f"token id {bad} outside vocabulary of size {vocab_size}")
    return take_rows(params.embedding.value, ids)


def project_ao(H: Tensor, params: EncoderParams) -> tuple[Tensor, Tensor]:
    Ha = linear_forward(H, params.linear_a_w, params.linear_a_b)
    Ho = linear_forward(H, params.linear_o_w, params.linear_o_b)
    return Ha, Ho


def span_maxpool(H: Tensor) -> Tensor:
    """``out[..., i, j, :] = max(H[..., min(i,j):max(i,j)+1, :])``.

    Ties resolve to the lowest token index, which is also where the
    gradient flows.
    """
    x = H.data
    lead = x.shape[:-2]
    n, d = x.shape[-2:]
    out = np.empty(lead + (n, n, d))
    arg = np.empty(lead + (n, n, d), dtype=np.int64)
    diag = np.arange(n)
    out[..., diag, diag, :] = x
    arg[..., diag, diag, :] = diag[:, None]
    for k in range(1, n):
        i = np.arange(n - k)
        j = i + k
        prev = out[..., i, j - 1, :]
        cand = x[..., j, :]
        take = cand > prev
        out[..., i, j, :] = np.where(take, cand, prev)
        arg[..., i, j, :] = np.where(take, j[:, None], arg[..., i, j - 1, :])
    iu, ju = np.triu_indices(n, 1)
    out[..., ju, iu, :] = out[..., iu, ju, :]
    arg[..., ju, iu, :] = arg[..., iu, ju, :]

    def back(g):
        batch = int(np.prod(lead)) if lead else 1
        a = arg.reshape(batch, n * n, d)
        flat = (np.arange(batch)[:, None, None] * n + a) * d + np.arange(d)
        gx = np.bincount(flat.reshape(-1), weights=g.reshape(-1), minlength=batch * n * d)
        return (gx.reshape(x.shape),)

    return Tensor._make(out, (H,), back)


def biaffine_table(Ha: Tensor, Ho: Tensor, H: Tensor, params: EncoderParams) -> Tensor:
    """Raw table ``(..., n, n, 2d + d_bilinear)`` with slices [concat | bilinear | pooling]."""
    d = Ha.shape[-1]
    if Ho.shape != Ha.shape or H.shape != Ha.shape:
        raise DimensionError(f"biaffine_table: shapes {Ha.shape}, {Ho.shape}, {H.shape} disagree")
    W1 = params.W1.value
    # W1 (ha_i ++ ho_j) split into row and column halves
    row = linear_forward(Ha, getitem(W1, slice(0, d)))
    col = linear_forward(Ho, getitem(W1, slice(d, 2 * d)))
    n = Ha.shape[-2]
    lead = Ha.shape[:-2]
    concat_term = row.reshape(lead + (n, 1, d)) + col.reshape(lead + (1, n, d))
    # bilinear ha_i W2[:, k, :] ho_j as two matmuls: (Ha W2) then against Ho^T
    W2 = params.W2.value
    kb = W2.shape[1]
    nd = Ha.ndim
    t = linear_forward(Ha, W2.reshape((d, kb * d))).reshape(lead + (n * kb, d))
    ho_t = transpose(Ho, tuple(range(nd - 2)) + (nd - 1, nd - 2))
    bil = matmul(t, ho_t).reshape(lead + (n, kb, n))
    bil = transpose(bil, tuple(range(nd - 2)) + (nd - 2, nd, nd - 1))
    return concat([concat_term, bil, span_maxpool(H)], axis=-1)


def compress(Rraw: Tensor, params: EncoderParams) -> Tensor:
    return linear_forward(Rraw, params.linear_d_w, params.linear_d_b)


def encode_table(token_ids, params: EncoderParams) -> Tensor:
    """Full table encoding: ids ``(..., n)`` -> ``R`` of shape ``(..., n, n, d_prime)``."""
    H = encode_sentence(token_ids, params)
    Ha, Ho = project_ao(H, params)
    return compress(biaffine_table(Ha, Ho, H, params), params)
