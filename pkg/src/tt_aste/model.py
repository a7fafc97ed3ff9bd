"""End-to-end table tagger: encoder, relation encoder, decoder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .decoder import (
    DEFAULT_MAX_CANDIDATES,
    DecoderParams,
    VertexPredictions,
    candidate_labels,
    enumerate_candidates,
    extract_triplets,
    predict_vertices,
    rectangle_reprs,
    sentiment_logits,
    total_loss,
    vertex_cells,
    vertex_loss,
)
from .errors import ConfigError
from .numerics import ParameterStore, Tensor, cross_entropy, getitem
from .stripe_attention import FlopLedger
from .table_encoder import EncoderConfig, EncoderParams, Vocab, encode_table
from .tagging import SentenceRecord, TableLabels, encode_labels, pad_length
from .tt_encoder import TTConfig, TTParams, relation_encode


@dataclass
class ModelConfig:
    vocab_size: int = 200
    d: int = 32
    d_bilinear: int | None = None
    d_prime: int = 48
    heads: int = 4
    ffn_width: int | None = None
    num_layers: int = 2
    b: int = 2
    w: int = 3
    attention: str = "stripe"
    loop_shift: bool = True
    wrap: str = "flattened"
    gate: str = "scalar"
    relation_encoder: bool = True
    task: str = "ASTE"
    pos_weight: float = 1.0
    max_candidates: int = DEFAULT_MAX_CANDIDATES

    def __post_init__(self):
        if self.d_bilinear is None:
            self.d_bilinear = math.ceil(math.sqrt(self.d))
        if self.ffn_width is None:
            self.ffn_width = 4 * self.d_prime
        if self.task not in ("ASTE", "AOPE"):
            raise ConfigError(f"task must be ASTE or AOPE, got {self.task!r}")
        self.encoder_config
        self.tt_config

    @property
    def k(self) -> int:
        return 4 if self.task == "ASTE" else 2

    @property
    def encoder_config(self) -> EncoderConfig:
        try:
            return EncoderConfig(self.vocab_size, self.d, self.d_bilinear, self.d_prime)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def tt_config(self) -> TTConfig:
        return TTConfig(
            d_prime=self.d_prime,
            heads=self.heads,
            num_layers=self.num_layers,
            ffn_width=self.ffn_width,
            b=self.b,
            w=self.w,
            attention=self.attention,
            loop_shift=self.loop_shift,
            wrap=self.wrap,
            gate=self.gate,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    records: list[SentenceRecord]
    ids: np.ndarray  # (B, n_padded)
    lengths: list[int]
    labels: list[TableLabels]

    @property
    def n_padded(self) -> int:
        return self.ids.shape[1]


def make_batch(records: Sequence[SentenceRecord], vocab: Vocab, b: int) -> Batch:
    """Pad every sentence to the block-aligned length of the longest one."""
    lengths = [len(r.tokens) for r in records]
    n_pad = pad_length(max(lengths), b)
    ids = np.zeros((len(records), n_pad), dtype=np.int64)
    for k, r in enumerate(records):
        ids[k, : lengths[k]] = vocab.encode(r.tokens)
    return Batch(list(records), ids, lengths, [encode_labels(r) for r in records])


@dataclass
class ForwardOutput:
    R_final: Tensor
    preds: VertexPredictions
    loss: Tensor | None = None
    vertex_loss: Tensor | None = None
    sentiment_loss: Tensor | None = None
    candidates: list = field(default_factory=list)  # (batch, tl, br)
    logits: Tensor | None = None


class TTModel:
    def __init__(self, config: ModelConfig, seed: int = 0, init_scale: float = 0.05):
        self.config = config
        self.store = ParameterStore(seed, init_scale)
        self.encoder = EncoderParams.create(self.store, config.encoder_config)
        self.tt = TTParams.create(self.store, config.tt_config, stack=config.relation_encoder)
        self.decoder = DecoderParams.create(self.store, config.d_prime, config.k)

    @property
    def k(self) -> int:
        return self.config.k

    def table(self, ids: np.ndarray, ledger: FlopLedger | None = None) -> Tensor:
        R = encode_table(ids, self.encoder)
        R_final, _ = relation_encode(R, self.tt, self.config.tt_config, ledger)
        return R_final

    def _candidates(self, preds: VertexPredictions, batch: Batch, training: bool) -> list:
        out = []
        for bi, n in enumerate(batch.lengths):
            tl = vertex_cells(preds.p_tl.data[bi], n)
            br = vertex_cells(preds.p_br.data[bi], n)
            if training:
                gold = [(tuple(r.tl), tuple(r.br)) for r in batch.labels[bi].regions]
                gold = sorted(set(gold))[: self.config.max_candidates]
                have = set(gold)
                extra = [c for c in enumerate_candidates(tl, br, self.config.max_candidates) if c not in have]
                cands = gold + extra[: self.config.max_candidates - len(gold)]
            else:
                cands = enumerate_candidates(tl, br, self.config.max_candidates)
            out.extend((bi, tlc, brc) for tlc, brc in cands)
        return out

    def forward(self, batch: Batch, training: bool = True, ledger: FlopLedger | None = None) -> ForwardOutput:
        R_final = self.table(batch.ids, ledger)
        preds = predict_vertices(R_final, self.decoder)
        cands = self._candidates(preds, batch, training)
        logits = sentiment_logits(rectangle_reprs(R_final, cands), self.decoder) if cands else None
        out = ForwardOutput(R_final, preds, candidates=cands, logits=logits)
        if training:
            l1 = vertex_loss(preds, batch.labels, self.config.pos_weight)
            if cands:
                targets = []
                for bi, tl, br in cands:
                    targets.extend(candidate_labels([(tl, br)], batch.labels[bi].regions, self.k))
                l2 = cross_entropy(logits, targets)
            else:
                l2 = Tensor(0.0)
            out.vertex_loss, out.sentiment_loss = l1, l2
            out.loss = total_loss(l1, l2)
        return out

    def loss(self, batch: Batch, ledger: FlopLedger | None = None) -> Tensor:
        return self.forward(batch, True, ledger).loss

    def predict(self, batch: Batch, ledger: FlopLedger | None = None) -> list[list]:
        out = self.forward(batch, training=False, ledger=ledger)
        results = []
        logits = out.logits.data if out.logits is not None else np.zeros((0, self.k))
        rows = np.array([c[0] for c in out.candidates], dtype=np.int64)
        for bi, n in enumerate(batch.lengths):
            preds = VertexPredictions(out.preds.p_tl.data[bi], out.preds.p_br.data[bi])
            results.append(
                extract_triplets(preds, logits[rows == bi], self.k, n, self.config.max_candidates)
            )
        return results
