"""Minibatch AdamW training with per-epoch dev selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data import CorpusFile, generate_synthetic, load_corpus, split_corpus
from ..errors import ConfigError
from ..model import TTModel, make_batch
from ..numerics import DimensionError, adamw_step
from ..stripe_attention import FlopLedger
from ..table_encoder import Vocab
from ..tagging import SentenceRecord, pad_length
from .checkpoint import Checkpoint
from .config import RunConfig
from .evaluate import EvalReport, evaluate_predictions

log = logging.getLogger(__name__)


@dataclass
class Splits:
    train: list[SentenceRecord]
    dev: list[SentenceRecord]
    test: list[SentenceRecord]


def load_splits(cfg: RunConfig) -> Splits:
    """Explicit files, one corpus split 80/10/10, or a synthetic corpus split the same way."""
    if cfg.train_path:
        train = list(load_corpus(cfg.train_path))
        dev = list(load_corpus(cfg.dev_path)) if cfg.dev_path else []
        test = list(load_corpus(cfg.test_path)) if cfg.test_path else []
        return Splits(train, dev, test)
    if cfg.corpus_path:
        records = list(load_corpus(cfg.corpus_path))
    else:
        records = list(generate_synthetic(cfg.synth_config()))
    return Splits(*split_corpus(records))


def build_model(cfg: RunConfig, vocab: Vocab) -> TTModel:
    return TTModel(cfg.model_config(len(vocab)), seed=cfg.seed)


def make_batches(records: Sequence[SentenceRecord], batch_size: int, b: int, rng=None) -> list[list[int]]:
    """Index batches grouped by padded length, so little compute goes to padding.

    With ``rng`` the order inside each group and the order of batches are
    shuffled; without it the order is fixed (evaluation).
    """
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(pad_length(len(r.tokens), b), []).append(i)
    batches = []
    for key in sorted(groups):
        idx = groups[key]
        if rng is not None:
            idx = [idx[j] for j in rng.permutation(len(idx))]
        batches += [idx[s : s + batch_size] for s in range(0, len(idx), batch_size)]
    if rng is not None:
        batches = [batches[j] for j in rng.permutation(len(batches))]
    return batches


def predict_corpus(model: TTModel, vocab: Vocab, records: Sequence[SentenceRecord], batch_size: int = 16, ledger=None):
    preds: list = [None] * len(records)
    for idx in make_batches(records, batch_size, model.config.b):
        out = model.predict(make_batch([records[i] for i in idx], vocab, model.config.b), ledger)
        for i, p in zip(idx, out):
            preds[i] = p
    return preds


def evaluate_model(model: TTModel, vocab: Vocab, records: Sequence[SentenceRecord]) -> EvalReport:
    pairs_only = model.config.task == "AOPE"
    pred = predict_corpus(model, vocab, records)
    gold = [r.triplets for r in records]
    return evaluate_predictions(gold, pred, pairs_only=pairs_only)


@dataclass
class TrainResult:
    model: TTModel
    vocab: Vocab
    checkpoint: Checkpoint
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev: EvalReport | None = None
    splits: Splits | None = None


def make_checkpoint(cfg: RunConfig, vocab: Vocab, state, extra=None) -> Checkpoint:
    return Checkpoint(cfg.to_dict(), list(vocab.itos), state, dict(extra or {}))


def train(cfg: RunConfig, splits: Splits | None = None) -> TrainResult:
    """Train ``cfg.epochs`` epochs; the returned checkpoint holds the best-dev weights.

    Dev selection uses triplet F1 (pair F1 for AOPE) and keeps the earliest
    epoch on ties. With no dev records the last epoch is kept. Log rows carry
    ``wall_s``, the only field that differs between identical runs.
    """
    splits = splits or load_splits(cfg)
    if not splits.train:
        raise ConfigError("training split is empty")
    vocab = Vocab.from_records(splits.train)
    model = build_model(cfg, vocab)
    opt = cfg.optimizer()
    rng = np.random.default_rng(cfg.seed)
    best_state = model.store.state_dict()
    best_f1, best_epoch, best_dev = -1.0, 0, None
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        ledger = FlopLedger()
        total, count = 0.0, 0
        for idx in make_batches(splits.train, cfg.batch_size, cfg.b, rng):
            batch = make_batch([splits.train[i] for i in idx], vocab, cfg.b)
            model.store.zero_grad()
            try:
                loss = model.loss(batch, ledger)
            except DimensionError as e:
                raise ConfigError(f"corpus does not fit the model: {e}") from None
            loss.backward()
            adamw_step(model.store, opt)
            total += float(loss.data) * len(idx)
            count += len(idx)
        row = {
            "epoch": epoch,
            "loss": total / count,
            "score_macs": ledger.score_macs,
            "value_macs": ledger.value_macs,
        }
        if splits.dev:
            rep = evaluate_model(model, vocab, splits.dev)
            row.update(dev_p=rep.triplet_precision, dev_r=rep.triplet_recall, dev_f1=rep.triplet_f1,
                       dev_exact=rep.sentence_exact_match_rate)
            if rep.triplet_f1 > best_f1:
                best_f1, best_epoch, best_dev = rep.triplet_f1, epoch, rep
                best_state = model.store.state_dict()
        else:
            best_epoch, best_state = epoch, model.store.state_dict()
        row["wall_s"] = time.perf_counter() - t0
        rows.append(row)
        log.info("epoch %d loss %.4f dev_f1 %s (%.1fs)", epoch, row["loss"], row.get("dev_f1"), row["wall_s"])
    model.store.load_state_dict(best_state)
    ckpt = make_checkpoint(cfg, vocab, best_state, {"best_epoch": best_epoch})
    return TrainResult(model, vocab, ckpt, rows, best_epoch, best_dev, splits)


def model_from_checkpoint(ckpt: Checkpoint, cfg: RunConfig | None = None) -> tuple[TTModel, Vocab]:
    """Rebuild the model a checkpoint was saved from; ``cfg`` must agree on dimensions."""
    cfg = cfg or RunConfig.from_dict(ckpt.config)
    vocab = Vocab(ckpt.vocab)
    model = build_model(cfg, vocab)
    if list(ckpt.params) != [p.id for p in model.store]:
        raise ConfigError("checkpoint parameters do not match the configured model")
    try:
        model.store.load_state_dict(ckpt.params)
    except DimensionError as e:
        raise ConfigError(f"checkpoint does not match config: {e}") from None
    return model, vocab


def evaluate(ckpt: Checkpoint, corpus: Sequence[SentenceRecord] | CorpusFile, cfg: RunConfig | None = None) -> EvalReport:
    model, vocab = model_from_checkpoint(ckpt, cfg)
    return evaluate_model(model, vocab, list(corpus))
