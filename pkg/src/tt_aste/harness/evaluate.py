"""Triplet-level metrics and the evaluation report."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from ..tagging import aspect_opinion_distance, span_types

# (label, lo, hi) inclusive; hi=None means unbounded
DEFAULT_EVAL_BUCKETS: tuple = (("1-3", 1, 3), ("4-6", 4, 6), ("7-9", 7, 9), ("10+", 10, None))
SPAN_TYPES = ("single", "multi_aspect", "multi_opinion")


def prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with every 0/0 taken as 0."""
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class EvalReport:
    triplet_precision: float
    triplet_recall: float
    triplet_f1: float
    sentence_exact_match_rate: float
    bucket_f1: dict = field(default_factory=dict)
    span_type_f1: dict = field(default_factory=dict)
    num_sentences: int = 0
    num_gold: int = 0
    num_pred: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _bucket_of(item, buckets) -> str | None:
    d = aspect_opinion_distance(item)
    for label, lo, hi in buckets:
        if lo <= d <= (math.inf if hi is None else hi):
            return label
    return None


def _key(item, pairs_only: bool):
    return (item.aspect, item.opinion) if pairs_only else (item.aspect, item.opinion, item.polarity)


def evaluate_predictions(
    gold: Sequence[Sequence],
    pred: Sequence[Sequence],
    pairs_only: bool = False,
    buckets=DEFAULT_EVAL_BUCKETS,
) -> EvalReport:
    """Micro P/R/F1 over exact matches, plus sentence exact-match rate and breakdowns.

    With ``pairs_only`` the polarity is ignored (aspect-opinion pair extraction).
    A bucketed or span-type F1 counts predictions and gold items that fall in
    that slice.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    tp = n_pred = n_gold = exact = 0
    slices = {("bucket", b[0]): [0, 0, 0] for b in buckets}
    slices.update({("span", s): [0, 0, 0] for s in SPAN_TYPES})
    for g_items, p_items in zip(gold, pred):
        g = {_key(t, pairs_only): t for t in g_items}
        p = {_key(t, pairs_only): t for t in p_items}
        hits = g.keys() & p.keys()
        tp += len(hits)
        n_pred += len(p)
        n_gold += len(g)
        exact += g.keys() == p.keys()
        for keys, items, slot in ((p.keys(), p, 1), (g.keys(), g, 2)):
            for k in keys:
                tags = [("bucket", _bucket_of(items[k], buckets))] + [("span", s) for s in span_types(items[k])]
                for tag in tags:
                    if tag in slices:
                        slices[tag][slot] += 1
                        if slot == 1 and k in hits:
                            slices[tag][0] += 1
    p_, r_, f_ = prf(tp, n_pred, n_gold)
    return EvalReport(
        triplet_precision=p_,
        triplet_recall=r_,
        triplet_f1=f_,
        sentence_exact_match_rate=exact / len(gold) if gold else 0.0,
        bucket_f1={name: prf(*slices[("bucket", name)])[2] for name, _, _ in buckets},
        span_type_f1={s: prf(*slices[("span", s)])[2] for s in SPAN_TYPES},
        num_sentences=len(gold),
        num_gold=n_gold,
        num_pred=n_pred,
    )
