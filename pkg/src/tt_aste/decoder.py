"""Vertex prediction, candidate rectangles and region classification.

Vertex heads give each cell 2-class logits (index 1 = vertex). A predicted
TL cell ``(a, b)`` and BR cell ``(c, d)`` form a candidate when ``a <= c``
and ``b <= d``. A candidate is represented by its TL cell vector, its BR
cell vector and the channel-wise max over the rectangle, then classified
into the sentiment classes plus ``INVALID``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, GeometryError
from .numerics import Parameter, ParameterStore, Tensor, cross_entropy, linear_forward, reshape
from .tagging import POLARITIES, Pair, Polarity, Region, TableLabels, Triplet, region_to_triplet

INVALID = "INVALID"
VALID = "VALID"
ASTE_CLASSES: tuple = (*POLARITIES, INVALID)
AOPE_CLASSES: tuple = (VALID, INVALID)
DEFAULT_MAX_CANDIDATES = 512

Cell = tuple[int, int]


def classes_for(k: int) -> tuple:
    if k == 4:
        return ASTE_CLASSES
    if k == 2:
        return AOPE_CLASSES
    raise ConfigError(f"sentiment head width must be 2 or 4, got {k}")


@dataclass
class DecoderParams:
    tl_w: Parameter
    tl_b: Parameter
    br_w: Parameter
    br_b: Parameter
    sent_w: Parameter
    sent_b: Parameter

    @property
    def k(self) -> int:
        return self.sent_w.shape[1]

    @classmethod
    def create(cls, store: ParameterStore, d_prime: int, k: int = 4, prefix: str = "decoder") -> "DecoderParams":
        classes_for(k)
        return cls(
            tl_w=store.create(f"{prefix}.tl.weight", (d_prime, 2)),
            tl_b=store.create(f"{prefix}.tl.bias", (2,), "zeros"),
            br_w=store.create(f"{prefix}.br.weight", (d_prime, 2)),
            br_b=store.create(f"{prefix}.br.bias", (2,), "zeros"),
            sent_w=store.create(f"{prefix}.sentiment.weight", (3 * d_prime, k)),
            sent_b=store.create(f"{prefix}.sentiment.bias", (k,), "zeros"),
        )


@dataclass
class VertexPredictions:
    p_tl: Tensor  # (..., n, n, 2)
    p_br: Tensor


def predict_vertices(R_final: Tensor, params: DecoderParams) -> VertexPredictions:
    return VertexPredictions(
        linear_forward(R_final, params.tl_w, params.tl_b),
        linear_forward(R_final, params.br_w, params.br_b),
    )


def _cell_mask(n_padded: int, lengths: Sequence[int]) -> np.ndarray:
    idx = np.arange(n_padded)
    lengths = np.asarray(lengths)[:, None, None]
    return (idx[None, :, None] < lengths) & (idx[None, None, :] < lengths)


def _gold_grid(golds: Sequence[TableLabels], n_padded: int, which: str) -> np.ndarray:
    out = np.zeros((len(golds), n_padded, n_padded), dtype=np.int64)
    for k, g in enumerate(golds):
        out[k, : g.n, : g.n] = getattr(g, which)
    return out


def vertex_loss(
    preds: VertexPredictions,
    golds: TableLabels | Sequence[TableLabels],
    pos_weight: float = 1.0,
) -> Tensor:
    """Mean cross-entropy over real (unpadded) cells, TL and BR terms summed.

    Padded cells get zero weight; positive cells are scaled by ``pos_weight``.
    The mean divides by the number of real cells, not the weight total.
    """
    p_tl, p_br = preds.p_tl, preds.p_br
    if isinstance(golds, TableLabels):
        golds = [golds]
        p_tl = reshape(p_tl, (1,) + p_tl.shape)
        p_br = reshape(p_br, (1,) + p_br.shape)
    n_padded = p_tl.shape[-2]
    mask = _cell_mask(n_padded, [g.n for g in golds])
    denom = float(mask.sum())
    total = None
    for logits, which in ((p_tl, "tl"), (p_br, "br")):
        y = _gold_grid(golds, n_padded, which)
        w = mask * np.where(y == 1, pos_weight, 1.0)
        term = cross_entropy(logits, y, weights=w, denom=denom)
        total = term if total is None else total + term
    return total


def vertex_cells(logits: np.ndarray, n: int) -> list[Cell]:
    """Cells among the first ``n`` rows/cols whose argmax is the vertex class."""
    arr = np.asarray(logits.data if isinstance(logits, Tensor) else logits)[:n, :n]
    rows, cols = np.nonzero(arr[..., 1] > arr[..., 0])
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def enumerate_candidates(
    tl_cells: Iterable[Cell], br_cells: Iterable[Cell], max_candidates: int = DEFAULT_MAX_CANDIDATES
) -> list[tuple[Cell, Cell]]:
    tls = sorted(set(map(tuple, tl_cells)))
    brs = sorted(set(map(tuple, br_cells)))
    out = []
    for a, b in tls:
        for c, d in brs:
            if a <= c and b <= d:
                out.append(((a, b), (c, d)))
                if len(out) >= max_candidates:
                    return out
    return out


def rectangle_reprs(R: Tensor, cands: Sequence[tuple[int, Cell, Cell]]) -> Tensor:
    """``(m, 3*d')`` representations for candidates given as ``(batch, tl, br)``."""
    x = R.data
    if x.ndim == 3:
        x = x[None]
    B, n, _, D = x.shape
    m = len(cands)
    out = np.empty((m, 3 * D))
    # flat cell index (into B*n*n) feeding each output row segment
    src = np.empty((m, 3, D), dtype=np.int64)
    ch = np.arange(D)
    for k, (bi, (a, b), (c, d)) in enumerate(cands):
        if not (a <= c and b <= d):
            raise GeometryError(f"candidate TL {(a, b)} is not above-left of BR {(c, d)}")
        region = x[bi, a : c + 1, b : d + 1].reshape(-1, D)
        am = region.argmax(axis=0)
        width = d - b + 1
        r_idx = a + am // width
        c_idx = b + am % width
        out[k, :D] = x[bi, a, b]
        out[k, D : 2 * D] = x[bi, c, d]
        out[k, 2 * D :] = region[am, ch]
        base = bi * n * n
        src[k, 0] = base + a * n + b
        src[k, 1] = base + c * n + d
        src[k, 2] = base + r_idx * n + c_idx

    def back(g):
        flat = (src * D + ch).reshape(-1)
        gx = np.bincount(flat, weights=g.reshape(-1), minlength=B * n * n * D)
        return (gx.reshape(R.shape),)

    return Tensor._make(out, (R,), back)


def rectangle_repr(R_final: Tensor, cand: tuple[Cell, Cell]) -> Tensor:
    """Single-table convenience wrapper: ``(3*d',)`` for one ``(tl, br)``."""
    return reshape(rectangle_reprs(R_final, [(0, cand[0], cand[1])]), (3 * R_final.shape[-1],))


def sentiment_logits(reprs: Tensor, params: DecoderParams) -> Tensor:
    return linear_forward(reprs, params.sent_w, params.sent_b)


def candidate_labels(cands: Sequence[tuple[Cell, Cell]], gold_regions: Sequence[Region], k: int) -> list[int]:
    """Gold class index per candidate: its region's class on an exact (TL, BR) match, else INVALID."""
    classes = classes_for(k)
    lookup = {}
    for r in gold_regions:
        label = VALID if k == 2 else r.sentiment
        lookup[(tuple(r.tl), tuple(r.br))] = classes.index(label)
    invalid = classes.index(INVALID)
    return [lookup.get((tuple(tl), tuple(br)), invalid) for tl, br in cands]


def sentiment_loss(
    candidates: Sequence[tuple[Cell, Cell]], logits: Tensor | None, gold_regions: Sequence[Region], k: int | None = None
) -> Tensor:
    """Mean cross-entropy over candidates (0 for no candidates)."""
    if not candidates or logits is None:
        return Tensor(0.0)
    k = logits.shape[-1] if k is None else k
    return cross_entropy(logits, candidate_labels(candidates, gold_regions, k))


def total_loss(l1: Tensor, l2: Tensor) -> Tensor:
    return l1 + l2


def extract_triplets(
    preds: VertexPredictions,
    sentiment_logits_per_candidate,
    k: int,
    n: int | None = None,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> list[Triplet] | list[Pair]:
    """Decode one sentence.

    Candidates are re-derived from the vertex argmax exactly as
    :func:`inference_candidates` does, so row ``i`` of the logits belongs to
    candidate ``i``. INVALID rows are dropped and duplicates removed.
    """
    classes = classes_for(k)
    cands = inference_candidates(preds, n, max_candidates)
    if not cands:
        return []
    logits = sentiment_logits_per_candidate
    logits = np.asarray(logits.data if isinstance(logits, Tensor) else logits)
    if logits.shape != (len(cands), k):
        raise ValueError(f"expected logits of shape {(len(cands), k)}, got {logits.shape}")
    out = []
    seen = set()
    for (tl, br), row in zip(cands, logits):
        label = classes[int(np.argmax(row))]
        if label == INVALID:
            continue
        item = region_to_triplet(tl, br, None if label == VALID else Polarity(label))
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def inference_candidates(
    preds: VertexPredictions, n: int | None = None, max_candidates: int = DEFAULT_MAX_CANDIDATES
) -> list[tuple[Cell, Cell]]:
    tl = preds.p_tl.data if isinstance(preds.p_tl, Tensor) else np.asarray(preds.p_tl)
    br = preds.p_br.data if isinstance(preds.p_br, Tensor) else np.asarray(preds.p_br)
    n = tl.shape[0] if n is None else n
    return enumerate_candidates(vertex_cells(tl, n), vertex_cells(br, n), max_candidates)
