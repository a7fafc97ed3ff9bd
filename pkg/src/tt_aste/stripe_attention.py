"""Block-sparse ("stripe") attention over a flattened n x n table.

The padded table is cut into ``l x l`` square blocks of width ``b``. Blocks
are numbered row-major, ``0 .. l*l - 1``, and a block attends to the ``w*w``
blocks whose flattened ids are ``(i + r*l + c) mod l*l`` for
``r, c in [-w//2, w//2]``. Every token of a query block therefore sees
exactly ``w*w*b*b`` keys.

A masked dense implementation (``full_attention_forward`` with
``build_stripe_mask``) computes the same thing at O(n^4) cost and serves as
the oracle for the gather-based path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import (
    DimensionError,
    Parameter,
    ParameterStore,
    Tensor,
    linear_forward,
    reshape,
    roll,
)

WRAP_MODES = ("flattened", "torus")
MASK_FILL = -1e9


class PaddingError(DimensionError):
    pass


@dataclass
class StripeConfig:
    b: int
    w: int
    heads: int
    d_prime: int
    wrap: str = "flattened"

    def __post_init__(self):
        if self.b < 1:
            raise ConfigError(f"block width b must be >= 1, got {self.b}")
        if self.w < 1 or self.w % 2 == 0:
            raise ConfigError(f"window width w must be a positive odd integer, got {self.w}")
        if self.heads < 1 or self.d_prime % self.heads:
            raise ConfigError(f"d_prime={self.d_prime} is not divisible by heads={self.heads}")
        if self.wrap not in WRAP_MODES:
            raise ConfigError(f"wrap must be one of {WRAP_MODES}, got {self.wrap!r}")


@dataclass
class BlockGrid:
    n_padded: int
    b: int

    def __post_init__(self):
        if self.b < 1 or self.n_padded % self.b:
            raise PaddingError(f"table side {self.n_padded} is not a multiple of block width {self.b}")

    @property
    def l(self) -> int:  # noqa: E743
        return self.n_padded // self.b

    @property
    def num_blocks(self) -> int:
        return self.l * self.l

    def block_of_cell(self, row: int, col: int) -> int:
        return (row // self.b) * self.l + (col // self.b)

    def cell_order(self, block: int) -> list[tuple[int, int]]:
        br, bc = divmod(block, self.l)
        return [(br * self.b + i, bc * self.b + j) for i in range(self.b) for j in range(self.b)]

    def block_ids(self) -> np.ndarray:
        """``(n_padded, n_padded)`` array of block ids."""
        r = np.arange(self.n_padded) // self.b
        return r[:, None] * self.l + r[None, :]


def _check_window(l: int, w: int) -> None:  # noqa: E741
    if w < 1 or w % 2 == 0:
        raise ConfigError(f"window width w must be a positive odd integer, got {w}")
    if w > l:
        raise ConfigError(f"window width w={w} exceeds blocks per side l={l}")


def neighbor_indices(i: int, l: int, w: int, wrap: str = "flattened") -> list[int]:  # noqa: E741
    """The ``w*w`` neighbor block ids of block ``i``, ordered by (row offset, col offset)."""
    _check_window(l, w)
    L2 = l * l
    if not 0 <= i < L2:
        raise ConfigError(f"block id {i} outside [0, {L2})")
    h = w // 2
    offs = range(-h, h + 1)
    if wrap == "flattened":
        return [(i + r * l + c) % L2 for r in offs for c in offs]
    if wrap == "torus":
        row, col = divmod(i, l)
        return [((row + r) % l) * l + (col + c) % l for r in offs for c in offs]
    raise ConfigError(f"unknown wrap mode {wrap!r}")


def neighbor_table(l: int, w: int, wrap: str = "flattened") -> np.ndarray:  # noqa: E741
    """``(l*l, w*w)`` neighbor ids for every block.

    When ``w > l`` the window covers the whole table, so every block gets
    all ``l*l`` blocks (the full-attention limit) instead of an error.
    """
    L2 = l * l
    if w > l:
        return (np.arange(L2)[:, None] + np.arange(L2)[None, :]) % L2
    return np.array([neighbor_indices(i, l, w, wrap) for i in range(L2)], dtype=np.int64)


def effective_window(l: int, w: int) -> int:  # noqa: E741
    """Blocks per side actually covered: ``w`` when it fits, else all ``l``."""
    return w if w <= l else l


def build_stripe_mask(n_padded: int, b: int, w: int, wrap: str = "flattened") -> np.ndarray:
    """Boolean ``(n^2, n^2)`` mask over row-major flattened cells; True = may attend."""
    grid = BlockGrid(n_padded, b)
    _check_window(grid.l, w)
    blocks = grid.block_ids().reshape(-1)
    allowed = np.zeros((grid.num_blocks, grid.num_blocks), dtype=bool)
    nb = neighbor_table(grid.l, w, wrap)
    allowed[np.arange(grid.num_blocks)[:, None], nb] = True
    return allowed[blocks[:, None], blocks[None, :]]


# ---------------------------------------------------------------------------
# FLOP accounting


@dataclass
class FlopLedger:
    score_macs: int = 0
    value_macs: int = 0

    def add(self, other: "FlopLedger") -> None:
        self.score_macs += other.score_macs
        self.value_macs += other.value_macs

    def reset(self) -> None:
        self.score_macs = 0
        self.value_macs = 0


def flops(n_padded: int, b: int, w: int, heads: int, d_prime: int, mode: str = "stripe") -> FlopLedger:
    """Exact multiply-accumulate counts of one attention call on one table.

    Summed over heads, each query-key score costs ``d_prime / heads`` MACs
    per head, i.e. ``d_prime`` in total; the weighted value sum costs the same.
    """
    if d_prime % heads:
        raise ConfigError(f"d_prime={d_prime} is not divisible by heads={heads}")
    grid = BlockGrid(n_padded, b)
    tokens = n_padded * n_padded
    if mode == "stripe":
        _check_window(grid.l, w)
        keys = w * w * b * b
    elif mode == "full":
        keys = tokens
    else:
        raise ConfigError(f"unknown attention mode {mode!r}")
    macs = tokens * keys * d_prime
    return FlopLedger(score_macs=macs, value_macs=macs)


# ---------------------------------------------------------------------------
# parameters and forward passes


@dataclass
class AttentionParams:
    q_w: Parameter
    q_b: Parameter
    k_w: Parameter
    k_b: Parameter
    v_w: Parameter
    v_b: Parameter
    o_w: Parameter
    o_b: Parameter

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, d_prime: int) -> "AttentionParams":
        kw = {}
        for name in ("q", "k", "v", "o"):
            kw[f"{name}_w"] = store.create(f"{prefix}.{name}.weight", (d_prime, d_prime))
            kw[f"{name}_b"] = store.create(f"{prefix}.{name}.bias", (d_prime,), "zeros")
        return cls(**kw)


def _with_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError(f"expected a table of shape (n, n, d) or (B, n, n, d), got {x.shape}")
    return x, False


def _project(x: Tensor, params: AttentionParams) -> tuple[Tensor, Tensor, Tensor]:
    q = linear_forward(x, params.q_w, params.q_b)
    k = linear_forward(x, params.k_w, params.k_b)
    v = linear_forward(x, params.v_w, params.v_b)
    return q, k, v


def _to_blocks(x: np.ndarray, l: int, b: int, heads: int) -> np.ndarray:  # noqa: E741
    """``(B, n, n, D)`` -> ``(B, l*l, heads, b*b, dh)``; cells row-major inside each block."""
    B, _, _, D = x.shape
    dh = D // heads
    t = x.reshape(B, l, b, l, b, heads, dh).transpose(0, 1, 3, 5, 2, 4, 6)
    return t.reshape(B, l * l, heads, b * b, dh)


def _from_blocks(y: np.ndarray, l: int, b: int) -> np.ndarray:  # noqa: E741
    B, _, heads, _, dh = y.shape
    t = y.reshape(B, l, l, heads, b, b, dh).transpose(0, 1, 4, 2, 5, 3, 6)
    return t.reshape(B, l * b, l * b, heads * dh)


def gather_blocks(t: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Neighbor keys per block: ``(B, L, h, bb, dh)`` -> ``(B, L, h, w2*bb, dh)``."""
    B, L, h, bb, dh = t.shape
    g = t[:, table]  # (B, L, w2, h, bb, dh)
    return g.transpose(0, 1, 3, 2, 4, 5).reshape(B, L, h, table.shape[1] * bb, dh)


def scatter_blocks(g: np.ndarray, table: np.ndarray, shape) -> np.ndarray:
    """Adjoint of ``gather_blocks``: sum each gathered slot back into its source block."""
    B, L, h, bb, dh = shape
    g = g.reshape(B, L, h, table.shape[1], bb, dh)
    out = np.zeros(shape)
    for c in range(table.shape[1]):
        col = table[:, c]
        inv = np.empty(L, dtype=np.int64)
        inv[col] = np.arange(L)
        if np.array_equal(col[inv], np.arange(L)):
            # a neighbor-table column is a permutation of the blocks
            out += np.take(g[:, :, :, c], inv, axis=1)
        else:
            np.add.at(out, (slice(None), col), g[:, :, :, c])
    return out


def block_attention(
    q: Tensor, k: Tensor, v: Tensor, l: int, b: int, table: np.ndarray, heads: int, bias=None  # noqa: E741
) -> Tensor:
    """Fused multi-head attention of every block's cells over its neighbor blocks' cells.

    ``q, k, v`` are ``(B, n, n, D)`` projections with ``q`` already scaled;
    ``table[i]`` lists the blocks block ``i`` attends to. ``bias`` is an
    optional additive score array broadcastable to ``(B, L, heads, b*b, keys)``.
    Dense attention is the special case ``l = 1, b = n, table = [[0]]``.
    """
    shape = q.shape
    qb = _to_blocks(q.data, l, b, heads)
    kb = _to_blocks(k.data, l, b, heads)
    vb = _to_blocks(v.data, l, b, heads)
    kn = gather_blocks(kb, table)
    vn = gather_blocks(vb, table)
    scores = qb @ kn.swapaxes(-1, -2)
    if bias is not None:
        scores += bias
    scores -= scores.max(axis=-1, keepdims=True)
    a = np.exp(scores, out=scores)
    a /= a.sum(axis=-1, keepdims=True)
    out = _from_blocks(a @ vn, l, b)

    def back(g):
        gb = _to_blocks(g, l, b, heads)
        gv = a.swapaxes(-1, -2) @ gb
        ga = gb @ vn.swapaxes(-1, -2)
        gs = a * (ga - (ga * a).sum(axis=-1, keepdims=True))
        gq = gs @ kn
        gk = gs.swapaxes(-1, -2) @ qb
        return (
            _from_blocks(gq, l, b) if q.requires_grad else None,
            _from_blocks(scatter_blocks(gk, table, kb.shape), l, b) if k.requires_grad else None,
            _from_blocks(scatter_blocks(gv, table, vb.shape), l, b) if v.requires_grad else None,
        )

    if out.shape != shape:
        raise DimensionError(f"block attention changed shape {shape} -> {out.shape}")
    return Tensor._make(out, (q, k, v), back)


def full_attention_forward(
    x: Tensor,
    params: AttentionParams,
    heads: int,
    mask: np.ndarray | None = None,
    ledger: FlopLedger | None = None,
) -> Tensor:
    """Dense multi-head attention over all ``n*n`` cells of the table.

    ``mask`` is a boolean ``(n^2, n^2)`` array; disallowed scores get an
    additive ``-1e9`` before the softmax.
    """
    x, squeeze = _with_batch(x)
    B, n, _, D = x.shape
    N = n * n
    if D % heads:
        raise ConfigError(f"d_prime={D} is not divisible by heads={heads}")
    bias = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (N, N):
            raise DimensionError(f"mask shape {mask.shape} != ({N}, {N})")
        bias = np.where(mask, 0.0, MASK_FILL)
    q, k, v = _project(x, params)
    # scaling q rather than the scores touches N*D values instead of N*N*heads
    q = q * (1.0 / math.sqrt(D // heads))
    out = block_attention(q, k, v, 1, n, np.zeros((1, 1), dtype=np.int64), heads, bias)
    out = linear_forward(out, params.o_w, params.o_b)
    if ledger is not None:
        ledger.add(FlopLedger(B * N * N * D, B * N * N * D))
    return reshape(out, (n, n, D)) if squeeze else out


def stripe_attention_forward(
    x: Tensor,
    params: AttentionParams,
    cfg: StripeConfig,
    ledger: FlopLedger | None = None,
) -> Tensor:
    """Each cell attends to the cells of its block's ``w x w`` neighborhood."""
    x, squeeze = _with_batch(x)
    B, n, n2, D = x.shape
    if n != n2:
        raise DimensionError(f"table must be square, got {x.shape}")
    if D != cfg.d_prime:
        raise DimensionError(f"table width {D} != d_prime {cfg.d_prime}")
    grid = BlockGrid(n, cfg.b)
    table = neighbor_table(grid.l, cfg.w, cfg.wrap)
    q, k, v = _project(x, params)
    q = q * (1.0 / math.sqrt(D // cfg.heads))
    out = block_attention(q, k, v, grid.l, cfg.b, table, cfg.heads)
    out = linear_forward(out, params.o_w, params.o_b)
    if ledger is not None:
        macs = B * n * n * table.shape[1] * cfg.b * cfg.b * D
        ledger.add(FlopLedger(macs, macs))
    return reshape(out, (n, n, D)) if squeeze else out


# ---------------------------------------------------------------------------
# loop shift


def _table_axes(x: Tensor) -> tuple[int, int]:
    return (x.ndim - 3, x.ndim - 2)


def loop_shift(x: Tensor, s: int) -> Tensor:
    """``out[r, c] = x[(r + s) % n, (c + s) % n]``: move the table up-left by ``s``."""
    return roll(x, (-s, -s), _table_axes(x))


def loop_unshift(x: Tensor, s: int) -> Tensor:
    """Inverse of :func:`loop_shift`: ``out[r, c] = x[(r - s) % n, (c - s) % n]``."""
    return roll(x, (s, s), _table_axes(x))
