"""Relation encoder stacked on the initial table.

A 3x3 convolution produces ``R0``; an even number of pre-norm transformer
layers with stripe attention refine it, each layer ending in a cyclic table
shift (up-left on even layers, back down-right on odd ones so the stack
output is in the original coordinates). The result is blended with ``R0``
through a logistic gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import (
    DimensionError,
    Parameter,
    ParameterStore,
    Tensor,
    concat,
    gelu,
    getitem,
    layer_norm,
    linear_forward,
    pad,
    reshape,
    sigmoid,
)
from .stripe_attention import (
    AttentionParams,
    FlopLedger,
    StripeConfig,
    full_attention_forward,
    loop_shift,
    loop_unshift,
    stripe_attention_forward,
)


@dataclass
class TTConfig:
    d_prime: int = 48
    heads: int = 4
    num_layers: int = 2
    ffn_width: int | None = None
    b: int = 2
    w: int = 3
    attention: str = "stripe"  # or "full"
    loop_shift: bool = True
    wrap: str = "flattened"
    gate: str = "scalar"  # or "vector"

    def __post_init__(self):
        if self.ffn_width is None:
            self.ffn_width = 4 * self.d_prime
        if self.num_layers < 2 or self.num_layers % 2:
            raise ConfigError(f"num_layers must be even and >= 2, got {self.num_layers}")
        if self.ffn_width < self.d_prime:
            raise ConfigError(f"ffn_width {self.ffn_width} < d_prime {self.d_prime}")
        if self.attention not in ("stripe", "full"):
            raise ConfigError(f"attention must be 'stripe' or 'full', got {self.attention!r}")
        if self.gate not in ("scalar", "vector"):
            raise ConfigError(f"gate must be 'scalar' or 'vector', got {self.gate!r}")
        self.stripe  # validates b, w, heads, wrap

    @property
    def shift(self) -> int:
        return self.b // 2

    @property
    def stripe(self) -> StripeConfig:
        return StripeConfig(self.b, self.w, self.heads, self.d_prime, self.wrap)


@dataclass
class TTLayerParams:
    attn: AttentionParams
    ln1_g: Parameter
    ln1_b: Parameter
    ln2_g: Parameter
    ln2_b: Parameter
    ffn1_w: Parameter
    ffn1_b: Parameter
    ffn2_w: Parameter
    ffn2_b: Parameter

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, cfg: TTConfig) -> "TTLayerParams":
        D, F = cfg.d_prime, cfg.ffn_width
        return cls(
            attn=AttentionParams.create(store, f"{prefix}.attn", D),
            ln1_g=store.create(f"{prefix}.ln1.gain", (D,), "ones"),
            ln1_b=store.create(f"{prefix}.ln1.bias", (D,), "zeros"),
            ln2_g=store.create(f"{prefix}.ln2.gain", (D,), "ones"),
            ln2_b=store.create(f"{prefix}.ln2.bias", (D,), "zeros"),
            ffn1_w=store.create(f"{prefix}.ffn1.weight", (D, F)),
            ffn1_b=store.create(f"{prefix}.ffn1.bias", (F,), "zeros"),
            ffn2_w=store.create(f"{prefix}.ffn2.weight", (F, D)),
            ffn2_b=store.create(f"{prefix}.ffn2.bias", (D,), "zeros"),
        )


@dataclass
class ResidualGate:
    gate_logit: Parameter

    @property
    def value(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.gate_logit.data))


@dataclass
class TTParams:
    conv_w: Parameter
    conv_b: Parameter
    layers: list[TTLayerParams] = field(default_factory=list)
    gate: ResidualGate | None = None

    @classmethod
    def create(cls, store: ParameterStore, cfg: TTConfig, prefix: str = "tt", stack: bool = True) -> "TTParams":
        D = cfg.d_prime
        conv_w = store.create(f"{prefix}.conv.weight", (3, 3, D, D))
        conv_b = store.create(f"{prefix}.conv.bias", (D,), "zeros")
        if not stack:
            return cls(conv_w, conv_b)
        layers = [TTLayerParams.create(store, f"{prefix}.layer{i}", cfg) for i in range(cfg.num_layers)]
        gshape = (1,) if cfg.gate == "scalar" else (D,)
        gate = ResidualGate(store.create(f"{prefix}.gate_logit", gshape, "zeros"))
        return cls(conv_w, conv_b, layers, gate)


def conv3_forward(R: Tensor, weight, bias=None) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1, over the two table axes.

    ``weight`` is ``(3, 3, d_in, d_out)``; ``out[i, j] = sum R[i+di-1, j+dj-1] @ weight[di, dj]``.
    """
    w = weight.value if isinstance(weight, Parameter) else weight
    if R.ndim not in (3, 4):
        raise DimensionError(f"conv3 expects (n, n, d) or (B, n, n, d), got {R.shape}")
    squeeze = R.ndim == 3
    if squeeze:
        R = reshape(R, (1,) + R.shape)
    B, n, m, C = R.shape
    if w.shape[:3] != (3, 3, C):
        raise DimensionError(f"conv3 weight {w.shape} incompatible with input channels {C}")
    P = pad(R, ((0, 0), (1, 1), (1, 1), (0, 0)))
    patches = concat(
        [getitem(P, (slice(None), slice(di, di + n), slice(dj, dj + m))) for di in range(3) for dj in range(3)],
        axis=-1,
    )
    out = linear_forward(patches, reshape(w, (9 * C, w.shape[3])), bias)
    return reshape(out, out.shape[1:]) if squeeze else out


def _attention(x: Tensor, lp: TTLayerParams, cfg: TTConfig, ledger: FlopLedger | None) -> Tensor:
    if cfg.attention == "full":
        return full_attention_forward(x, lp.attn, cfg.heads, None, ledger)
    return stripe_attention_forward(x, lp.attn, cfg.stripe, ledger)


def tt_layer_forward(
    x: Tensor,
    lp: TTLayerParams,
    cfg: TTConfig,
    layer_index: int,
    ledger: FlopLedger | None = None,
) -> Tensor:
    y = x + _attention(layer_norm(x, lp.ln1_g, lp.ln1_b), lp, cfg, ledger)
    h = gelu(linear_forward(layer_norm(y, lp.ln2_g, lp.ln2_b), lp.ffn1_w, lp.ffn1_b))
    z = y + linear_forward(h, lp.ffn2_w, lp.ffn2_b)
    if not cfg.loop_shift:
        return z
    if layer_index % 2 == 0:
        return loop_shift(z, cfg.shift)
    return loop_unshift(z, cfg.shift)


def tt_forward(R0: Tensor, params: TTParams, cfg: TTConfig, ledger: FlopLedger | None = None) -> Tensor:
    if len(params.layers) % 2 or not params.layers:
        raise ConfigError(f"the relation stack needs an even number of layers, got {len(params.layers)}")
    x = R0
    for i, lp in enumerate(params.layers):
        x = tt_layer_forward(x, lp, cfg, i, ledger)
    return x


def weighted_residual(RN: Tensor, R0: Tensor, gate: ResidualGate) -> Tensor:
    """``g * RN + (1 - g) * R0`` with ``g = sigmoid(gate_logit)``."""
    if RN.shape != R0.shape:
        raise DimensionError(f"weighted_residual: {RN.shape} != {R0.shape}")
    g = sigmoid(gate.gate_logit.value)
    return g * RN + (1.0 - g) * R0


def relation_encode(
    R: Tensor, params: TTParams, cfg: TTConfig, ledger: FlopLedger | None = None
) -> tuple[Tensor, Tensor]:
    """Conv front plus (optionally) the stack; returns ``(R_final, R0)``."""
    R0 = conv3_forward(R, params.conv_w, params.conv_b)
    if not params.layers:
        return R0, R0
    RN = tt_forward(R0, params, cfg, ledger)
    return weighted_residual(RN, R0, params.gate), R0
