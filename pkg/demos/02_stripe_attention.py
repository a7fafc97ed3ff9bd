"""Stripe attention: who attends to whom, and what it costs.

The table is cut into b x b blocks, giving an l x l grid of blocks
(l = n / b). A query cell only looks at the w x w neighborhood of its own
block, with indices wrapping around the flattened block sequence.
"""

from fractions import Fraction

import numpy as np

from tt_aste.numerics import ParameterStore, Tensor
from tt_aste.stripe_attention import (
    AttentionParams,
    StripeConfig,
    build_stripe_mask,
    flops,
    full_attention_forward,
    neighbor_indices,
    stripe_attention_forward,
)

# neighbors of block 0 on a 4 x 4 block grid with a 3 x 3 window
l, w = 4, 3
nb = set(neighbor_indices(0, l, w))
for r in range(l):
    print(" ".join("#" if r * l + c in nb else "." for c in range(l)))
print(sorted(nb))
print()

# the same thing seen from the cells: row sums of the cell-level mask
n, b = 8, 2
mask = build_stripe_mask(n, b, w)
print("cells per query:", sorted({int(v) for v in mask.sum(axis=1)}), "of", n * n)

# the gathered kernel agrees with dense attention under that mask
store = ParameterStore(seed=0, init_scale=0.3)
params = AttentionParams.create(store, "demo", 16)
x = Tensor(np.random.default_rng(1).normal(size=(n, n, 16)))
cfg = StripeConfig(b=b, w=w, heads=4, d_prime=16)
stripe = stripe_attention_forward(x, params, cfg).data
dense = full_attention_forward(x, params, 4, mask).data
print("max |stripe - masked dense| =", np.abs(stripe - dense).max())

# with w = l the window covers every block
cfg_all = StripeConfig(b=2, w=3, heads=4, d_prime=16)
x6 = Tensor(np.random.default_rng(2).normal(size=(6, 6, 16)))
gap = np.abs(stripe_attention_forward(x6, params, cfg_all).data - full_attention_forward(x6, params, 4).data).max()
print("w = l, max |stripe - full| =", gap)
print()

# score MACs relative to full attention: w^2 b^2 / n^2
print(" n  b  w  ratio")
for n, b, w in [(16, 4, 3), (16, 2, 3), (32, 4, 3), (64, 4, 3), (64, 8, 3)]:
    s = flops(n, b, w, 4, 48, "stripe").score_macs
    f = flops(n, b, w, 4, 48, "full").score_macs
    print(f"{n:2d} {b:2d} {w:2d}  {Fraction(s, f)}")
