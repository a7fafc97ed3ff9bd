"""Attention cost sweeps: forward wall time next to exact MAC counts."""

from __future__ import annotations

import csv
import io
import statistics
import time
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError
from ..numerics import ParameterStore, Tensor
from ..stripe_attention import (
    AttentionParams,
    BlockGrid,
    FlopLedger,
    StripeConfig,
    full_attention_forward,
    stripe_attention_forward,
)

CSV_COLUMNS = ("mode", "n", "b", "w", "heads", "d_prime", "score_macs", "value_macs", "median_ms", "ratio")

# (n, b, w): twelve points with w <= n/b, including n=16 at b=2 and b=4
DEFAULT_SWEEP: tuple = (
    (8, 1, 1), (8, 1, 3), (8, 2, 1), (8, 2, 3),
    (12, 2, 3), (12, 3, 1), (16, 1, 3), (16, 2, 3),
    (16, 4, 1), (16, 4, 3), (24, 4, 3), (32, 4, 3),
)


def parse_sweep(text: str) -> list[tuple[int, int, int]]:
    """``"16:4:3,8:2:1"`` -> ``[(16, 4, 3), (8, 2, 1)]``."""
    points = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n, b, w = (int(v) for v in item.split(":"))
        except ValueError:
            raise ConfigError(f"sweep point {item!r} is not n:b:w") from None
        points.append((n, b, w))
    if not points:
        raise ConfigError("empty sweep")
    return points


def _time_ms(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times)


def bench(
    sweep: Iterable[tuple[int, int, int]] = DEFAULT_SWEEP,
    heads: int = 4,
    d_prime: int = 48,
    reps: int = 3,
    seed: int = 0,
    wrap: str = "flattened",
    modes: Sequence[str] = ("stripe", "full"),
) -> list[dict]:
    """One row per (point, mode); ``ratio`` is stripe score MACs over full score MACs.

    Timings cover a single-table forward pass. MAC counts come from the
    ledger filled during the timed calls, divided by the repetitions.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    rows = []
    for n, b, w in sweep:
        grid = BlockGrid(n, b)
        if w > grid.l:
            raise ConfigError(f"sweep point n={n}, b={b}: w={w} exceeds l={grid.l}")
        cfg = StripeConfig(b, w, heads, d_prime, wrap)
        store = ParameterStore(seed)
        params = AttentionParams.create(store, "bench", d_prime)
        x = Tensor(np.random.default_rng(seed).normal(size=(n, n, d_prime)))
        point = {}
        for mode in modes:
            ledger = FlopLedger()
            if mode == "stripe":
                fn = lambda: stripe_attention_forward(x, params, cfg, ledger)  # noqa: E731
            elif mode == "full":
                fn = lambda: full_attention_forward(x, params, heads, None, ledger)  # noqa: E731
            else:
                raise ConfigError(f"unknown bench mode {mode!r}")
            ms = _time_ms(fn, reps)
            point[mode] = {
                "mode": mode, "n": n, "b": b, "w": w, "heads": heads, "d_prime": d_prime,
                "score_macs": ledger.score_macs // reps, "value_macs": ledger.value_macs // reps,
                "median_ms": ms,
            }
        full_macs = n**4 * d_prime
        for mode, row in point.items():
            row["ratio"] = Fraction(row["score_macs"], full_macs)
            rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[dict], fh=None) -> str:
    """Write rows as CSV (ratio as a decimal); returns the text when no handle is given."""
    out = fh or io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        r = dict(row)
        r["median_ms"] = f"{row['median_ms']:.4f}"
        r["ratio"] = repr(float(row["ratio"]))
        writer.writerow(r)
    return out.getvalue() if fh is None else ""
