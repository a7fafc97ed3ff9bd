"""Attention cost sweep.

Score MACs grow quadratically in the block width b at fixed n and w, while
full attention grows as n^4. Wall time follows the MACs only roughly at
these sizes, since numpy call overhead dominates small tables.
"""

import sys

from tt_aste.harness import bench, rows_to_csv

sweep = [(16, 1, 3), (16, 2, 3), (16, 4, 3), (32, 2, 3), (32, 4, 3)]
rows = bench(sweep, heads=4, d_prime=48, reps=3)
rows_to_csv(rows, sys.stdout)

stripe = {(r["n"], r["b"]): r["score_macs"] for r in rows if r["mode"] == "stripe"}
print()
print("b 2 -> 4 at n=16 multiplies score MACs by", stripe[(16, 4)] / stripe[(16, 2)])
full = {r["n"]: r["score_macs"] for r in rows if r["mode"] == "full"}
print("n 16 -> 32 multiplies full MACs by", full[32] / full[16])
