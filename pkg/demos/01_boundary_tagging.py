"""Boundary tagging on one sentence.

A triplet becomes a rectangle in the n x n relation table: rows index the
aspect, columns index the opinion. Only the two corner cells are tagged.
"""

import numpy as np

from tt_aste.tagging import SentenceRecord, decode_regions, encode_labels, make_triplet

tokens = "the battery life is great but the screen looks rather dim".split()
rec = SentenceRecord(tokens, [
    make_triplet((1, 2), (4, 4), "POS"),     # battery life -> great
    make_triplet((7, 7), (9, 10), "NEG"),    # screen -> rather dim
])
rec.validate()

lab = encode_labels(rec)

# 'T' marks a top-left vertex, 'B' a bottom-right one, '*' both
grid = np.full((len(tokens), len(tokens)), ".")
grid[lab.tl == 1] = "T"
grid[(lab.br == 1) & (lab.tl == 1)] = "*"
grid[(lab.br == 1) & (lab.tl == 0)] = "B"
width = max(map(len, tokens))
print(" " * (width + 1) + " ".join(t[0] for t in tokens))
for tok, row in zip(tokens, grid):
    print(tok.rjust(width), " ".join(row))

for r in lab.regions:
    print("region", r.tl, "->", r.br, r.sentiment.value)

# decoding reads the rectangles back into spans
for t in decode_regions(lab):
    a = " ".join(tokens[t.aspect.start : t.aspect.end + 1])
    o = " ".join(tokens[t.opinion.start : t.opinion.end + 1])
    print(f"({a!r}, {o!r}, {t.polarity.value})")
assert set(decode_regions(lab)) == set(rec.triplets)
