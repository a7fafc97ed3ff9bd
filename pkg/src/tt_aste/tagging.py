"""Boundary-vertex tagging of sentiment triplets on an n x n table.

Rows index the aspect axis, columns the opinion axis. A triplet with aspect
``[x, y]`` and opinion ``[m, n']`` covers the rectangle whose top-left cell
is ``(x, m)`` and bottom-right cell is ``(y, n')``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


from .errors import DataError, GeometryError


class DataValidationError(DataError):
    pass


class Polarity(str, enum.Enum):
    POS = "POS"
    NEU = "NEU"
    NEG = "NEG"

    @classmethod
    def parse(cls, s: str) -> "Polarity":
        if isinstance(s, cls):
            return s
        key = str(s).strip().upper()
        aliases = {"POSITIVE": "POS", "NEUTRAL": "NEU", "NEGATIVE": "NEG"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DataValidationError(f"unknown polarity {s!r}") from None


POLARITIES = (Polarity.POS, Polarity.NEU, Polarity.NEG)


class Span(NamedTuple):
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def validate(self, n: int) -> None:
        if not (0 <= self.start <= self.end < n):
            raise DataValidationError(f"span [{self.start}, {self.end}] outside sentence of length {n}")


class Triplet(NamedTuple):
    aspect: Span
    opinion: Span
    polarity: Polarity


class Pair(NamedTuple):
    """Aspect-opinion pair (the sentiment-free variant of a triplet)."""

    aspect: Span
    opinion: Span


def make_triplet(aspect, opinion, polarity) -> Triplet:
    return Triplet(Span(*aspect), Span(*opinion), Polarity.parse(polarity) if isinstance(polarity, str) else polarity)


@dataclass
class SentenceRecord:
    tokens: list[str]
    triplets: list[Triplet] = field(default_factory=list)

    def __post_init__(self):
        self.triplets = [t if isinstance(t, Triplet) else make_triplet(*t) for t in self.triplets]

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        n = len(self.tokens)
        if n < 1:
            raise DataValidationError("sentence has no tokens")
        seen: dict[tuple, Polarity] = {}
        for t in self.triplets:
            t.aspect.validate(n)
            t.opinion.validate(n)
            if not isinstance(t.polarity, Polarity):
                raise DataValidationError(f"bad polarity {t.polarity!r}")
            key = (t.aspect, t.opinion)
            if key in seen and seen[key] != t.polarity:
                raise DataValidationError(
                    f"aspect {tuple(t.aspect)} / opinion {tuple(t.opinion)} labelled with two polarities"
                )
            seen[key] = t.polarity


Cell = tuple[int, int]


@dataclass
class Region:
    tl: Cell
    br: Cell
    sentiment: Polarity | None  # None for pair-only regions


@dataclass
class TableLabels:
    n: int
    tl: np.ndarray  # (n, n) of {0, 1}
    br: np.ndarray
    regions: list[Region]

    def validate(self) -> None:
        for r in self.regions:
            (x, m), (y, n2) = r.tl, r.br
            if not (x <= y and m <= n2):
                raise GeometryError(f"region TL {r.tl} is not above-left of BR {r.br}")


def encode_labels(record: SentenceRecord) -> TableLabels:
    n = len(record.tokens)
    tl = np.zeros((n, n), dtype=np.int64)
    br = np.zeros((n, n), dtype=np.int64)
    regions = []
    for t in record.triplets:
        x, y = t.aspect
        m, n2 = t.opinion
        tl[x, m] = 1
        br[y, n2] = 1
        regions.append(Region((x, m), (y, n2), t.polarity))
    return TableLabels(n, tl, br, regions)


def region_to_triplet(tl: Cell, br: Cell, sentiment) -> Triplet | Pair:
    (x, m), (y, n2) = tl, br
    if not (x <= y and m <= n2):
        raise GeometryError(f"TL {tl} is not above-left of BR {br}")
    if sentiment is None:
        return Pair(Span(x, y), Span(m, n2))
    return Triplet(Span(x, y), Span(m, n2), sentiment)


def decode_regions(labels: TableLabels) -> list[Triplet]:
    return [region_to_triplet(r.tl, r.br, r.sentiment) for r in labels.regions]


def pad_length(n: int, b: int) -> int:
    if n < 1 or b < 1:
        raise ValueError(f"pad_length needs n >= 1 and b >= 1, got n={n}, b={b}")
    return -(-n // b) * b


def aspect_opinion_distance(t) -> int:
    """Nearest-end token gap between aspect and opinion spans (0 if they overlap)."""
    a, o = t.aspect, t.opinion
    if a.end < o.start:
        return o.start - a.end
    if o.end < a.start:
        return a.start - o.end
    return 0


def span_types(t) -> tuple[str, ...]:
    """Categories of a triplet: ``single``, or any of ``multi_aspect`` / ``multi_opinion``."""
    kinds = []
    if t.aspect.length > 1:
        kinds.append("multi_aspect")
    if t.opinion.length > 1:
        kinds.append("multi_opinion")
    return tuple(kinds) or ("single",)
