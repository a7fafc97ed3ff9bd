"""Corpus loading (JSONL and ``####`` formats) and a seeded synthetic generator."""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .tagging import (
    Polarity,
    SentenceRecord,
    Span,
    Triplet,
    aspect_opinion_distance,
)


class LoadError(DataError):
    pass


class GenerationError(DataError):
    pass


@dataclass
class CorpusFile:
    records: list[SentenceRecord]
    source_format: str = "jsonl"

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def num_triplets(self) -> int:
        return sum(len(r.triplets) for r in self.records)


# ---------------------------------------------------------------------------
# JSONL


def _record_from_obj(obj, where: str) -> SentenceRecord:
    if not isinstance(obj, dict) or "tokens" not in obj:
        raise LoadError(f"{where}: expected an object with a 'tokens' field")
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise LoadError(f"{where}: 'tokens' must be a list of strings")
    trips = []
    for k, t in enumerate(obj.get("triplets", [])):
        try:
            a, o = t["aspect"], t["opinion"]
            trip = Triplet(Span(int(a[0]), int(a[1])), Span(int(o[0]), int(o[1])), Polarity.parse(t["polarity"]))
        except DataError as e:
            raise LoadError(f"{where}, triplet {k}: {e}") from None
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise LoadError(f"{where}, triplet {k}: malformed triplet ({e})") from None
        trips.append(trip)
    rec = SentenceRecord(list(tokens), trips)
    try:
        rec.validate()
    except DataError as e:
        raise LoadError(f"{where}: {e}") from None
    return rec


def load_jsonl(path) -> CorpusFile:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise LoadError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            records.append(_record_from_obj(obj, f"{path}:{lineno}"))
    return CorpusFile(records, "jsonl")


def record_to_json(rec: SentenceRecord) -> dict:
    return {
        "tokens": list(rec.tokens),
        "triplets": [
            {"aspect": [t.aspect.start, t.aspect.end], "opinion": [t.opinion.start, t.opinion.end], "polarity": t.polarity.value}
            for t in rec.triplets
        ],
    }


def write_jsonl(corpus: CorpusFile | Iterable[SentenceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# "sentence####[([a...], [o...], 'POS'), ...]"

HASH_DELIM = "####"


def _indices_to_span(idx, where: str) -> Span:
    if not isinstance(idx, (list, tuple)) or not idx or not all(isinstance(i, int) for i in idx):
        raise LoadError(f"{where}: index list must be a non-empty list of integers, got {idx!r}")
    if list(idx) != list(range(idx[0], idx[0] + len(idx))):
        raise LoadError(f"{where}: index list {list(idx)} is not contiguous")
    return Span(idx[0], idx[-1])


def load_hash_format(path) -> CorpusFile:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            if HASH_DELIM not in line:
                raise LoadError(f"{where}: missing '{HASH_DELIM}' delimiter")
            sentence, literal = line.split(HASH_DELIM, 1)
            try:
                items = ast.literal_eval(literal.strip())
            except (ValueError, SyntaxError):
                raise LoadError(f"{where}: unparsable triplet list {literal.strip()!r}") from None
            if not isinstance(items, list):
                raise LoadError(f"{where}: triplet literal must be a list")
            trips = []
            for item in items:
                if not (isinstance(item, tuple) and len(item) == 3):
                    raise LoadError(f"{where}: each triplet must be an (aspect, opinion, polarity) tuple")
                a, o, s = item
                try:
                    pol = Polarity.parse(s)
                except DataError as e:
                    raise LoadError(f"{where}: {e}") from None
                trips.append(Triplet(_indices_to_span(a, where), _indices_to_span(o, where), pol))
            rec = SentenceRecord(sentence.split(), trips)
            try:
                rec.validate()
            except DataError as e:
                raise LoadError(f"{where}: {e}") from None
            records.append(rec)
    return CorpusFile(records, "hash")


def write_hash_format(corpus: CorpusFile | Iterable[SentenceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            items = [
                (list(range(t.aspect.start, t.aspect.end + 1)), list(range(t.opinion.start, t.opinion.end + 1)), t.polarity.value)
                for t in rec.triplets
            ]
            fh.write(" ".join(rec.tokens) + HASH_DELIM + repr(items) + "\n")


def load_corpus(path) -> CorpusFile:
    """Pick the loader from the extension: ``.jsonl``/``.json`` or anything else as ``####``."""
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".json"):
        return load_jsonl(path)
    return load_hash_format(path)


# ---------------------------------------------------------------------------
# synthetic corpora

DEFAULT_BUCKETS: tuple = ((1, 3, 0.5), (4, 6, 0.3), (7, 9, 0.2))


@dataclass
class SynthConfig:
    """Synthetic corpus parameters.

    Each sentence is a chain of clauses joined by separator words; a clause
    holds one aspect span and one opinion span (either order) whose
    nearest-end distance is drawn from a weighted bucket. Opinion words come
    from a per-polarity lexicon, so polarity is readable from the opinion
    span; filler words never appear inside spans.
    """

    num_sentences: int = 2000
    vocab_size: int = 200
    length_range: tuple[int, int] = (6, 20)
    triplets_range: tuple[int, int] = (1, 2)
    distance_buckets: Sequence[tuple[int, int, float]] = DEFAULT_BUCKETS
    multiword_aspect: float = 0.3
    multiword_opinion: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise GenerationError(f"bad length range {self.length_range}")
        tlo, thi = self.triplets_range
        if not 0 <= tlo <= thi:
            raise GenerationError(f"bad triplets-per-sentence range {self.triplets_range}")
        if not self.distance_buckets:
            raise GenerationError("need at least one distance bucket")
        for blo, bhi, w in self.distance_buckets:
            if not 1 <= blo <= bhi or w < 0:
                raise GenerationError(f"bad distance bucket {(blo, bhi, w)}")
        if sum(w for _, _, w in self.distance_buckets) <= 0:
            raise GenerationError("distance bucket weights must include a positive value")
        if self.vocab_size < 24:
            raise GenerationError("synthetic vocabulary needs at least 24 words")
        for p in (self.multiword_aspect, self.multiword_opinion):
            if not 0 <= p <= 1:
                raise GenerationError(f"multiword probability {p} outside [0, 1]")
        shortest = min(blo for blo, _, w in self.distance_buckets if w > 0)
        need = max(tlo, 1)
        # each clause needs its two one-word spans plus the gap; clauses are joined by separators
        if need * (shortest + 1) + (need - 1) > hi:
            raise GenerationError(
                f"{need} triplet(s) at distance >= {shortest} cannot fit in sentences of at most {hi} tokens"
            )


@dataclass
class SynthLexicon:
    aspects: list[str]
    opinions: dict[Polarity, list[str]]
    fillers: list[str]
    separators: list[str]

    @classmethod
    def build(cls, vocab_size: int) -> "SynthLexicon":
        n_sep = 3
        n_asp = max(4, vocab_size // 5)
        n_op = max(3, vocab_size // 10)
        n_fill = vocab_size - n_sep - n_asp - 3 * n_op
        if n_fill < 3:
            raise GenerationError(f"vocab_size {vocab_size} leaves no room for filler words")
        return cls(
            aspects=[f"asp{i}" for i in range(n_asp)],
            opinions={p: [f"{p.value.lower()}{i}" for i in range(n_op)] for p in Polarity},
            fillers=[f"w{i}" for i in range(n_fill)],
            separators=[f"sep{i}" for i in range(n_sep)],
        )


def _pick(rng: np.random.Generator, words: list[str], k: int) -> list[str]:
    return [words[int(i)] for i in rng.integers(0, len(words), size=k)]


def _make_clause(rng, cfg: SynthConfig, lex: SynthLexicon, buckets, probs):
    """Returns (tokens, aspect_span, opinion_span, polarity) with clause-local spans."""
    blo, bhi, _ = buckets[int(rng.choice(len(buckets), p=probs))]
    dist = int(rng.integers(blo, bhi + 1))
    pol = list(Polarity)[int(rng.integers(0, 3))]
    a_len = 2 if rng.random() < cfg.multiword_aspect else 1
    o_len = 2 if rng.random() < cfg.multiword_opinion else 1
    aspect = _pick(rng, lex.aspects, a_len)
    opinion = _pick(rng, lex.opinions[pol], o_len)
    gap = _pick(rng, lex.fillers, dist - 1)
    if rng.random() < 0.5:
        toks = aspect + gap + opinion
        a_span = (0, a_len - 1)
        o_span = (a_len + dist - 1, a_len + dist - 1 + o_len - 1)
    else:
        toks = opinion + gap + aspect
        o_span = (0, o_len - 1)
        a_span = (o_len + dist - 1, o_len + dist - 1 + a_len - 1)
    return toks, a_span, o_span, pol


def generate_synthetic(cfg: SynthConfig, max_tries: int = 200) -> CorpusFile:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lex = SynthLexicon.build(cfg.vocab_size)
    buckets = [b for b in cfg.distance_buckets if b[2] > 0]
    weights = np.array([b[2] for b in buckets], dtype=float)
    probs = weights / weights.sum()
    lo, hi = cfg.length_range
    records = []
    for _ in range(cfg.num_sentences):
        for _attempt in range(max_tries):
            k = int(rng.integers(cfg.triplets_range[0], cfg.triplets_range[1] + 1))
            clauses = [_make_clause(rng, cfg, lex, buckets, probs) for _ in range(k)]
            core = sum(len(c[0]) for c in clauses) + max(k - 1, 0)
            if core <= hi:
                break
        else:
            raise GenerationError(f"could not fit {cfg.triplets_range} triplets in {hi} tokens after {max_tries} tries")
        target = int(rng.integers(max(lo, core), hi + 1))
        # extra filler goes before/after clauses, never inside the aspect-opinion gap
        slots = np.zeros(k + 1, dtype=int)
        for _ in range(target - core):
            slots[int(rng.integers(0, k + 1))] += 1
        tokens: list[str] = []
        trips = []
        for ci, (ctoks, a_span, o_span, pol) in enumerate(clauses):
            tokens += _pick(rng, lex.fillers, int(slots[ci]))
            if ci > 0:
                tokens += _pick(rng, lex.separators, 1)
            off = len(tokens)
            tokens += ctoks
            trips.append(Triplet(Span(a_span[0] + off, a_span[1] + off), Span(o_span[0] + off, o_span[1] + off), pol))
        tokens += _pick(rng, lex.fillers, int(slots[k]))
        if not tokens:
            tokens = _pick(rng, lex.fillers, max(lo, 1))
        rec = SentenceRecord(tokens, trips)
        rec.validate()
        records.append(rec)
    return CorpusFile(records, "synthetic")


def split_corpus(records: Sequence[SentenceRecord], fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/dev/test split keyed on a hash of the record index."""
    train, dev, test = [], [], []
    c1 = fractions[0]
    c2 = fractions[0] + fractions[1]
    for i, r in enumerate(records):
        # Knuth multiplicative hash mapped to [0, 1)
        u = ((i * 2654435761) % 2**32) / 2**32
        (train if u < c1 else dev if u < c2 else test).append(r)
    return train, dev, test


def distance_histogram(records: Iterable[SentenceRecord], buckets) -> list[int]:
    counts = [0] * len(buckets)
    for r in records:
        for t in r.triplets:
            d = aspect_opinion_distance(t)
            for k, (lo, hi, *_rest) in enumerate(buckets):
                if lo <= d <= (math.inf if hi is None else hi):
                    counts[k] += 1
                    break
    return counts
