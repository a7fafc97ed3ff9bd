"""Table-Transformer relation encoder for aspect sentiment triplet extraction.

A sentence becomes an ``n x n`` relation table; stacked transformer layers
with block-sparse ("stripe") attention and cyclic loop-shifts refine it, and
boundary vertices of sentiment rectangles are decoded into triplets. All
arithmetic is float64 numpy with a small reverse-mode autograd.
"""

from .errors import ConfigError, DataError, GeometryError
from .model import ModelConfig, TTModel, make_batch
from .tagging import Pair, Polarity, SentenceRecord, Span, Triplet, make_triplet

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "GeometryError",
    "ModelConfig", "TTModel", "make_batch",
    "Pair", "Polarity", "SentenceRecord", "Span", "Triplet", "make_triplet",
]
