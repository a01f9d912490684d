"""Tumor-mention extraction, ICD-O-3 normalization and ranked document coding."""

from . import biaffine, crf  # noqa: F401  (registers the model kinds)
from .corpus import Document, Mention, Token, load_corpus, parse_ann, tokenize, write_ann

__version__ = "0.1.0"

__all__ = ["Document", "Mention", "Token", "load_corpus", "parse_ann", "tokenize", "write_ann"]
