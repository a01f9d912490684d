"""Per-document ranked code lists."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import Mention


@dataclass
class CodeRanking:
    doc_id: str
    codes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.codes)) != len(self.codes):
            raise ValueError(f"{self.doc_id}: duplicate codes in ranking")


def rank_codes(mentions: Iterable[Mention], global_counts: Mapping[str, int],
               doc_id: str = "") -> CodeRanking:
    """Order codes by in-document count, then training-set count, then code string."""
    local = Counter(m.code for m in mentions if m.code is not None)
    order = sorted(local, key=lambda c: (-local[c], -global_counts.get(c, 0), c))
    return CodeRanking(doc_id, order)
