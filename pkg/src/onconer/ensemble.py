"""Offset-level majority voting over mention sets from several models."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import Mention


@dataclass(frozen=True)
class VoteConfig:
    quorum: int = 2
    members: int = 3

    def __post_init__(self):
        if not 1 <= self.quorum <= self.members:
            raise ValueError(f"quorum {self.quorum} must lie in [1, {self.members}]")


def majority_vote(predictions: Sequence[Sequence[Mention]], config: VoteConfig = VoteConfig(),
                  doc_ids: Sequence[str] | None = None) -> list[Mention]:
    """Keep a span iff at least ``quorum`` members predicted exactly its offsets.

    Each member votes at most once per span. The label comes from the first
    agreeing member and codes are dropped.
    """
    if len(predictions) != config.members:
        raise ValueError(f"expected {config.members} member predictions, got {len(predictions)}")
    if doc_ids is not None and len(set(doc_ids)) > 1:
        raise ValueError(f"predictions refer to different documents: {sorted(set(doc_ids))}")
    votes: Counter = Counter()
    first: dict[tuple[int, int], Mention] = {}
    for member in predictions:
        spans = {}
        for m in member:
            spans.setdefault(m.span, m)
        for span, m in spans.items():
            votes[span] += 1
            first.setdefault(span, m)
    kept = [first[s].with_code(None) for s, n in votes.items() if n >= config.quorum]
    return sorted(kept, key=lambda m: (m.start, m.end))
