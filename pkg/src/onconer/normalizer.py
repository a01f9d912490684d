"""Code assignment for extracted mentions: exact match, then lowercased match,
then the nearest training surface by Levenshtein distance."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .corpus import Mention

METHODS = ("exact", "lower", "levenshtein")


class GazetteerError(ValueError):
    pass


def _majority(counter: Counter) -> tuple[str, int]:
    # most frequent code; ties go to the lexicographically smallest
    code = min(counter, key=lambda c: (-counter[c], c))
    return code, counter[code]


@dataclass
class Gazetteer:
    exact: dict[str, tuple[str, int]] = field(default_factory=dict)
    lower: dict[str, tuple[str, int]] = field(default_factory=dict)
    entries: list[tuple[str, str]] = field(default_factory=list)
    code_counts: Counter = field(default_factory=Counter)
    pair_counts: Counter = field(default_factory=Counter)  # (surface, code) -> count

    def __len__(self) -> int:
        return len(self.exact)

    def to_tsv(self) -> str:
        """One ``surface<TAB>code<TAB>count`` row per observed (surface, code) pair."""
        return "".join(f"{s}\t{c}\t{n}\n" for (s, c), n in sorted(self.pair_counts.items()))

    @classmethod
    def from_tsv(cls, content: str) -> "Gazetteer":
        pairs = []
        for lineno, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GazetteerError(f"line {lineno}: expected surface<TAB>code<TAB>count")
            try:
                n = int(parts[2])
            except ValueError:
                raise GazetteerError(f"line {lineno}: count must be an integer") from None
            if n <= 0:
                raise GazetteerError(f"line {lineno}: count must be positive")
            pairs.append((parts[0], parts[1], n))
        return build_from_counts(pairs)


def build_from_counts(rows: Iterable[tuple[str, str, int]]) -> Gazetteer:
    by_surface: dict[str, Counter] = defaultdict(Counter)
    by_lower: dict[str, Counter] = defaultdict(Counter)
    codes: Counter = Counter()
    pairs: Counter = Counter()
    for surface, code, n in rows:
        pairs[(surface, code)] += n
        by_surface[surface][code] += n
        by_lower[surface.lower()][code] += n
        codes[code] += n
    gaz = Gazetteer()
    for s, cnt in by_surface.items():
        code, _ = _majority(cnt)
        gaz.exact[s] = (code, sum(cnt.values()))
    for s, cnt in by_lower.items():
        code, _ = _majority(cnt)
        gaz.lower[s] = (code, sum(cnt.values()))
    gaz.entries = sorted((s, c) for s, (c, _) in gaz.lower.items())
    gaz.code_counts = codes
    gaz.pair_counts = pairs
    return gaz


def build_gazetteer(mentions: Iterable[Mention]) -> Gazetteer:
    """Gazetteer from coded training mentions. A surface seen with several codes
    keeps its most frequent one (ties: smallest code string)."""
    rows = []
    for m in mentions:
        if m.code is None:
            raise GazetteerError(f"training mention {m.surface!r} at {m.span} has no code")
        rows.append((m.surface, m.code, 1))
    return build_from_counts(rows)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class NormalizationResult:
    code: str
    method: str
    distance: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "levenshtein" and self.distance != 0:
            raise ValueError("exact/lower matches have distance 0")


def nearest(gaz: Gazetteer, surface: str) -> tuple[str, int]:
    """Closest lowercased entry; ties: higher global code count, then smaller code."""
    query = surface.lower()
    best: tuple[int, int, str] | None = None  # (distance, -count, code)
    for entry, code in gaz.entries:
        if best is not None and abs(len(entry) - len(query)) > best[0]:
            continue
        key = (levenshtein(query, entry), -gaz.code_counts[code], code)
        if best is None or key < best:
            best = key
    return best[2], best[0]


def normalize(gaz: Gazetteer, surface: str, max_stage: int = 3) -> NormalizationResult | None:
    """Run the cascade up to ``max_stage`` (1 exact, 2 lowercase, 3 distance).

    With all three stages a result is always returned.
    """
    if not gaz.exact:
        raise GazetteerError("empty gazetteer")
    hit = gaz.exact.get(surface)
    if hit is not None:
        return NormalizationResult(hit[0], "exact")
    if max_stage >= 2:
        hit = gaz.lower.get(surface.lower())
        if hit is not None:
            return NormalizationResult(hit[0], "lower")
    if max_stage >= 3:
        code, dist = nearest(gaz, surface)
        return NormalizationResult(code, "levenshtein", dist)
    return None


def normalize_mentions(gaz: Gazetteer, mentions: Iterable[Mention]) -> list[Mention]:
    return [m.with_code(normalize(gaz, m.surface).code) for m in mentions]


@dataclass
class StageReport:
    method: str
    correct: int
    false: int
    unmatched: int


def cascade_report(gaz: Gazetteer, gold: Iterable[Mention]) -> list[StageReport]:
    """Correct/false/unmatched counts after each cumulative stage, on gold
    mentions with codes."""
    gold = list(gold)
    out = []
    for stage, method in enumerate(METHODS, start=1):
        correct = false = unmatched = 0
        for m in gold:
            res = normalize(gaz, m.surface, max_stage=stage)
            if res is None:
                unmatched += 1
            elif res.code == m.code:
                correct += 1
            else:
                false += 1
        out.append(StageReport(method, correct, false, unmatched))
    return out
