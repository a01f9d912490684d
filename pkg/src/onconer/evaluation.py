"""Scores for extraction, normalization and ranked coding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Mention, tokenize


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, tp, fp, fn)


def _pooled(gold_sets: Iterable[set], pred_sets: Iterable[set]) -> PRF:
    tp = fp = fn = 0
    for g, p in zip(gold_sets, pred_sets):
        tp += len(g & p)
        fp += len(p - g)
        fn += len(g - p)
    return PRF.from_counts(tp, fp, fn)


def _as_docs(x) -> list[list[Mention]]:
    # a flat list of mentions is treated as one document
    x = list(x)
    if x and isinstance(x[0], Mention):
        return [x]
    return [list(d) for d in x]


def _aligned(gold, predicted) -> tuple[list[list[Mention]], list[list[Mention]]]:
    g, p = _as_docs(gold), _as_docs(predicted)
    # an empty list next to a single flat document is that document's empty side
    if len(g) == 1 and not p and isinstance(list(gold)[0], Mention):
        p = [[]]
    elif len(p) == 1 and not g and isinstance(list(predicted)[0], Mention):
        g = [[]]
    if len(g) != len(p):
        raise ValueError("gold and predictions cover different numbers of documents")
    return g, p


def ner_prf(gold, predicted) -> PRF:
    """Micro P/R/F1 on exact (start, end) matches, pooled over documents.

    Both arguments are per-document mention lists in the same document order
    (a single flat list counts as one document). Duplicates count once.
    """
    gold, predicted = _aligned(gold, predicted)
    return _pooled(({m.span for m in d} for d in gold), ({m.span for m in d} for d in predicted))


def norm_prf(gold, predicted, exclude_code: str | None = None) -> PRF:
    """Like :func:`ner_prf` but a match also needs the same code.

    ``exclude_code`` drops mentions carrying that code from both sides first.
    """
    gold, predicted = _aligned(gold, predicted)

    def keyed(doc):
        return {(m.start, m.end, m.code) for m in doc if exclude_code is None or m.code != exclude_code}

    return _pooled((keyed(d) for d in gold), (keyed(d) for d in predicted))


def average_precision(gold: Iterable[str], ranking: Sequence[str]) -> float:
    gold = set(gold)
    if len(set(ranking)) != len(ranking):
        raise ValueError(f"ranking has duplicate codes: {list(ranking)}")
    if not gold:
        return 0.0
    hits, total = 0, 0.0
    for k, code in enumerate(ranking, start=1):
        if code in gold:
            hits += 1
            total += hits / k
    return total / len(gold)


def map_score(pairs: Iterable[tuple[Iterable[str], Sequence[str]]]) -> float:
    """Unweighted mean AP over (gold codes, ranking) pairs; documents with an
    empty gold set score 0 and still count."""
    aps = [average_precision(g, r) for g, r in pairs]
    return sum(aps) / len(aps) if aps else 0.0


def coding_map(gold: Mapping[str, Sequence[str]], predicted: Mapping[str, Sequence[str]],
               exclude_code: str | None = None) -> float:
    """MAP over the documents of ``gold``; missing predictions are empty rankings."""
    pairs = []
    for doc_id in sorted(gold):
        g = [c for c in gold[doc_id] if c != exclude_code]
        r = [c for c in predicted.get(doc_id, []) if c != exclude_code]
        pairs.append((g, r))
    return map_score(pairs)


def coding_prf(gold: Mapping[str, Sequence[str]], predicted: Mapping[str, Sequence[str]],
               exclude_code: str | None = None) -> PRF:
    """Set-level P/R/F1 of the coded (document, code) pairs."""
    docs = sorted(set(gold) | set(predicted))

    def keyed(src, d):
        return {c for c in src.get(d, []) if c != exclude_code}

    return _pooled((keyed(gold, d) for d in docs), (keyed(predicted, d) for d in docs))


# ---------------------------------------------------------------------------
# length analysis

BUCKETS = [str(n) for n in range(1, 11)] + ["11+"]


def bucket_of(n_tokens: int) -> str:
    return "11+" if n_tokens > 10 else str(max(1, n_tokens))


@dataclass(frozen=True)
class LengthBucket:
    key: str
    prf: PRF
    frequency: float
    gold_count: int
    pred_count: int


def length_report(gold, predicted, tokenizer: Callable[[str], list] = tokenize,
                  with_codes: bool = False) -> list[LengthBucket]:
    """Per-length-bucket scores. Gold mentions are bucketed by their token count
    (recall side, frequency); predictions by theirs (precision side).

    Buckets with neither gold nor predicted mentions are omitted.
    """
    gold, predicted = _aligned(gold, predicted)

    def key(m):
        return (m.start, m.end, m.code) if with_codes else (m.start, m.end)

    stats = {b: [0, 0, 0, 0, 0] for b in BUCKETS}  # tp_pred, fp, tp_gold, fn, n_gold
    total_gold = 0
    for g_doc, p_doc in zip(gold, predicted):
        g_keys = {key(m) for m in g_doc}
        p_keys = {key(m) for m in p_doc}
        seen = set()
        for m in g_doc:
            if key(m) in seen:
                continue
            seen.add(key(m))
            b = bucket_of(len(tokenizer(m.surface)))
            total_gold += 1
            stats[b][4] += 1
            if key(m) in p_keys:
                stats[b][2] += 1
            else:
                stats[b][3] += 1
        seen = set()
        for m in p_doc:
            if key(m) in seen:
                continue
            seen.add(key(m))
            b = bucket_of(len(tokenizer(m.surface)))
            if key(m) in g_keys:
                stats[b][0] += 1
            else:
                stats[b][1] += 1
    out = []
    for b in BUCKETS:
        tp_p, fp, tp_g, fn, n_gold = stats[b]
        if n_gold == 0 and tp_p + fp == 0:
            continue
        p = tp_p / (tp_p + fp) if tp_p + fp else 0.0
        r = tp_g / (tp_g + fn) if tp_g + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out.append(LengthBucket(b, PRF(p, r, f, tp_p, fp, fn), n_gold / total_gold if total_gold else 0.0,
                                n_gold, tp_p + fp))
    return out


def report_rows(metrics: Mapping[str, float]) -> str:
    return "".join(f"{k}\t{v:.6f}\n" for k, v in metrics.items())


def length_rows(buckets: Sequence[LengthBucket]) -> str:
    lines = ["bucket\tprecision\trecall\tf1\tfrequency\tgold\tpredicted\n"]
    for b in buckets:
        lines.append(f"{b.key}\t{b.prf.precision:.6f}\t{b.prf.recall:.6f}\t{b.prf.f1:.6f}\t"
                     f"{b.frequency:.6f}\t{b.gold_count}\t{b.pred_count}\n")
    return "".join(lines)
