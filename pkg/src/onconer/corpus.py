"""Documents, standoff annotations, tokenization and BIO conversion.

Character offsets are offsets into Python ``str`` objects, i.e. Unicode code
points, never bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

ENTITY_LABEL = "MORFOLOGIA_NEOPLASIA"

# characters the base tokenizer peels off word edges
EDGE_PUNCT = frozenset(".,;:()[]\"'¿?¡!")
# characters the infix rule splits on: hyphens, punctuation, quotation marks
INFIX_CHARS = frozenset("-‐‑–—") | EDGE_PUNCT | frozenset("«»“”‘’`")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str
    label: str = ENTITY_LABEL
    code: str | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid mention offsets ({self.start}, {self.end})")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def with_code(self, code: str | None) -> "Mention":
        return replace(self, code=code)


@dataclass
class Document:
    doc_id: str
    text: str
    mentions: list[Mention] = field(default_factory=list)

    def validate(self) -> None:
        for m in self.mentions:
            if m.end > len(self.text):
                raise ValueError(f"{self.doc_id}: mention {m.span} past end of text")
            if self.text[m.start:m.end] != m.surface:
                raise ValueError(
                    f"{self.doc_id}: surface {m.surface!r} != text {self.text[m.start:m.end]!r}"
                )


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass
class TaggedSentence:
    tokens: list[Token]
    tags: list[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError("tokens and tags differ in length")


# ---------------------------------------------------------------------------
# standoff .ann

_T_LINE = re.compile(r"^T(\d+)\t(\S+) (\d+) (\d+)\t(.*)$")
_NOTE_LINE = re.compile(r"^#(\d+)\tAnnotatorNotes T(\d+)\t(.*)$")


def parse_ann(content: str) -> list[Mention]:
    """Parse entity (``T``) and ``AnnotatorNotes`` lines into mentions.

    Codes stored in note lines are attached to the mention they reference.
    Blank lines are ignored; anything else raises :class:`ParseError`.
    """
    order: list[str] = []
    fields: dict[str, list] = {}
    for lineno, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        m = _T_LINE.match(line)
        if m:
            tid, label, start, end, surface = m.groups()
            if f"T{tid}" in fields:
                raise ParseError(f"duplicate id T{tid}", lineno)
            start, end = int(start), int(end)
            if start >= end:
                raise ParseError(f"empty or inverted span {start} {end}", lineno)
            order.append(f"T{tid}")
            fields[f"T{tid}"] = [start, end, surface, label, None]
            continue
        n = _NOTE_LINE.match(line)
        if n:
            _, ref, code = n.groups()
            if f"T{ref}" not in fields:
                raise ParseError(f"note references unknown id T{ref}", lineno)
            fields[f"T{ref}"][4] = code.strip() or None
            continue
        raise ParseError(f"malformed annotation line {line!r}", lineno)
    return [Mention(*fields[tid]) for tid in order]


def write_ann(mentions: Iterable[Mention]) -> str:
    lines: list[str] = []
    notes = 0
    for i, m in enumerate(mentions, start=1):
        lines.append(f"T{i}\t{m.label} {m.start} {m.end}\t{m.surface}")
        if m.code is not None:
            notes += 1
            lines.append(f"#{notes}\tAnnotatorNotes T{i}\t{m.code}")
    return "".join(line + "\n" for line in lines)


def load_corpus(directory: str | Path) -> list[Document]:
    """Read every ``<id>.txt`` (plus optional ``<id>.ann``) in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    docs = []
    for txt in sorted(directory.glob("*.txt")):
        # newline="" keeps \r\n intact so offsets match the annotation files
        with open(txt, encoding="utf-8", newline="") as fh:
            text = fh.read()
        ann = txt.with_suffix(".ann")
        mentions: list[Mention] = []
        if ann.exists():
            try:
                mentions = parse_ann(ann.read_text(encoding="utf-8"))
            except ParseError as exc:
                raise ParseError(f"{ann}: {exc}") from None
        doc = Document(txt.stem, text, mentions)
        doc.validate()
        docs.append(doc)
    return docs


def write_document(directory: str | Path, doc: Document, with_text: bool = True) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if with_text:
        with open(directory / f"{doc.doc_id}.txt", "w", encoding="utf-8", newline="") as fh:
            fh.write(doc.text)
    with open(directory / f"{doc.doc_id}.ann", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_ann(doc.mentions))


# ---------------------------------------------------------------------------
# coding TSV

def parse_coding_tsv(content: str) -> dict[str, list[str]]:
    """``doc_id<TAB>code`` rows, rank given by row order within a document."""
    out: dict[str, list[str]] = {}
    for lineno, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(f"expected 'doc_id<TAB>code', got {line!r}", lineno)
        out.setdefault(parts[0], []).append(parts[1])
    return out


def write_coding_tsv(rankings) -> str:
    items = rankings.items() if isinstance(rankings, dict) else rankings
    return "".join(f"{doc_id}\t{code}\n" for doc_id, codes in items for code in codes)


# ---------------------------------------------------------------------------
# tokenization

def _base_tokens(text: str) -> list[Token]:
    tokens = []
    for m in re.finditer(r"\S+", text):
        s, e = m.start(), m.end()
        lead, trail = [], []
        while s < e and text[s] in EDGE_PUNCT:
            lead.append(Token(text[s], s, s + 1))
            s += 1
        while e > s and text[e - 1] in EDGE_PUNCT:
            trail.append(Token(text[e - 1], e - 1, e))
            e -= 1
        tokens.extend(lead)
        if s < e:
            tokens.append(Token(text[s:e], s, e))
        tokens.extend(reversed(trail))
    return tokens


def _suffix_rule(tok: Token) -> list[Token]:
    tail = []
    while len(tok.text) > 1 and tok.text[-1] in ".-":
        tail.append(Token(tok.text[-1], tok.end - 1, tok.end))
        tok = Token(tok.text[:-1], tok.start, tok.end - 1)
    return [tok] + tail[::-1]


def _prefix_rule(tok: Token) -> list[Token]:
    head = []
    while len(tok.text) > 1 and tok.text[0] == "-":
        head.append(Token("-", tok.start, tok.start + 1))
        tok = Token(tok.text[1:], tok.start + 1, tok.end)
    return head + [tok]


def _infix_rule(tok: Token) -> list[Token]:
    out, buf_start = [], tok.start
    for i, ch in enumerate(tok.text):
        if ch in INFIX_CHARS:
            pos = tok.start + i
            if pos > buf_start:
                out.append(Token(tok.text[buf_start - tok.start:i], buf_start, pos))
            out.append(Token(ch, pos, pos + 1))
            buf_start = pos + 1
    if buf_start < tok.end:
        out.append(Token(tok.text[buf_start - tok.start:], buf_start, tok.end))
    return out


def tokenize(text: str) -> list[Token]:
    """Whitespace/punctuation base split, then the suffix, prefix and infix
    splitting rules in that order."""
    tokens = _base_tokens(text)
    for rule in (_suffix_rule, _prefix_rule, _infix_rule):
        tokens = [piece for tok in tokens for piece in rule(tok)]
    return tokens


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Sentence ranges, cut at newlines and at '.' + whitespace + uppercase.

    Ranges are trimmed of surrounding whitespace; empty ones are dropped.
    """
    cuts = [0]
    for m in re.finditer(r"\n|\.(?=\s+(\w))", text):
        if m.group(1) is None or m.group(1).isupper():
            cuts.append(m.end())
    cuts.append(len(text))
    ranges = []
    for s, e in zip(cuts, cuts[1:]):
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if s < e:
            ranges.append((s, e))
    return ranges


# ---------------------------------------------------------------------------
# BIO conversion

def resolve_overlaps(mentions: Iterable[Mention]) -> list[Mention]:
    """Keep the longest of any overlapping group (ties: smaller start first)."""
    kept: list[Mention] = []
    for m in sorted(mentions, key=lambda m: (-(m.end - m.start), m.start, m.end)):
        if all(m.end <= k.start or k.end <= m.start for k in kept):
            kept.append(m)
    return sorted(kept, key=lambda m: (m.start, m.end))


def token_span(tokens: list[Token], start: int, end: int) -> tuple[int, int] | None:
    """Inclusive token-index range of tokens intersecting [start, end)."""
    idx = [i for i, t in enumerate(tokens) if t.start < end and start < t.end]
    return (idx[0], idx[-1]) if idx else None


def to_bio(tokens: list[Token], mentions: Iterable[Mention]) -> TaggedSentence:
    tags = ["O"] * len(tokens)
    taken = [False] * len(tokens)
    kept = resolve_overlaps(mentions)
    # token expansion can still make two kept mentions share a token; the
    # longer one wins there too
    for m in sorted(kept, key=lambda m: (-(m.end - m.start), m.start)):
        span = token_span(tokens, m.start, m.end)
        if span is None or any(taken[span[0]:span[1] + 1]):
            continue
        a, b = span
        tags[a] = f"B-{m.label}"
        for i in range(a + 1, b + 1):
            tags[i] = f"I-{m.label}"
        for i in range(a, b + 1):
            taken[i] = True
    return TaggedSentence(list(tokens), tags)


def _surface(tokens: list[Token], a: int, b: int, text: str | None) -> str:
    start, end = tokens[a].start, tokens[b].end
    if text is not None:
        return text[start:end]
    chars = [" "] * (end - start)
    for t in tokens[a:b + 1]:
        chars[t.start - start:t.end - start] = t.text
    return "".join(chars)


def from_bio(tagged: TaggedSentence, text: str | None = None) -> list[Mention]:
    """Mentions from maximal B-I* runs. A stray I- is read as B-.

    ``text`` is the document the token offsets index into; without it the
    surface is rebuilt from the tokens with spaces in the gaps.
    """
    out: list[Mention] = []
    tokens, tags = tagged.tokens, tagged.tags
    cur: list | None = None  # [first, last, label]
    for i, tag in enumerate(tags + ["O"]):
        prefix, _, label = tag.partition("-")
        extend = prefix == "I" and cur is not None and cur[2] == label
        if cur is not None and not extend:
            a, b, lab = cur
            out.append(Mention(tokens[a].start, tokens[b].end, _surface(tokens, a, b, text), lab))
            cur = None
        if extend:
            cur[1] = i
        elif prefix in ("B", "I"):
            cur = [i, i, label]
    return out


def is_valid_bio(tags: list[str]) -> bool:
    prev = "O"
    for tag in tags:
        if tag.startswith("I-"):
            if prev == "O" or prev[2:] != tag[2:]:
                return False
        prev = tag
    return True


def sentences_with_tokens(text: str) -> list[list[Token]]:
    """Tokenized sentences of a document, offsets relative to the document."""
    out = []
    for s, e in split_sentences(text):
        toks = [Token(t.text, t.start + s, t.end + s) for t in tokenize(text[s:e])]
        if toks:
            out.append(toks)
    return out
