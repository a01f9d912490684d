"""Token embeddings: vector providers, concatenation and attention meta-embeddings."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as tn
from .corpus import ParseError
from .encoder import LSTMParams, init_lstm, lstm_sequence
from .tensor import ParameterStore, Tensor

OOV_POLICIES = ("zero", "trained-unk")


class EmbeddingProvider:
    """A word -> vector table.

    Lookups try the exact form first and then its lowercase form. Unknown words
    get the zero vector, or a learned UNK row under ``oov_policy="trained-unk"``.
    """

    kind = "vectors"

    def __init__(self, name: str, dim: int, words: Sequence[str], weights: np.ndarray,
                 oov_policy: str = "zero", trainable: bool = False,
                 store: ParameterStore | None = None):
        if oov_policy not in OOV_POLICIES:
            raise ValueError(f"unknown oov policy {oov_policy!r}")
        weights = np.asarray(weights, dtype=np.float64).reshape(len(words), dim)
        self.name = name
        self.dim = dim
        self.oov_policy = oov_policy
        self.trainable = trainable
        self.words = list(words)
        self.vocab = {w: i for i, w in enumerate(self.words)}
        # one extra row at the end serves as UNK (or is masked to zero)
        table = np.vstack([weights, np.zeros((1, dim))])
        if trainable:
            if store is None:
                raise ValueError("trainable provider needs a parameter store")
            self.weights = store.add(f"emb.{name}", table)
        else:
            self.weights = Tensor(table)

    @property
    def table(self) -> dict[str, np.ndarray]:
        return {w: self.weights.data[i] for w, i in self.vocab.items()}

    def _index(self, word: str) -> int | None:
        idx = self.vocab.get(word)
        if idx is None:
            idx = self.vocab.get(word.lower())
        return idx

    def lookup(self, word: str) -> np.ndarray:
        idx = self._index(word)
        if idx is None:
            return self.weights.data[-1].copy() if self.oov_policy == "trained-unk" else np.zeros(self.dim)
        return self.weights.data[idx].copy()

    def embed(self, words: Sequence[str]) -> Tensor:
        unk = len(self.words)
        idx = [self._index(w) for w in words]
        rows = tn.take(self.weights, np.array([unk if i is None else i for i in idx], dtype=int))
        if self.oov_policy == "zero" and any(i is None for i in idx):
            mask = np.array([[0.0 if i is None else 1.0] for i in idx]) * np.ones((1, self.dim))
            rows = tn.mul(rows, Tensor(mask))
        return rows

    def spec(self) -> dict:
        return {"kind": self.kind, "name": self.name, "dim": self.dim, "words": self.words,
                "oov_policy": self.oov_policy, "trainable": self.trainable}

    @classmethod
    def random(cls, name: str, words: Iterable[str], dim: int, rng: np.random.Generator,
               store: ParameterStore, oov_policy: str = "trained-unk") -> "EmbeddingProvider":
        words = sorted(set(words))
        weights = rng.uniform(-0.1, 0.1, size=(len(words), dim))
        return cls(name, dim, words, weights, oov_policy, trainable=True, store=store)


def load_vectors(path: str | Path, name: str | None = None, oov_policy: str = "zero") -> EmbeddingProvider:
    """Read a text vector file: header ``vocab_size dim`` then ``word v1 ... v_dim``."""
    path = Path(path)
    words: list[str] = []
    rows: dict[str, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("header must be 'vocab_size dim'", 1)
        dim = int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected {dim} values, got {len(parts) - 1}", lineno)
            try:
                vec = [float(v) for v in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric vector component", lineno) from None
            if parts[0] not in rows:
                words.append(parts[0])
            rows[parts[0]] = vec  # duplicates: last wins
    weights = np.array([rows[w] for w in words]).reshape(len(words), dim)
    return EmbeddingProvider(name or path.stem, dim, words, weights, oov_policy)


def save_vectors(provider: EmbeddingProvider, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(provider.words)} {provider.dim}\n")
        for w in provider.words:
            vec = provider.weights.data[provider.vocab[w]]
            fh.write(w + " " + " ".join(repr(float(v)) for v in vec) + "\n")


class CharLSTMProvider:
    """Trainable character BiLSTM word vectors (final forward and backward
    states, concatenated). Small stand-in for character-LM embeddings."""

    kind = "char"

    def __init__(self, name: str, chars: Iterable[str], char_dim: int, hidden: int,
                 rng: np.random.Generator, store: ParameterStore):
        self.name = name
        self.chars = sorted(set(chars))
        self.char_index = {c: i for i, c in enumerate(self.chars)}
        self.char_dim = char_dim
        self.hidden = hidden
        self.dim = 2 * hidden
        self.trainable = True
        # last row is the unknown-character vector
        self.char_table = store.add(f"emb.{name}.chars",
                                    rng.uniform(-0.1, 0.1, size=(len(self.chars) + 1, char_dim)))
        self.fwd: LSTMParams = init_lstm(store, f"emb.{name}.fwd", char_dim, hidden, rng)
        self.bwd: LSTMParams = init_lstm(store, f"emb.{name}.bwd", char_dim, hidden, rng)

    def embed(self, words: Sequence[str]) -> Tensor:
        unique = sorted(set(words), key=lambda w: (len(w), w))
        by_len: dict[int, list[str]] = {}
        for w in unique:
            by_len.setdefault(len(w), []).append(w)
        pieces, order = [], []
        unk = len(self.chars)
        for n, group in sorted(by_len.items()):
            idx = np.array([[self.char_index.get(c, unk) for c in w] for w in group], dtype=int)
            x = tn.take(self.char_table, idx)  # B x n x char_dim
            hf = lstm_sequence(self.fwd, x)
            hb = lstm_sequence(self.bwd, x, reverse=True)
            pieces.append(tn.concat([hf[:, n - 1, :], hb[:, 0, :]], axis=-1))
            order.extend(group)
        allv = tn.concat(pieces, axis=0) if len(pieces) > 1 else pieces[0]
        pos = {w: i for i, w in enumerate(order)}
        return tn.take(allv, np.array([pos[w] for w in words], dtype=int))

    def lookup(self, word: str) -> np.ndarray:
        return self.embed([word]).data[0]

    def spec(self) -> dict:
        return {"kind": self.kind, "name": self.name, "chars": self.chars,
                "char_dim": self.char_dim, "hidden": self.hidden}


def embed_concat(providers: Sequence, token: str) -> np.ndarray:
    if not providers:
        raise ValueError("need at least one provider")
    return np.concatenate([p.lookup(token) for p in providers])


# ---------------------------------------------------------------------------
# word features

SHAPE_CLASSES = ("all-lower", "all-upper", "init-cap", "has-digit", "mixed", "other")
N_BINS = 10


@dataclass(frozen=True)
class WordFeatures:
    shape_class: str
    freq_bin: int
    length_bin: int

    def __post_init__(self):
        if self.shape_class not in SHAPE_CLASSES:
            raise ValueError(f"unknown shape class {self.shape_class!r}")
        if not (0 <= self.freq_bin < N_BINS and 0 <= self.length_bin < N_BINS):
            raise ValueError("feature bin out of range")


def word_shape(token: str) -> str:
    if any(c.isdigit() for c in token):
        return "has-digit"
    letters = [c for c in token if c.isalpha()]
    if not letters:
        return "other"
    if all(c.islower() for c in letters):
        return "all-lower"
    if all(c.isupper() for c in letters):
        return "all-upper"
    if letters[0].isupper() and all(c.islower() for c in letters[1:]):
        return "init-cap"
    return "mixed"


def compute_word_features(token: str, corpus_freq: dict[str, int] | Counter) -> WordFeatures:
    count = corpus_freq.get(token, 0)
    return WordFeatures(
        word_shape(token),
        min(N_BINS - 1, int(math.floor(math.log2(1 + count)))),
        min(N_BINS - 1, len(token)),
    )


# ---------------------------------------------------------------------------
# meta-embeddings

@dataclass
class MetaEmbedderParams:
    Q: list[Tensor]  # per provider, E x dim_i
    b: list[Tensor]  # per provider, E
    W: Tensor  # A x E
    V: Tensor  # A
    shape_table: Tensor  # |SHAPE_CLASSES| x A
    freq_table: Tensor  # N_BINS x A
    length_table: Tensor  # N_BINS x A

    @property
    def E(self) -> int:
        return self.W.shape[1]

    @property
    def A(self) -> int:
        return self.W.shape[0]

    @classmethod
    def create(cls, dims: Sequence[int], store: ParameterStore, rng: np.random.Generator,
               attention_dim: int = 25, prefix: str = "meta") -> "MetaEmbedderParams":
        E = max(dims)
        A = attention_dim
        return cls(
            Q=[store.add(f"{prefix}.Q{i}", tn.glorot(rng, (E, d))) for i, d in enumerate(dims)],
            b=[store.add(f"{prefix}.b{i}", np.zeros(E)) for i in range(len(dims))],
            W=store.add(f"{prefix}.W", tn.glorot(rng, (A, E))),
            V=store.add(f"{prefix}.V", rng.uniform(-0.1, 0.1, size=A)),
            shape_table=store.add(f"{prefix}.f_shape", rng.uniform(-0.1, 0.1, size=(len(SHAPE_CLASSES), A))),
            freq_table=store.add(f"{prefix}.f_freq", rng.uniform(-0.1, 0.1, size=(N_BINS, A))),
            length_table=store.add(f"{prefix}.f_len", rng.uniform(-0.1, 0.1, size=(N_BINS, A))),
        )


def feature_vectors(params: MetaEmbedderParams, features: Sequence[WordFeatures]) -> Tensor:
    """f_w for each token: sum of the three learned feature embeddings."""
    shape_idx = np.array([SHAPE_CLASSES.index(f.shape_class) for f in features], dtype=int)
    freq_idx = np.array([f.freq_bin for f in features], dtype=int)
    len_idx = np.array([f.length_bin for f in features], dtype=int)
    return tn.add(tn.add(tn.take(params.shape_table, shape_idx), tn.take(params.freq_table, freq_idx)),
                  tn.take(params.length_table, len_idx))


def meta_combine(params: MetaEmbedderParams, embedded: Sequence[Tensor],
                 features: Sequence[WordFeatures]) -> tuple[Tensor, Tensor]:
    """Attention-weighted combination of per-provider embeddings.

    ``embedded[i]`` is T x dim_i. Returns the T x E meta-embeddings and the
    T x n attention weights.
    """
    if len(embedded) != len(params.Q):
        raise tn.DimensionError(f"{len(embedded)} embeddings for {len(params.Q)} projections")
    T = embedded[0].shape[0]
    E = params.E
    xs = [tn.tanh(tn.affine(e, Q, b)) for e, Q, b in zip(embedded, params.Q, params.b)]
    fw = feature_vectors(params, features)
    Wt = tn.transpose(params.W)
    scores = [tn.matmul(tn.tanh(tn.add(tn.matmul(x, Wt), fw)), params.V) for x in xs]
    alpha = tn.softmax(tn.stack(scores, axis=1), axis=1)
    out = None
    for i, x in enumerate(xs):
        a_i = tn.broadcast_to(tn.reshape(alpha[:, i], (T, 1)), (T, E))
        term = tn.mul(a_i, x)
        out = term if out is None else tn.add(out, term)
    return out, alpha


def meta_embed(params: MetaEmbedderParams, providers: Sequence, token: str,
               features: WordFeatures) -> np.ndarray:
    out, _ = meta_combine(params, [p.embed([token]) for p in providers], [features])
    return out.data[0]


class EmbeddingLayer:
    """Turns a token list into a T x D matrix, by concatenation or meta-embedding."""

    def __init__(self, providers: Sequence, mode: str, store: ParameterStore,
                 rng: np.random.Generator, word_freq: dict[str, int] | None = None,
                 attention_dim: int = 25):
        if mode not in ("concat", "meta"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        if not providers:
            raise ValueError("need at least one provider")
        self.providers = list(providers)
        self.mode = mode
        self.word_freq = dict(word_freq or {})
        self.meta = (MetaEmbedderParams.create([p.dim for p in providers], store, rng, attention_dim)
                     if mode == "meta" else None)

    @property
    def dim(self) -> int:
        dims = [p.dim for p in self.providers]
        return sum(dims) if self.mode == "concat" else max(dims)

    def __call__(self, words: Sequence[str]) -> Tensor:
        parts = [p.embed(words) for p in self.providers]
        if self.mode == "concat":
            return tn.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        feats = [compute_word_features(w, self.word_freq) for w in words]
        return meta_combine(self.meta, parts, feats)[0]
