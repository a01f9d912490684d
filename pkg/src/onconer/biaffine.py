"""Biaffine span scoring and ranked, clash-free span decoding.

Spans are (start, end) token indices, both inclusive. Class 0 is always the
"none" class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as tn
from .corpus import Document, Mention
from .model import ConfigError, Example, ModelConfig, SequenceModel, corpus_examples, fit
from .tensor import ParameterStore, Tensor

log = logging.getLogger(__name__)


@dataclass
class BiaffineParams:
    Ws: Tensor  # d x 2H, start FFNN
    bs: Tensor
    We: Tensor  # d x 2H, end FFNN
    be: Tensor
    U: Tensor  # d x C x d
    Wm: Tensor  # C x 2d
    bm: Tensor  # C

    @property
    def d(self) -> int:
        return self.Ws.shape[0]

    @property
    def C(self) -> int:
        return self.bm.shape[0]

    @classmethod
    def create(cls, feature_dim: int, d: int, n_classes: int, store: ParameterStore,
               rng: np.random.Generator, prefix: str = "biaffine") -> "BiaffineParams":
        return cls(
            store.add(f"{prefix}.ffnn_s.W", tn.glorot(rng, (d, feature_dim))),
            store.add(f"{prefix}.ffnn_s.b", np.zeros(d)),
            store.add(f"{prefix}.ffnn_e.W", tn.glorot(rng, (d, feature_dim))),
            store.add(f"{prefix}.ffnn_e.b", np.zeros(d)),
            store.add(f"{prefix}.U", tn.glorot(rng, (d, n_classes, d))),
            store.add(f"{prefix}.Wm", tn.glorot(rng, (n_classes, 2 * d))),
            store.add(f"{prefix}.bm", np.zeros(n_classes)),
        )


@dataclass
class SpanCandidate:
    start: int
    end: int
    class_scores: np.ndarray
    best_class: int = 0
    score: float = 0.0

    @classmethod
    def from_scores(cls, start: int, end: int, class_scores) -> "SpanCandidate":
        """``score`` is the best non-none class score minus the none score."""
        cs = np.asarray(class_scores, dtype=float)
        best = 1 + int(np.argmax(cs[1:]))
        return cls(start, end, cs, best, float(cs[best] - cs[0]))

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def span_representations(features, params: BiaffineParams) -> tuple[Tensor, Tensor]:
    hs = tn.tanh(tn.affine(features, params.Ws, params.bs))
    he = tn.tanh(tn.affine(features, params.We, params.be))
    return hs, he


def span_scores(Hs, He, params: BiaffineParams, s: int, e: int) -> Tensor:
    """Class scores of the single span (s, e)."""
    hs, he = tn.as_tensor(Hs)[s], tn.as_tensor(He)[e]
    bil = tn.einsum("cj,j->c", tn.einsum("i,icj->cj", hs, params.U), he)
    lin = tn.affine(tn.concat([hs, he]), params.Wm, params.bm)
    return tn.add(bil, lin)


def all_span_scores(Hs, He, params: BiaffineParams) -> Tensor:
    """T x T x C tensor; entry [s, e] scores span (s, e)."""
    Hs, He = tn.as_tensor(Hs), tn.as_tensor(He)
    T, d, C = Hs.shape[0], params.d, params.C
    bil = tn.einsum("ice,je->ijc", tn.einsum("id,dce->ice", Hs, params.U), He)
    lin_s = tn.matmul(Hs, tn.transpose(params.Wm[:, :d]))
    lin_e = tn.matmul(He, tn.transpose(params.Wm[:, d:]))
    out = tn.add(bil, tn.broadcast_to(tn.reshape(lin_s, (T, 1, C)), (T, T, C)))
    out = tn.add(out, tn.broadcast_to(tn.reshape(lin_e, (1, T, C)), (T, T, C)))
    return tn.add(out, params.bm)


def enumerate_spans(T: int, max_span_len: int) -> list[tuple[int, int]]:
    return [(s, e) for s in range(T) for e in range(s, min(T, s + max_span_len))]


def span_loss(scores: Tensor, gold: Sequence[tuple[int, int] | tuple[int, int, int]],
              max_span_len: int) -> Tensor:
    """Mean softmax cross-entropy over all spans up to ``max_span_len`` tokens.

    Gold entries are (start, end) (class 1) or (start, end, class). Gold spans
    longer than the limit are dropped with a warning.
    """
    T = scores.shape[0]
    spans = enumerate_spans(T, max_span_len)
    target = {}
    for g in gold:
        s, e = g[0], g[1]
        cls = g[2] if len(g) > 2 else 1
        if e - s + 1 > max_span_len:
            log.warning("gold span (%d, %d) exceeds max_span_len=%d; excluded", s, e, max_span_len)
            continue
        target[(s, e)] = cls
    s_idx = np.array([s for s, _ in spans], dtype=int)
    e_idx = np.array([e for _, e in spans], dtype=int)
    y = np.array([target.get(sp, 0) for sp in spans], dtype=int)
    logp = tn.log_softmax(scores[s_idx, e_idx], axis=-1)
    picked = logp[np.arange(len(spans)), y]
    return tn.mul(tn.sum(picked), -1.0 / len(spans))


def candidates_from_scores(scores, max_span_len: int) -> list[SpanCandidate]:
    data = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    return [SpanCandidate.from_scores(s, e, data[s, e])
            for s, e in enumerate_spans(data.shape[0], max_span_len)]


def crosses(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """True when the spans overlap without one containing the other."""
    (s1, e1), (s2, e2) = a, b
    if e1 < s2 or e2 < s1:
        return False
    nested = (s1 <= s2 and e2 <= e1) or (s2 <= s1 and e1 <= e2)
    return not nested


def greedy_order(candidates: Sequence[SpanCandidate]) -> list[SpanCandidate]:
    pos = [c for c in candidates if c.score > 0]
    return sorted(pos, key=lambda c: (-c.score, c.length, c.start))


def decode_spans(candidates: Sequence[SpanCandidate]) -> list[SpanCandidate]:
    """Accept positive-score spans best-first unless they cross an accepted
    span. Nesting is allowed. Output is sorted by (start, end)."""
    accepted: list[SpanCandidate] = []
    for c in greedy_order(candidates):
        if (c.start, c.end) in {(a.start, a.end) for a in accepted}:
            continue
        if not any(crosses((c.start, c.end), (a.start, a.end)) for a in accepted):
            accepted.append(c)
    return sorted(accepted, key=lambda c: (c.start, c.end))


# ---------------------------------------------------------------------------
# BiLSTM-biaffine tagger



class BiaffineTagger(SequenceModel):
    """Nested mention tagger: embeddings -> BiLSTM -> start/end FFNNs -> biaffine."""

    kind = "biaffine"

    def _build_head(self, rng):
        self.span_classes = ["none"] + self.classes
        self.head = BiaffineParams.create(self.encoder.config.output_dim, self.config.ffnn_dim,
                                          len(self.span_classes), self.store, rng)

    def scores(self, words, training: bool = False, rng=None) -> Tensor:
        hs, he = span_representations(self.features(words, training, rng), self.head)
        return all_span_scores(hs, he, self.head)

    def loss(self, example: Example, training: bool = False, rng=None) -> Tensor:
        gold = [(s, e, self.span_classes.index(lab)) for s, e, lab in example.gold_spans()]
        return span_loss(self.scores(example.words, training, rng), gold, self.config.max_span_len)

    def predict_tokens(self, tokens, text) -> list[Mention]:
        if not tokens:
            return []
        scores = self.scores([t.text for t in tokens])
        out = []
        for c in decode_spans(candidates_from_scores(scores, self.config.max_span_len)):
            start, end = tokens[c.start].start, tokens[c.end].end
            if text is not None:
                surface = text[start:end]
            else:
                chars = [" "] * (end - start)
                for t in tokens[c.start:c.end + 1]:
                    chars[t.start - start:t.end - start] = t.text
                surface = "".join(chars)
            out.append(Mention(start, end, surface, self.span_classes[c.best_class]))
        return out

    def _manifest_extra(self) -> dict:
        return {"max_span_len": self.config.max_span_len}


def training_examples(corpus: list[Document], dev: list[Document] = (),
                      include_dev: bool = False) -> list[Example]:
    docs = list(corpus) + (list(dev) if include_dev else [])
    return corpus_examples(docs)


def train(corpus: list[Document], config: ModelConfig, include_dev: bool = False,
          dev: list[Document] = (), on_epoch=None):
    """Train the biaffine tagger; ``include_dev`` appends the dev documents to
    the training data (and then no dev monitoring is done)."""
    if not corpus:
        raise ConfigError("empty training corpus")
    examples = training_examples(corpus, dev, include_dev)
    model = BiaffineTagger.from_corpus(list(corpus) + (list(dev) if include_dev else []), config)
    monitor = [] if include_dev else corpus_examples(dev)
    result = fit(model, examples, monitor, on_epoch=on_epoch)
    return model, result


def predict(model: BiaffineTagger, document: Document) -> list[Mention]:
    return model.predict(document)
