"""Linear-chain CRF over BIO tags.

Transition matrices are (K+2) x (K+2): rows are "from", columns are "to", and
the two extra indices K and K+1 are the virtual START and STOP states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as tn
from .corpus import Document, Mention, TaggedSentence, from_bio, to_bio
from .model import ConfigError, Example, ModelConfig, SequenceModel, corpus_examples, fit
from .tensor import ContractError, ParameterStore, Tensor

FORBIDDEN_SCORE = -1e4


@dataclass(frozen=True)
class LabelScheme:
    labels: tuple[str, ...]
    forbidden: frozenset = field(default_factory=frozenset)

    @classmethod
    def bio(cls, classes: Sequence[str]) -> "LabelScheme":
        labels = ("O",) + tuple(f"{p}-{c}" for c in classes for p in ("B", "I"))
        K = len(labels)
        start, stop = K, K + 1
        forbidden = set()
        for j, to in enumerate(labels):
            if not to.startswith("I-"):
                continue
            forbidden.add((start, j))
            for i, frm in enumerate(labels):
                if frm == "O" or frm[2:] != to[2:]:
                    forbidden.add((i, j))
        # nothing enters START, nothing leaves STOP, no START -> STOP shortcut
        for i in range(K + 2):
            forbidden.add((i, start))
            forbidden.add((stop, i))
        forbidden.add((start, stop))
        return cls(labels, frozenset(forbidden))

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def start(self) -> int:
        return self.K

    @property
    def stop(self) -> int:
        return self.K + 1

    def index(self, tag: str) -> int:
        return self.labels.index(tag)

    def forbidden_mask(self) -> np.ndarray:
        mask = np.zeros((self.K + 2, self.K + 2), dtype=bool)
        for i, j in self.forbidden:
            mask[i, j] = True
        return mask

    def path_allowed(self, tags: Sequence[int]) -> bool:
        seq = [self.start, *tags, self.stop]
        return all((a, b) not in self.forbidden for a, b in zip(seq, seq[1:]))


@dataclass
class CRFParams:
    W: Tensor  # K x 2H emission projection
    b: Tensor  # K
    transitions: Tensor  # (K+2) x (K+2), raw; see effective_transitions

    @classmethod
    def create(cls, scheme: LabelScheme, feature_dim: int, store: ParameterStore,
               rng: np.random.Generator, prefix: str = "crf") -> "CRFParams":
        K = scheme.K
        return cls(
            store.add(f"{prefix}.W", tn.glorot(rng, (K, feature_dim))),
            store.add(f"{prefix}.b", np.zeros(K)),
            store.add(f"{prefix}.transitions", np.zeros((K + 2, K + 2))),
        )


def effective_transitions(params: CRFParams, scheme: LabelScheme) -> Tensor:
    """Raw transitions with forbidden entries pinned to FORBIDDEN_SCORE.

    The pinned entries get zero gradient, so optimisers never move them.
    """
    mask = scheme.forbidden_mask()
    keep = Tensor((~mask).astype(float))
    pinned = Tensor(np.where(mask, FORBIDDEN_SCORE, 0.0))
    return tn.add(tn.mul(params.transitions, keep), pinned)


def emission_scores(features, params: CRFParams) -> Tensor:
    return tn.affine(features, params.W, params.b)


def forward_logZ(emissions, transitions) -> Tensor:
    """Log-partition over all label paths, via the forward recursion."""
    emissions, transitions = tn.as_tensor(emissions), tn.as_tensor(transitions)
    T, K = emissions.shape
    if T < 1:
        raise ContractError("empty sequence")
    if transitions.shape != (K + 2, K + 2):
        raise tn.DimensionError(f"transitions {transitions.shape} for {K} labels")
    start, stop = K, K + 1
    inner = transitions[:K, :K]
    alpha = tn.add(transitions[start, :K], emissions[0])
    for t in range(1, T):
        grid = tn.add(tn.broadcast_to(tn.reshape(alpha, (K, 1)), (K, K)), inner)
        alpha = tn.add(tn.logsumexp(grid, axis=0), emissions[t])
    return tn.logsumexp(tn.add(alpha, transitions[:K, stop]), axis=0)


def path_score(emissions, transitions, tags: Sequence[int]) -> Tensor:
    emissions, transitions = tn.as_tensor(emissions), tn.as_tensor(transitions)
    T, K = emissions.shape
    tags = np.asarray(tags, dtype=int)
    if tags.shape != (T,):
        raise tn.DimensionError(f"{len(tags)} tags for {T} positions")
    emit = tn.sum(emissions[np.arange(T), tags])
    frm = np.concatenate([[K], tags])
    to = np.concatenate([tags, [K + 1]])
    return tn.add(emit, tn.sum(transitions[frm, to]))


def nll_loss(emissions, transitions, gold: Sequence[int], scheme: LabelScheme | None = None) -> Tensor:
    """``logZ - score(gold)``; non-negative up to rounding."""
    if scheme is not None and not scheme.path_allowed(gold):
        raise ContractError(f"gold path uses a forbidden transition: {list(gold)}")
    return tn.sub(forward_logZ(emissions, transitions), path_score(emissions, transitions, gold))


def viterbi_decode(emissions, transitions) -> tuple[list[int], float]:
    """Best path and its score. Ties go to the lower label index."""
    em = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions, dtype=float)
    tr = transitions.data if isinstance(transitions, Tensor) else np.asarray(transitions, dtype=float)
    T, K = em.shape
    if T < 1:
        raise ContractError("empty sequence")
    start, stop = K, K + 1
    delta = tr[start, :K] + em[0]
    back = np.zeros((T, K), dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + tr[:K, :K]
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + em[t]
    final = delta + tr[:K, stop]
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])


# ---------------------------------------------------------------------------
# BiLSTM-CRF tagger



class CRFTagger(SequenceModel):
    """Flat mention tagger: embeddings -> BiLSTM -> emissions -> CRF."""

    kind = "crf"

    def _build_head(self, rng):
        self.scheme = LabelScheme.bio(self.classes)
        self.crf = CRFParams.create(self.scheme, self.encoder.config.output_dim, self.store, rng)

    def transitions(self) -> Tensor:
        return effective_transitions(self.crf, self.scheme)

    def gold_indices(self, example: Example) -> list[int]:
        tagged = to_bio(example.tokens, example.mentions)
        return [self.scheme.index(t) for t in tagged.tags]

    def loss(self, example: Example, training: bool = False, rng=None) -> Tensor:
        em = emission_scores(self.features(example.words, training, rng), self.crf)
        return nll_loss(em, self.transitions(), self.gold_indices(example), self.scheme)

    def predict_tokens(self, tokens, text) -> list[Mention]:
        if not tokens:
            return []
        em = emission_scores(self.features([t.text for t in tokens]), self.crf)
        path, _ = viterbi_decode(em, self.transitions())
        return from_bio(TaggedSentence(list(tokens), [self.scheme.labels[i] for i in path]), text)

    def _manifest_extra(self) -> dict:
        return {"labels": list(self.scheme.labels)}


def train(corpus: list[Document], config: ModelConfig, dev: list[Document] = (),
          on_epoch=None) -> tuple[CRFTagger, "object"]:
    """Train a BiLSTM-CRF. ``config.embedding_mode`` picks concatenation or
    meta-embeddings; nothing else differs between the two."""
    if not corpus:
        raise ConfigError("empty training corpus")
    model = CRFTagger.from_corpus(corpus, config)
    result = fit(model, corpus_examples(corpus), corpus_examples(dev), on_epoch=on_epoch)
    return model, result


def predict(model: CRFTagger, document: Document) -> list[Mention]:
    return model.predict(document)
