"""Shared machinery for the two extraction models: presets, provider set-up,
sentence examples, the training loop and checkpoint I/O."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as tn
from .corpus import ENTITY_LABEL, Document, Mention, Token, sentences_with_tokens, token_span
from .embeddings import CharLSTMProvider, EmbeddingLayer, EmbeddingProvider, load_vectors
from .encoder import BiLSTM, BiLSTMConfig
from .tensor import ParameterStore, Tensor

log = logging.getLogger(__name__)

TENSOR_FILE = "model.tns"
MANIFEST_FILE = "manifest.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    hidden: int = 16
    dropout: float = 0.1
    word_dim: int = 16
    char_dim: int = 0
    char_hidden: int = 0
    vectors: tuple[str, ...] = ()
    embedding_mode: str = "concat"
    attention_dim: int = 25
    ffnn_dim: int = 16
    max_span_len: int = 16
    epochs: int = 50
    batch_size: int = 8
    optimizer: str = "sgd"
    lr: float = 0.1
    anneal_patience: int = 3
    anneal_factor: float = 0.5
    clip_norm: float = 5.0
    seed: int = 13

    def with_overrides(self, **kw) -> "ModelConfig":
        known = {k: v for k, v in kw.items() if v is not None}
        bad = set(known) - set(self.__dataclass_fields__)
        if bad:
            raise ConfigError(f"unknown model settings: {sorted(bad)}")
        if "vectors" in known and isinstance(known["vectors"], str):
            known["vectors"] = tuple(p for p in known["vectors"].split(",") if p)
        return replace(self, **known)

    def optimizer_spec(self):
        if self.optimizer == "sgd":
            return tn.SGD(self.lr)
        if self.optimizer == "adam":
            return tn.Adam(self.lr)
        raise ConfigError(f"unknown optimizer {self.optimizer!r}")


# Full-size settings are kept as named presets; test-small is what runs here.
PRESETS: dict[str, dict[str, ModelConfig]] = {
    "crf-paper": {
        "crf": ModelConfig(layers=3, hidden=128, word_dim=300, char_dim=25, char_hidden=50,
                           epochs=150, optimizer="sgd", lr=0.1),
        "biaffine": ModelConfig(layers=3, hidden=128, word_dim=300, char_dim=25, char_hidden=50,
                                ffnn_dim=150, epochs=150, optimizer="adam", lr=1e-3),
    },
    "biaffine-paper": {
        "crf": ModelConfig(layers=5, hidden=200, word_dim=300, char_dim=25, char_hidden=50,
                           epochs=150, optimizer="sgd", lr=0.1),
        "biaffine": ModelConfig(layers=5, hidden=200, word_dim=300, char_dim=25, char_hidden=50,
                                ffnn_dim=150, epochs=150, optimizer="adam", lr=1e-3),
    },
    "test-small": {
        # 7 updates per epoch are too few for plain SGD to leave its plateau
        "crf": ModelConfig(layers=2, hidden=16, word_dim=16, char_dim=8, char_hidden=8,
                           epochs=50, optimizer="adam", lr=1e-2),
        "biaffine": ModelConfig(layers=2, hidden=16, word_dim=16, char_dim=8, char_hidden=8,
                                ffnn_dim=16, epochs=50, optimizer="adam", lr=1e-2),
    },
}


def preset(name: str, kind: str) -> ModelConfig:
    try:
        return PRESETS[name][kind]
    except KeyError:
        raise ConfigError(f"unknown preset/model {name!r}/{kind!r}") from None


# ---------------------------------------------------------------------------
# examples

@dataclass
class Example:
    tokens: list[Token]
    mentions: list[Mention]

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]

    def gold_spans(self) -> list[tuple[int, int, str]]:
        """Token-index spans of the mentions (nesting kept, duplicates merged)."""
        out = set()
        for m in self.mentions:
            span = token_span(self.tokens, m.start, m.end)
            if span is not None:
                out.add((span[0], span[1], m.label))
        return sorted(out)


def document_examples(doc: Document) -> list[Example]:
    """Split a document into tokenized sentences carrying their mentions.

    A mention crossing a sentence boundary is attached to the sentence holding
    its start.
    """
    examples = []
    for toks in sentences_with_tokens(doc.text):
        s, e = toks[0].start, toks[-1].end
        inside = [m for m in doc.mentions if s <= m.start < e]
        examples.append(Example(toks, inside))
    return examples


def corpus_examples(docs: Sequence[Document]) -> list[Example]:
    return [ex for d in docs for ex in document_examples(d)]


# ---------------------------------------------------------------------------
# base model

MODEL_REGISTRY: dict[str, type] = {}


class SequenceModel:
    """Embeddings -> BiLSTM -> task head. Subclasses supply the head."""

    kind = "base"

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        MODEL_REGISTRY[cls.kind] = cls

    def __init__(self, config: ModelConfig, classes: Sequence[str], provider_specs: list[dict],
                 word_freq: dict[str, int], frozen: dict[str, np.ndarray] | None = None):
        self.config = config
        self.classes = list(classes)
        self.word_freq = dict(word_freq)
        self.provider_specs = provider_specs
        self.store = ParameterStore()
        rng = np.random.default_rng(config.seed)
        self.providers = [self._make_provider(s, rng, frozen or {}) for s in provider_specs]
        self.embedding = EmbeddingLayer(self.providers, config.embedding_mode, self.store, rng,
                                        self.word_freq, config.attention_dim)
        enc_cfg = BiLSTMConfig(config.layers, config.hidden, self.embedding.dim, config.dropout)
        self.encoder = BiLSTM.create(enc_cfg, self.store, rng)
        self._build_head(rng)

    def _make_provider(self, spec: dict, rng, frozen: dict):
        if spec["kind"] == "char":
            return CharLSTMProvider(spec["name"], spec["chars"], spec["char_dim"], spec["hidden"],
                                    rng, self.store)
        words = spec["words"]
        if spec["trainable"]:
            p = EmbeddingProvider.random(spec["name"], words, spec["dim"], rng, self.store,
                                         spec["oov_policy"])
            return p
        weights = frozen.get(spec["name"])
        if weights is None:
            weights = load_vectors(spec["path"], spec["name"]).weights.data[:-1]
        return EmbeddingProvider(spec["name"], spec["dim"], words, weights, spec["oov_policy"])

    def _build_head(self, rng):
        raise NotImplementedError

    # -- construction from data

    @classmethod
    def from_corpus(cls, docs: Sequence[Document], config: ModelConfig,
                    classes: Sequence[str] = (ENTITY_LABEL,)):
        examples = corpus_examples(docs)
        if not examples:
            raise ConfigError("empty training corpus")
        counts = Counter(w for ex in examples for w in ex.words)
        specs: list[dict] = []
        for path in config.vectors:
            prov = load_vectors(path)
            spec = prov.spec()
            spec["path"] = str(path)
            specs.append(spec)
        if config.word_dim > 0:
            specs.append({"kind": "vectors", "name": "word", "dim": config.word_dim,
                          "words": sorted(counts), "oov_policy": "trained-unk", "trainable": True})
        if config.char_dim > 0 and config.char_hidden > 0:
            chars = sorted({c for w in counts for c in w})
            specs.append({"kind": "char", "name": "char", "chars": chars,
                          "char_dim": config.char_dim, "hidden": config.char_hidden})
        if not specs:
            raise ConfigError("no embedding providers configured")
        return cls(config, classes, specs, dict(counts))

    # -- forward pieces

    def features(self, words: Sequence[str], training: bool = False, rng=None) -> Tensor:
        return self.encoder(self.embedding(words), training, rng)

    def loss(self, example: Example, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def predict_tokens(self, tokens: list[Token], text: str) -> list[Mention]:
        raise NotImplementedError

    def predict(self, doc: Document) -> list[Mention]:
        out = []
        for toks in sentences_with_tokens(doc.text):
            out.extend(self.predict_tokens(toks, doc.text))
        return out

    def predict_documents(self, docs: Sequence[Document], jobs: int = 1) -> list[list[Mention]]:
        if jobs <= 1:
            return [self.predict(d) for d in docs]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(self.predict, docs))

    # -- persistence

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = dict(self.store.arrays())
        for p in self.providers:
            if isinstance(p, EmbeddingProvider) and not p.trainable:
                arrays[f"frozen.{p.name}"] = p.weights.data[:-1]
        tn.save_tensors(directory / TENSOR_FILE, arrays)
        manifest = {
            "kind": self.kind,
            "config": asdict(self.config),
            "classes": self.classes,
            "providers": self.provider_specs,
            "word_freq": self.word_freq,
            **self._manifest_extra(),
        }
        (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=1, sort_keys=True),
                                               encoding="utf-8")

    def _manifest_extra(self) -> dict:
        return {}


def load_model(directory: str | Path) -> SequenceModel:
    directory = Path(directory)
    mpath = directory / MANIFEST_FILE
    if not mpath.exists():
        raise FileNotFoundError(f"no model checkpoint in {directory}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    cfg = manifest["config"]
    cfg["vectors"] = tuple(cfg.get("vectors", ()))
    config = ModelConfig(**cfg)
    arrays = tn.load_tensors(directory / TENSOR_FILE)
    frozen = {k[len("frozen."):]: v for k, v in arrays.items() if k.startswith("frozen.")}
    cls = MODEL_REGISTRY[manifest["kind"]]
    model = cls(config, manifest["classes"], manifest["providers"], manifest["word_freq"], frozen)
    model.store.load_arrays({k: v for k, v in arrays.items() if not k.startswith("frozen.")})
    return model


# ---------------------------------------------------------------------------
# training

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    lr: float
    dev_loss: float | None = None
    dev_f1: float | None = None


@dataclass
class TrainResult:
    history: list[EpochLog] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1].train_loss if self.history else float("nan")


def _clip(store: ParameterStore, max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = np.sqrt(sum(float(np.sum(t.grad ** 2)) for _, t in store if t.grad is not None))
    if total > max_norm:
        store.scale_grads(max_norm / total)


def mention_f1(model: SequenceModel, examples: Sequence[Example]) -> float:
    tp = fp = fn = 0
    for ex in examples:
        gold = {(m.start, m.end) for m in ex.mentions}
        pred = {(m.start, m.end) for m in model.predict_tokens(ex.tokens, None)}
        tp += len(gold & pred)
        fp += len(pred - gold)
        fn += len(gold - pred)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def fit(model: SequenceModel, train: Sequence[Example], dev: Sequence[Example] = (),
        epochs: int | None = None, on_epoch=None) -> TrainResult:
    """Mini-batch training on mean per-sentence loss.

    With SGD the learning rate is multiplied by ``anneal_factor`` after
    ``anneal_patience`` epochs without improvement of the dev loss (the train
    loss when there is no dev set).
    """
    cfg = model.config
    if not train:
        raise ConfigError("empty training corpus")
    rng = np.random.default_rng(cfg.seed)
    opt = cfg.optimizer_spec()
    best, stale = float("inf"), 0
    result = TrainResult()
    for epoch in range(1, (epochs or cfg.epochs) + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            batch = [train[j] for j in order[i:i + cfg.batch_size]]
            for ex in batch:
                loss = model.loss(ex, training=True, rng=rng)
                tn.backward(loss)
                total += loss.item()
            model.store.scale_grads(1.0 / len(batch))
            _clip(model.store, cfg.clip_norm)
            tn.optimizer_step(model.store, opt)
        entry = EpochLog(epoch, total / len(train), opt.lr)
        if dev:
            entry.dev_loss = float(np.mean([model.loss(ex).item() for ex in dev]))
            entry.dev_f1 = mention_f1(model, dev)
        monitor = entry.dev_loss if entry.dev_loss is not None else entry.train_loss
        if monitor < best - 1e-12:
            best, stale = monitor, 0
        else:
            stale += 1
            if isinstance(opt, tn.SGD) and stale >= cfg.anneal_patience:
                opt = tn.SGD(opt.lr * cfg.anneal_factor)
                stale = 0
        log.info("epoch %d loss %.5f lr %.4g dev_loss %s dev_f1 %s", epoch, entry.train_loss,
                 entry.lr, entry.dev_loss, entry.dev_f1)
        result.history.append(entry)
        if on_epoch is not None and on_epoch(entry) is False:
            break
    return result
