"""End-to-end runs: extraction -> normalization -> coding, per submission.

Submissions:

    S1  BiLSTM-CRF, concatenated embeddings
    S2  BiLSTM-CRF, attention meta-embeddings
    S3  BiLSTM-biaffine (nested)
    S4  S3 trained on train + dev
    S5  2-of-3 vote over S1, S2 and S3

Config files are flat ``key = value`` lines (``#`` starts a comment). Every
key can be overridden by an environment variable ``NLNDE_<KEY>``.

    train_dir, dev_dir, test_dir   corpus directories (.txt + .ann)
    output_dir                     where predictions go
    model_dir                      checkpoints (default: <output_dir>/models)
    submission                     S1 .. S5
    preset                         crf-paper | biaffine-paper | test-small
    vectors                        comma-separated vector files (frozen providers)
    seed, epochs, jobs             integers
    exclude_code                   code left out in the extra evaluation rows
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path

from . import biaffine, crf
from .coder import rank_codes
from .corpus import Document, load_corpus, write_coding_tsv, write_document
from .ensemble import VoteConfig, majority_vote
from .model import ConfigError, ModelConfig, SequenceModel, load_model, preset
from .normalizer import Gazetteer, build_gazetteer, normalize_mentions

log = logging.getLogger(__name__)

SUBMISSIONS = ("S1", "S2", "S3", "S4", "S5")
GAZETTEER_FILE = "gazetteer.tsv"
CODING_FILE = "coding.tsv"
ENV_PREFIX = "NLNDE_"


@dataclass
class PipelineConfig:
    train_dir: str | None = None
    dev_dir: str | None = None
    test_dir: str | None = None
    output_dir: str = "out"
    model_dir: str | None = None
    submission: str = "S1"
    preset: str = "test-small"
    vectors: str = ""
    seed: int = 13
    epochs: int | None = None
    jobs: int = 1
    exclude_code: str | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "epochs", "jobs") and isinstance(v, str):
                try:
                    setattr(self, f.name, int(v))
                except ValueError:
                    raise ConfigError(f"{f.name} must be an integer, got {v!r}") from None
        if self.submission not in SUBMISSIONS:
            raise ConfigError(f"unknown submission {self.submission!r}; expected one of {SUBMISSIONS}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def models_root(self) -> Path:
        return Path(self.model_dir) if self.model_dir else Path(self.output_dir) / "models"

    def model_config(self, kind: str, embedding_mode: str = "concat") -> ModelConfig:
        cfg = preset(self.preset, kind)
        return cfg.with_overrides(seed=self.seed, epochs=self.epochs, vectors=self.vectors or None,
                                  embedding_mode=embedding_mode)


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(path: str | Path | None = None, overrides: dict | None = None,
                   environ: dict | None = None) -> PipelineConfig:
    """Defaults < config file < NLNDE_* environment < explicit overrides."""
    names = {f.name for f in fields(PipelineConfig)}
    values: dict = {}
    if path is not None:
        values.update(read_config_file(path))
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    env = os.environ if environ is None else environ
    for name in names:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = env[key]
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return PipelineConfig(**values)


def _require_dir(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is not configured")
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# training

def members(submission: str) -> list[str]:
    return ["S1", "S2", "S3"] if submission == "S5" else [submission]


def train_member(member: str, cfg: PipelineConfig, train_docs, dev_docs) -> tuple[SequenceModel, object]:
    if member == "S1":
        return crf.train(train_docs, cfg.model_config("crf", "concat"), dev_docs)
    if member == "S2":
        return crf.train(train_docs, cfg.model_config("crf", "meta"), dev_docs)
    if member == "S3":
        return biaffine.train(train_docs, cfg.model_config("biaffine"), dev=dev_docs)
    if member == "S4":
        return biaffine.train(train_docs, cfg.model_config("biaffine"), include_dev=True, dev=dev_docs)
    raise ConfigError(f"no model for {member}")


def run_train(cfg: PipelineConfig) -> dict[str, object]:
    """Train every model the submission needs and build the gazetteer.

    The gazetteer always comes from the training split only.
    """
    train_docs = load_corpus(_require_dir(cfg.train_dir, "train_dir"))
    dev_docs = load_corpus(_require_dir(cfg.dev_dir, "dev_dir")) if cfg.dev_dir else []
    if cfg.submission == "S4" and not dev_docs:
        raise ConfigError("S4 needs dev_dir")
    root = cfg.models_root
    root.mkdir(parents=True, exist_ok=True)
    gaz = build_gazetteer(m for d in train_docs for m in d.mentions)
    (root / GAZETTEER_FILE).write_text(gaz.to_tsv(), encoding="utf-8")
    results = {}
    for member in members(cfg.submission):
        model, result = train_member(member, cfg, train_docs, dev_docs)
        model.save(root / member)
        results[member] = result
        log.info("%s: final loss %.6f", member, result.final_loss)
    return results


# ---------------------------------------------------------------------------
# prediction

def load_members(cfg: PipelineConfig) -> list[SequenceModel]:
    out = []
    for member in members(cfg.submission):
        path = cfg.models_root / member
        if not (path / "manifest.json").exists():
            raise FileNotFoundError(f"missing checkpoint for {member}: {path}")
        out.append(load_model(path))
    return out


def load_gazetteer(cfg: PipelineConfig) -> Gazetteer:
    path = cfg.models_root / GAZETTEER_FILE
    if not path.exists():
        raise FileNotFoundError(f"missing gazetteer: {path}")
    return Gazetteer.from_tsv(path.read_text(encoding="utf-8"))


def extract(cfg: PipelineConfig, docs: list[Document]) -> list[list]:
    models = load_members(cfg)
    per_model = [m.predict_documents(docs, cfg.jobs) for m in models]
    if len(models) == 1:
        return [[m.with_code(None) for m in ms] for ms in per_model[0]]
    vote = VoteConfig(quorum=2, members=len(models))
    return [majority_vote([pm[i] for pm in per_model], vote) for i in range(len(docs))]


def run_predict(cfg: PipelineConfig, input_dir: str | None = None,
                out_dir: str | Path | None = None) -> list[Document]:
    docs = load_corpus(_require_dir(input_dir or cfg.test_dir, "input directory"))
    mentions = extract(cfg, docs)
    out = [Document(d.doc_id, d.text, ms) for d, ms in zip(docs, mentions)]
    target = Path(out_dir or cfg.output_dir)
    for d in out:
        write_document(target, d)
    return out


def run_normalize(cfg: PipelineConfig, docs: list[Document], out_dir: str | Path | None = None) -> list[Document]:
    gaz = load_gazetteer(cfg)
    out = [Document(d.doc_id, d.text, normalize_mentions(gaz, d.mentions)) for d in docs]
    if out_dir is not None:
        for d in out:
            write_document(out_dir, d)
    return out


def run_code(cfg: PipelineConfig, docs: list[Document], out_path: str | Path | None = None) -> dict[str, list[str]]:
    gaz = load_gazetteer(cfg)
    rankings = {d.doc_id: rank_codes(d.mentions, gaz.code_counts, d.doc_id).codes for d in docs}
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(write_coding_tsv(rankings), encoding="utf-8")
    return rankings


def run_pipeline(cfg: PipelineConfig, input_dir: str | None = None) -> tuple[list[Document], dict]:
    """Extraction, normalization and coding; writes ``<doc>.ann`` files and
    ``coding.tsv`` into ``output_dir``."""
    docs = load_corpus(_require_dir(input_dir or cfg.test_dir, "input directory"))
    gaz = load_gazetteer(cfg)
    mentions = extract(cfg, docs)
    out_dir = Path(cfg.output_dir)
    coded = []
    for d, ms in zip(docs, mentions):
        doc = Document(d.doc_id, d.text, normalize_mentions(gaz, ms))
        write_document(out_dir, doc)
        coded.append(doc)
    rankings = run_code(cfg, coded, out_dir / CODING_FILE)
    return coded, rankings
