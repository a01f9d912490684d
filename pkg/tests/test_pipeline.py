"""Config resolution, submission wiring and end-to-end runs."""

from pathlib import Path

import pytest

from onconer import pipeline as pl
from onconer.corpus import Document, Mention, load_corpus, parse_coding_tsv, write_document
from onconer.model import ConfigError, ModelConfig, load_model, preset
from onconer.synthetic import bundled_corpus_dir, load_bundled

from conftest import write_config

DATA = bundled_corpus_dir()


# ---------------------------------------------------------------------------
# configuration

def test_precedence_file_env_overrides(tmp_path):
    path = write_config(tmp_path / "a.cfg", seed=1, jobs=2, submission="S2")
    cfg = pl.resolve_config(path, environ={})
    assert (cfg.seed, cfg.jobs, cfg.submission) == (1, 2, "S2")
    env = {"NLNDE_SEED": "5", "NLNDE_SUBMISSION": "S3"}
    cfg = pl.resolve_config(path, environ=env)
    assert (cfg.seed, cfg.jobs, cfg.submission) == (5, 2, "S3")
    cfg = pl.resolve_config(path, {"seed": 9, "submission": None}, environ=env)
    assert (cfg.seed, cfg.submission) == (9, "S3")


def test_defaults_without_file():
    cfg = pl.resolve_config(None, environ={})
    assert cfg == pl.PipelineConfig()
    assert cfg.models_root == Path("out") / "models"


def test_comments_and_blank_lines(tmp_path):
    (tmp_path / "c.cfg").write_text("# run\n\nseed = 3  # inline\n", encoding="utf-8")
    assert pl.resolve_config(tmp_path / "c.cfg", environ={}).seed == 3


@pytest.mark.parametrize("content", ["colour = red\n", "seed = x\n", "seed\n", "submission = S9\n", "jobs = 0\n"])
def test_bad_config_raises(tmp_path, content):
    (tmp_path / "bad.cfg").write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        pl.resolve_config(tmp_path / "bad.cfg", environ={})


def test_bad_env_value_raises():
    with pytest.raises(ConfigError):
        pl.resolve_config(None, environ={"NLNDE_EPOCHS": "many"})


def test_presets_and_overrides():
    with pytest.raises(ConfigError):
        preset("no-such-preset", "crf")
    with pytest.raises(ConfigError):
        preset("test-small", "transformer")
    with pytest.raises(ConfigError):
        ModelConfig().with_overrides(width=3)
    cfg = preset("test-small", "crf").with_overrides(epochs=3, seed=None, vectors="a.vec,b.vec")
    assert cfg.epochs == 3 and cfg.seed == ModelConfig.seed and cfg.vectors == ("a.vec", "b.vec")
    model_cfg = pl.PipelineConfig(seed=4, epochs=2).model_config("crf", "meta")
    assert (model_cfg.seed, model_cfg.epochs, model_cfg.embedding_mode) == (4, 2, "meta")


def test_member_sets():
    assert pl.members("S5") == ["S1", "S2", "S3"]
    assert [pl.members(s) for s in ("S1", "S2", "S3", "S4")] == [["S1"], ["S2"], ["S3"], ["S4"]]


# ---------------------------------------------------------------------------
# training

def _small_corpus(tmp_path):
    for split, n in (("train", 2), ("dev", 1), ("test", 1)):
        for doc in load_bundled(split)[:n]:
            write_document(tmp_path / split, doc)
    return {split: tmp_path / split for split in ("train", "dev", "test")}


def _cfg(tmp_path, **kw):
    dirs = _small_corpus(tmp_path)
    values = dict(train_dir=dirs["train"], dev_dir=dirs["dev"], test_dir=dirs["test"],
                  output_dir=tmp_path / "out", epochs=2, seed=3)
    values.update(kw)
    return pl.PipelineConfig(**{k: str(v) for k, v in values.items()})


def test_s1_trains_one_checkpoint(tmp_path):
    cfg = _cfg(tmp_path, submission="S1")
    results = pl.run_train(cfg)
    assert list(results) == ["S1"]
    assert sorted(p.name for p in cfg.models_root.iterdir()) == ["S1", pl.GAZETTEER_FILE]
    assert load_model(cfg.models_root / "S1").config.embedding_mode == "concat"


def test_fixed_seed_gives_identical_loss(tmp_path):
    a = pl.run_train(_cfg(tmp_path / "a", submission="S2"))["S2"]
    b = pl.run_train(_cfg(tmp_path / "b", submission="S2"))["S2"]
    assert a.final_loss == b.final_loss
    c = pl.run_train(_cfg(tmp_path / "c", submission="S2", seed=4))["S2"]
    assert c.final_loss != a.final_loss


def test_s4_uses_dev_and_needs_it(tmp_path):
    cfg = _cfg(tmp_path, submission="S4")
    res = pl.run_train(cfg)["S4"]
    assert all(e.dev_f1 is None for e in res.history)  # dev is training data here
    train = load_corpus(cfg.train_dir)
    gaz = pl.load_gazetteer(cfg)
    assert sum(gaz.code_counts.values()) == sum(len(d.mentions) for d in train)
    with pytest.raises(ConfigError):
        pl.run_train(pl.PipelineConfig(train_dir=cfg.train_dir, submission="S4", output_dir=str(tmp_path / "x")))


def test_missing_corpus_and_checkpoint(tmp_path):
    with pytest.raises(ConfigError):
        pl.run_train(pl.PipelineConfig(train_dir=str(tmp_path / "nope")))
    with pytest.raises(ConfigError):
        pl.run_train(pl.PipelineConfig())
    cfg = _cfg(tmp_path, submission="S3")
    with pytest.raises(FileNotFoundError):
        pl.run_predict(cfg)
    with pytest.raises(FileNotFoundError):
        pl.load_gazetteer(cfg)


# ---------------------------------------------------------------------------
# prediction with a trained S5 set

def _member_cfg(cfg_path, member, out):
    return pl.resolve_config(cfg_path, {"submission": member, "output_dir": str(out)}, environ={})


def test_s5_output_within_member_union(s5_run, tmp_path):
    cfg_path, _ = s5_run
    cfg = pl.resolve_config(cfg_path, {"output_dir": str(tmp_path / "s5")}, environ={})
    docs = load_corpus(cfg.test_dir)
    voted = pl.extract(cfg, docs)
    singles = [pl.extract(_member_cfg(cfg_path, m, tmp_path / m), docs) for m in ("S1", "S2", "S3")]
    for i in range(len(docs)):
        sets = [{m.span for m in s[i]} for s in singles]
        out = {m.span for m in voted[i]}
        assert set.intersection(*sets) <= out <= set.union(*sets)
        assert all(m.code is None for m in voted[i])


def test_pipeline_outputs_reparse(s5_run, tmp_path):
    cfg_path, _ = s5_run
    cfg = pl.resolve_config(cfg_path, {"output_dir": str(tmp_path / "run")}, environ={})
    coded, rankings = pl.run_pipeline(cfg)
    back = load_corpus(tmp_path / "run")
    assert [d.doc_id for d in back] == [d.doc_id for d in coded]
    assert [d.mentions for d in back] == [d.mentions for d in coded]
    assert all(m.code for d in back for m in d.mentions)
    tsv = parse_coding_tsv((tmp_path / "run" / pl.CODING_FILE).read_text(encoding="utf-8"))
    assert {k: v for k, v in rankings.items() if v} == tsv


def test_predict_then_normalize_then_code(s5_run, tmp_path):
    cfg_path, _ = s5_run
    cfg = pl.resolve_config(cfg_path, {"output_dir": str(tmp_path / "pred"), "submission": "S3"}, environ={})
    pred = pl.run_predict(cfg)
    assert all(m.code is None for d in pred for m in d.mentions)
    normed = pl.run_normalize(cfg, load_corpus(tmp_path / "pred"), tmp_path / "norm")
    assert all(m.code for d in normed for m in d.mentions)
    ranks = pl.run_code(cfg, normed, tmp_path / "coding.tsv")
    assert set(ranks) == {d.doc_id for d in normed}


def test_document_without_mentions_has_no_coding_rows(s5_run, tmp_path):
    cfg_path, _ = s5_run
    cfg = pl.resolve_config(cfg_path, environ={})
    docs = [Document("empty", "Sin hallazgos.\n", []),
            Document("one", "carcinoma\n", [Mention(0, 9, "carcinoma")])]
    pl.run_code(cfg, pl.run_normalize(cfg, docs), tmp_path / "c.tsv")
    rows = (tmp_path / "c.tsv").read_text(encoding="utf-8").splitlines()
    assert rows and all(r.split("\t")[0] == "one" for r in rows)
