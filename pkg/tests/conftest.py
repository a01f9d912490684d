import time

import pytest

from onconer import biaffine, crf
from onconer.model import preset
from onconer.synthetic import load_bundled

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    """Log one acceptance line, printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    return {split: load_bundled(split) for split in ("train", "dev", "test")}


@pytest.fixture(scope="session")
def trained_crf(corpus):
    t0 = time.perf_counter()
    model, result = crf.train(corpus["train"], preset("test-small", "crf"))
    return model, result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def trained_biaffine(corpus):
    t0 = time.perf_counter()
    model, result = biaffine.train(corpus["train"], preset("test-small", "biaffine"))
    return model, result, time.perf_counter() - t0


def write_config(path, **values) -> str:
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def s5_run(tmp_path_factory):
    """A quickly trained S5 model set on the bundled corpus: (config path, root)."""
    from onconer import pipeline as pl
    from onconer.synthetic import bundled_corpus_dir

    root = tmp_path_factory.mktemp("s5")
    data = bundled_corpus_dir()
    cfg_path = write_config(root / "run.cfg", train_dir=data / "train", dev_dir=data / "dev",
                            test_dir=data / "test", output_dir=root / "out", model_dir=root / "models",
                            submission="S5", epochs=4, seed=7)
    pl.run_train(pl.resolve_config(cfg_path, environ={}))
    return cfg_path, root
