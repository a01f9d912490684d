"""The full command-line workflow on the bundled corpus.

Writes a config file, trains the three ensemble members for a few epochs,
runs extraction + normalization + coding on the test split and scores it.
Everything goes to a temporary directory.
"""

import tempfile
from pathlib import Path

from onconer.cli import main
from onconer.synthetic import bundled_corpus_dir

data = bundled_corpus_dir()
work = Path(tempfile.mkdtemp(prefix="onconer_demo_"))
config = work / "run.cfg"
config.write_text(
    f"train_dir = {data / 'train'}\n"
    f"dev_dir = {data / 'dev'}\n"
    f"test_dir = {data / 'test'}\n"
    f"output_dir = {work / 'out'}\n"
    "submission = S5\n"
    "preset = test-small\n"
    "epochs = 10\n"
    "seed = 13\n",
    encoding="utf-8",
)
print("config:\n" + config.read_text(encoding="utf-8"))

assert main(["train", "--config", str(config)]) == 0
assert main(["pipeline", "--config", str(config)]) == 0
print()
assert main(["evaluate", str(data / "test"), str(work / "out"), "--exclude-code", "8000/6", "--length-report"]) == 0
print(f"\noutputs in {work / 'out'}")
