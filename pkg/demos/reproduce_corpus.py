"""Gold-extraction normalization and coding on a real annotated corpus.

Not part of the test suite: the clinical corpus cannot be bundled. Point it at
a train and a dev directory in brat format (``.txt`` + ``.ann`` with
AnnotatorNotes codes):

    python demos/reproduce_corpus.py TRAIN_DIR DEV_DIR

The gazetteer is built from TRAIN_DIR. Every gold dev mention is stripped of
its code and pushed through the cascade, then codes are ranked per document.
This isolates normalization and coding from extraction errors, so no neural
model or embedding files are involved. The run passes when both scores land
within 3 points of the reference values below.
"""

import argparse
import sys

from onconer.coder import rank_codes
from onconer.corpus import load_corpus
from onconer.evaluation import coding_map, norm_prf
from onconer.normalizer import build_gazetteer, cascade_report, normalize_mentions

REFERENCE = {"norm_f1": 87.10, "coding_map": 73.82}
TOLERANCE = 3.0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("train_dir")
    ap.add_argument("dev_dir")
    args = ap.parse_args(argv)

    train, dev = load_corpus(args.train_dir), load_corpus(args.dev_dir)
    gaz = build_gazetteer(m for d in train for m in d.mentions if m.code)
    gold = [[m for m in d.mentions if m.code] for d in dev]

    print(f"{'stage':<12}{'correct':>8}{'false':>8}{'unmatched':>11}")
    for row in cascade_report(gaz, [m for ms in gold for m in ms]):
        print(f"{row.method:<12}{row.correct:>8}{row.false:>8}{row.unmatched:>11}")

    coded = [normalize_mentions(gaz, [m.with_code(None) for m in ms]) for ms in gold]
    scores = {
        "norm_f1": 100 * norm_prf(gold, coded).f1,
        "coding_map": 100 * coding_map(
            {d.doc_id: sorted({m.code for m in ms}) for d, ms in zip(dev, gold)},
            {d.doc_id: rank_codes(ms, gaz.code_counts, d.doc_id).codes for d, ms in zip(dev, coded)}),
    }
    ok = True
    for key, value in scores.items():
        hit = abs(value - REFERENCE[key]) <= TOLERANCE
        ok &= hit
        print(f"{key:<11} {value:6.2f}  reference {REFERENCE[key]:.2f} +/- {TOLERANCE}: {'PASS' if hit else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
