"""Command-line entry point.

    onconer train     --config run.cfg --submission S1
    onconer predict   --config run.cfg [--input DIR] [--output DIR]
    onconer normalize --config run.cfg --input PRED_DIR --output DIR
    onconer code      --config run.cfg --input CODED_DIR --tsv coding.tsv
    onconer evaluate  GOLD_DIR PRED_DIR [--exclude-code 8000/6] [--length-report]
    onconer pipeline  --config run.cfg
    onconer vote      DIR DIR [DIR ...] --output DIR [--quorum 2]

Exit codes: 0 success, 1 internal error, 2 user or config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import pipeline as pl
from .coder import rank_codes
from .corpus import Document, ParseError, load_corpus, parse_coding_tsv, write_document
from .ensemble import VoteConfig, majority_vote
from .evaluation import coding_map, coding_prf, length_report, length_rows, ner_prf, norm_prf, report_rows
from .model import ConfigError
from .normalizer import GazetteerError

log = logging.getLogger("onconer")


class UsageError(Exception):
    pass


def _config(args) -> pl.PipelineConfig:
    overrides = {
        "submission": getattr(args, "submission", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "exclude_code": getattr(args, "exclude_code", None),
        "output_dir": getattr(args, "output", None),
    }
    return pl.resolve_config(args.config, overrides)


def _load(path, what: str) -> list[Document]:
    if path is None:
        raise UsageError(f"{what} directory is required")
    if not Path(path).is_dir():
        raise UsageError(f"{what} directory not found: {path}")
    return load_corpus(path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    cfg = _config(args)
    results = pl.run_train(cfg)
    for member, res in results.items():
        for ep in res.history:
            log.info("%s epoch %d loss %.6f dev_f1 %s", member, ep.epoch, ep.train_loss,
                     "-" if ep.dev_f1 is None else f"{ep.dev_f1:.4f}")
        print(f"{member}\tfinal_loss\t{res.final_loss:.10f}")
    print(f"checkpoints\t{cfg.models_root}")
    return 0


def cmd_predict(args) -> int:
    cfg = _config(args)
    docs = pl.run_predict(cfg, args.input)
    print(f"wrote {len(docs)} documents to {cfg.output_dir}")
    return 0


def cmd_normalize(args) -> int:
    cfg = _config(args)
    docs = _load(args.input, "input")
    out = pl.run_normalize(cfg, docs, cfg.output_dir)
    print(f"normalized {sum(len(d.mentions) for d in out)} mentions into {cfg.output_dir}")
    return 0


def cmd_code(args) -> int:
    cfg = _config(args)
    docs = _load(args.input, "input")
    target = Path(args.tsv) if args.tsv else Path(cfg.output_dir) / pl.CODING_FILE
    pl.run_code(cfg, docs, target)
    print(f"wrote {target}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    docs, _ = pl.run_pipeline(cfg, args.input)
    print(f"wrote {len(docs)} documents and {pl.CODING_FILE} to {cfg.output_dir}")
    return 0


def cmd_vote(args) -> int:
    if len(args.dirs) < 2:
        raise UsageError("vote needs at least two prediction directories")
    corpora = [_load(d, "prediction") for d in args.dirs]
    ids = [[d.doc_id for d in c] for c in corpora]
    for other, path in zip(ids[1:], args.dirs[1:]):
        if other != ids[0]:
            raise UsageError(f"{path} holds different documents than {args.dirs[0]}: "
                             f"{sorted(set(ids[0]) ^ set(other))}")
    try:
        config = VoteConfig(quorum=args.quorum, members=len(corpora))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for i, doc in enumerate(corpora[0]):
        merged = majority_vote([c[i].mentions for c in corpora], config)
        write_document(args.output, Document(doc.doc_id, doc.text, merged))
    print(f"merged {len(corpora[0])} documents into {args.output}")
    return 0


def _rankings(directory: Path, docs: list[Document]) -> dict[str, list[str]]:
    tsv = directory / pl.CODING_FILE
    if tsv.exists():
        ranked = parse_coding_tsv(tsv.read_text(encoding="utf-8"))
        return {d.doc_id: ranked.get(d.doc_id, []) for d in docs}
    return {d.doc_id: rank_codes(d.mentions, {}, d.doc_id).codes for d in docs}


def evaluate_dirs(gold_dir, pred_dir, exclude_code: str | None = None, jobs: int = 1) -> dict[str, float]:
    gold = _load(gold_dir, "gold")
    pred = _load(pred_dir, "prediction")
    g_ids, p_ids = {d.doc_id for d in gold}, {d.doc_id for d in pred}
    if g_ids != p_ids:
        raise UsageError("document ids differ; only in gold: "
                         f"{sorted(g_ids - p_ids)}; only in predictions: {sorted(p_ids - g_ids)}")
    g_m = [d.mentions for d in gold]
    p_m = [d.mentions for d in pred]
    gold_codes = {d.doc_id: sorted({m.code for m in d.mentions if m.code}) for d in gold}
    ranked = _rankings(Path(pred_dir), pred)

    jobs_list = [
        ("ner", lambda: ner_prf(g_m, p_m)),
        ("norm", lambda: norm_prf(g_m, p_m)),
        ("coding", lambda: coding_prf(gold_codes, ranked)),
    ]
    if exclude_code:
        jobs_list.append(("norm_excl", lambda: norm_prf(g_m, p_m, exclude_code)))
        jobs_list.append(("coding_excl", lambda: coding_prf(gold_codes, ranked, exclude_code)))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = dict(zip([k for k, _ in jobs_list], pool.map(lambda kv: kv[1](), jobs_list)))

    metrics: dict[str, float] = {}
    for key, prf in results.items():
        metrics[f"{key}_precision"] = prf.precision
        metrics[f"{key}_recall"] = prf.recall
        metrics[f"{key}_f1"] = prf.f1
    metrics["coding_map"] = coding_map(gold_codes, ranked)
    if exclude_code:
        metrics["coding_map_excl"] = coding_map(gold_codes, ranked, exclude_code)
    return metrics


def cmd_evaluate(args) -> int:
    jobs = args.jobs or 1
    metrics = evaluate_dirs(args.gold, args.pred, args.exclude_code, jobs)
    out = report_rows(metrics)
    if args.length_report:
        gold = load_corpus(args.gold)
        pred = load_corpus(args.pred)
        out += "\n" + length_rows(length_report([d.mentions for d in gold], [d.mentions for d in pred]))
    sys.stdout.write(out)
    if args.report:
        Path(args.report).write_text(out, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onconer", description="Tumor mention extraction, normalization and coding.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--submission", choices=pl.SUBMISSIONS)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        if output:
            p.add_argument("--output", metavar="DIR")

    p = sub.add_parser("train", help="train the models of a submission")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="extract mentions")
    common(p)
    p.add_argument("--input", metavar="DIR")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("normalize", help="assign codes to predicted mentions")
    common(p)
    p.add_argument("--input", metavar="DIR", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("code", help="rank codes per document")
    common(p)
    p.add_argument("--input", metavar="DIR", required=True)
    p.add_argument("--tsv", metavar="PATH")
    p.set_defaults(func=cmd_code)

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--jobs", type=int)
    p.add_argument("--exclude-code", metavar="CODE")
    p.add_argument("--length-report", action="store_true")
    p.add_argument("--report", metavar="PATH")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="extraction, normalization and coding in one go")
    common(p)
    p.add_argument("--input", metavar="DIR")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("vote", help="majority vote over prediction directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--output", metavar="DIR", required=True)
    p.add_argument("--quorum", type=int, default=2)
    p.set_defaults(func=cmd_vote)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError, ParseError, GazetteerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - reported, not swallowed silently
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
