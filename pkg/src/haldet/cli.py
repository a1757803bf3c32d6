"""Command-line surface: corrupt, evaluate, stats, split, convert.

Exit codes: 0 success, 2 input or validation problem, 3 proposal-service
failure. Every corrupt/evaluate run writes a config echo (effective flags,
seed, tool version) into its stats or report file so runs can be
reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .corpus import (
    corpus_stats,
    make_splits,
    manifest_to_dict,
    parse_corrupted,
    parse_grounded,
    parse_predictions,
    write_corrupted,
    write_grounded,
    write_manifest,
)
from .corruptor import CorruptionConfig, run_pipeline
from .errors import ServiceError, ValidationError
from .evaluator import (
    build_eval_samples,
    detection_f1,
    sentence_classification,
    span_classification,
)
from .proposer import (
    MockProposer,
    NGramProposer,
    NGramModel,
    ServiceProposer,
    WordFreqProposer,
    train_ngram,
)
from .textseg import TOKENIZER_ID, tokenize

SERVICE_URL_ENV = "HALDET_SERVICE_URL"


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="haldet",
        description="Corrupted-grounding data generation and span-level detector scoring.",
    )
    parser.add_argument("--version", action="version", version=f"haldet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    corrupt = sub.add_parser("corrupt", help="generate corrupted grounding data")
    corrupt.add_argument("--input", required=True)
    corrupt.add_argument("--output", required=True)
    corrupt.add_argument("--seed", type=int, required=True)
    corrupt.add_argument(
        "--proposer",
        choices=["mock", "ngram", "wordfreq", "service"],
        default="mock",
    )
    corrupt.add_argument(
        "--variant",
        choices=["grounded", "random-span", "random-infill"],
        default="grounded",
    )
    corrupt.add_argument("--p-corrupt", type=float, default=0.95)
    corrupt.add_argument("--replace-min", type=float, default=0.75)
    corrupt.add_argument("--replace-max", type=float, default=1.0)
    corrupt.add_argument("--p-sentence-expand", type=float, default=0.5)
    corrupt.add_argument(
        "--p-sent-select",
        type=float,
        default=None,
        help="sentence-selection rate for --variant random-span "
        "(default: auto-calibrated to the corpus span density)",
    )
    corrupt.add_argument("--ngram-order", type=int, default=3)
    corrupt.add_argument(
        "--ngram-model",
        default=None,
        help="serialized n-gram model; default trains one on the input responses",
    )
    corrupt.add_argument(
        "--service-url",
        default=None,
        help=f"proposal service base URL (or set {SERVICE_URL_ENV})",
    )
    corrupt.add_argument("--workers", type=int, default=1)
    corrupt.add_argument(
        "--stats", default=None, help="stats JSON path (default: <output>.stats.json)"
    )

    evaluate = sub.add_parser("evaluate", help="score predictions against gold spans")
    evaluate.add_argument("--gold", required=True)
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument(
        "--mode",
        choices=["detection", "span-classification", "sentence-classification"],
        default="detection",
    )
    evaluate.add_argument("--iou", type=_float_list, default=[0.5])
    evaluate.add_argument(
        "--aggregate", choices=["corpus", "per-sample"], default="corpus"
    )
    evaluate.add_argument(
        "--spans", default=None, help="pre-defined char spans (span-classification mode)"
    )
    evaluate.add_argument("--report", default=None, help="report JSON path")

    stats = sub.add_parser("stats", help="corpus statistics")
    stats.add_argument("--input", required=True)
    stats.add_argument("--json", default=None, help="also write the stats as JSON")

    split = sub.add_parser("split", help="build a deterministic split manifest")
    split.add_argument("--input", required=True)
    split.add_argument("--sizes", type=_int_list, required=True, help="train,val")
    split.add_argument("--subsets", type=_int_list, default=[])
    split.add_argument("--seed", type=int, required=True)
    split.add_argument("--output", required=True)

    convert = sub.add_parser("convert", help="best-effort upstream format converter")
    convert.add_argument("--from", dest="source", choices=["gvc-tags", "mhaldetect"], required=True)
    convert.add_argument("--input", required=True)
    convert.add_argument("--output", required=True)
    return parser


def _build_proposer(args, samples):
    if args.proposer == "mock":
        return MockProposer()
    if args.proposer == "wordfreq":
        return WordFreqProposer()
    if args.proposer == "ngram":
        if args.ngram_model:
            with open(args.ngram_model, encoding="utf-8") as f:
                return NGramProposer(NGramModel.from_json(f.read()))
        return NGramProposer(train_ngram([s.response for s in samples], args.ngram_order))
    url = args.service_url or os.environ.get(SERVICE_URL_ENV)
    if not url:
        raise ValidationError(
            f"--proposer service needs --service-url or {SERVICE_URL_ENV}"
        )
    return ServiceProposer(url)


def cmd_corrupt(args) -> int:
    with open(args.input, encoding="utf-8") as f:
        samples = list(parse_grounded(f))
    variant = args.variant.replace("-", "_")
    proposer_name = "wordfreq" if variant == "random_infill" else args.proposer
    cfg = CorruptionConfig(
        seed=args.seed,
        p_corrupt=args.p_corrupt,
        replace_fraction_min=args.replace_min,
        replace_fraction_max=args.replace_max,
        p_sentence_expand=args.p_sentence_expand,
        variant=variant,
        proposer_name=proposer_name,
        p_sent_select=args.p_sent_select,
    )
    proposer = None if variant == "random_infill" else _build_proposer(args, samples)
    corrupted, stats = run_pipeline(samples, cfg, proposer, workers=args.workers)
    with open(args.output, "w", encoding="utf-8") as f:
        count = write_corrupted(corrupted, f)
    echo = {
        "command": "corrupt",
        "version": __version__,
        "tokenizer": TOKENIZER_ID,
        "input": args.input,
        "output": args.output,
        "seed": cfg.seed,
        "p_corrupt": cfg.p_corrupt,
        "replace_fraction_min": cfg.replace_fraction_min,
        "replace_fraction_max": cfg.replace_fraction_max,
        "p_sentence_expand": cfg.p_sentence_expand,
        "p_sent_select": cfg.p_sent_select,
        "variant": cfg.variant,
        "proposer": proposer_name,
        "workers": args.workers,
    }
    stats_path = args.stats or args.output + ".stats.json"
    with open(stats_path, "w", encoding="utf-8") as f:
        json.dump({"config": echo, "stats": stats.to_dict()}, f, ensure_ascii=False, indent=2)
        f.write("\n")
    print(f"wrote {count} samples ({stats.corrupted} corrupted) to {args.output}")
    if stats.proposer_failures:
        print(
            f"error: proposer failed on {stats.proposer_failures} samples "
            f"(emitted uncorrupted, see provenance warnings)",
            file=sys.stderr,
        )
        return 3
    return 0


def _load_predefined_spans(path: str, gold_by_id: dict) -> dict:
    """Char spans per id, projected to token-index ranges over the gold
    response."""
    predefined = {}
    with open(path, encoding="utf-8") as f:
        for rec in parse_predictions(f):
            if rec.char_spans is None:
                raise ValidationError(
                    f"pre-defined spans for {rec.id!r} must use the 'spans' form"
                )
            sample = gold_by_id.get(rec.id)
            if sample is None:
                raise ValidationError(f"pre-defined spans for unknown sample {rec.id!r}")
            tokens = tokenize(sample.response)
            ranges = []
            for start, end in rec.char_spans:
                covered = [
                    i for i, t in enumerate(tokens) if t.start < end and start < t.end
                ]
                if not covered:
                    raise ValidationError(
                        f"pre-defined span ({start}, {end}) of {rec.id!r} covers no tokens"
                    )
                ranges.append((covered[0], covered[-1] + 1))
            predefined[rec.id] = ranges
    return predefined


def cmd_evaluate(args) -> int:
    with open(args.gold, encoding="utf-8") as f:
        gold = list(parse_corrupted(f))
    with open(args.pred, encoding="utf-8") as f:
        predictions = list(parse_predictions(f))
    samples = build_eval_samples(gold, predictions)
    mode = args.mode.replace("-", "_")
    aggregate = args.aggregate.replace("-", "_")
    echo = {
        "command": "evaluate",
        "version": __version__,
        "tokenizer": TOKENIZER_ID,
        "gold": args.gold,
        "pred": args.pred,
        "mode": mode,
        "iou": args.iou,
        "aggregate": aggregate,
        "spans": args.spans,
    }
    if mode == "detection":
        reports = [detection_f1(samples, thr, aggregate=aggregate) for thr in args.iou]
        for thr, report in zip(args.iou, reports):
            if len(reports) == 1:
                print(f"macro_f1 {report.macro_f1:.2f}")
            else:
                print(f"macro_f1@{thr:g} {report.macro_f1:.2f}")
        if len(reports) == 1:
            payload = {"config": echo, **reports[0].to_dict()}
        else:
            payload = {"config": echo, "reports": [r.to_dict() for r in reports]}
    else:
        if mode == "span_classification":
            if not args.spans:
                raise ValidationError("span-classification mode needs --spans")
            gold_by_id = {s.id: s for s in gold}
            predefined = _load_predefined_spans(args.spans, gold_by_id)
            result = span_classification(samples, predefined)
        else:
            result = sentence_classification(samples)
        print(f"wf1 {result['wf1']:.2f}")
        payload = {
            "config": echo,
            "mode": mode,
            "tokenizer": TOKENIZER_ID,
            "samples": len(samples),
            **result,
        }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
            f.write("\n")
    return 0


def cmd_stats(args) -> int:
    with open(args.input, encoding="utf-8") as f:
        stats = corpus_stats(parse_grounded(f))
    print(
        f"samples {stats['sample_count']}  spans {stats['span_count']}  "
        f"mean_spans_per_sample {stats['mean_spans_per_sample']:.3f}"
    )
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(stats, f, ensure_ascii=False, indent=2)
            f.write("\n")
    return 0


def cmd_split(args) -> int:
    with open(args.input, encoding="utf-8") as f:
        ids = [sample.id for sample in parse_grounded(f)]
    manifest = make_splits(ids, args.sizes, args.seed, subset_sizes=args.subsets)
    with open(args.output, "w", encoding="utf-8") as f:
        write_manifest(manifest, f)
    sizes = {name: len(id_list) for name, id_list in manifest.splits.items()}
    print(f"wrote manifest {args.output} with splits {json.dumps(sizes)}")
    return 0


def cmd_convert(args) -> int:
    from .upstream import convert_gvc_tags, convert_mhaldetect

    with open(args.input, encoding="utf-8") as fin, open(
        args.output, "w", encoding="utf-8"
    ) as fout:
        if args.source == "gvc-tags":
            count = write_grounded(convert_gvc_tags(fin), fout)
        else:
            count = write_corrupted(convert_mhaldetect(fin), fout)
    print(f"converted {count} records to {args.output}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "corrupt": cmd_corrupt,
        "evaluate": cmd_evaluate,
        "stats": cmd_stats,
        "split": cmd_split,
        "convert": cmd_convert,
    }
    try:
        return handlers[args.command](args)
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
