"""Span-level detector scoring.

Three modes over one canonical representation (binary token labels):

* detection: maximal constant-label runs become spans; same-label spans
  are matched at an IoU threshold; per-class precision/recall/F1 plus
  macro F1;
* span classification: pre-defined token spans are classified by majority
  vote over their token labels and scored with support-weighted F1;
* sentence classification: a sentence counts as hallucinated when any of
  its tokens is labeled hallucinated, scored with support-weighted F1.

IoU comparisons use exact rational arithmetic so results cannot flip on
float rounding at the threshold boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .corpus import CorruptedSample, PredictionRecord
from .errors import ValidationError
from .textseg import (
    TOKENIZER_ID,
    SentenceSpan,
    SpanOutOfBounds,
    Token,
    project_to_tokens,
    split_sentences,
    tokenize,
)

HALLUCINATED = 1
NON_HALLUCINATED = 0

CLASS_NAMES = {HALLUCINATED: "hallucinated", NON_HALLUCINATED: "non_hallucinated"}


class InvalidThreshold(ValidationError):
    pass


class IdMismatch(ValidationError):
    pass


class TokenCountMismatch(ValidationError):
    def __init__(self, sample_id: str, expected: int, got: int):
        super().__init__(
            f"sample {sample_id!r}: expected {expected} token labels, got {got}"
        )
        self.sample_id = sample_id


class LengthMismatch(ValidationError):
    pass


@dataclass(frozen=True)
class LabeledSpan:
    """Half-open token-index interval with a class label."""

    start: int
    end: int
    label: int


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, Fraction]]
    unmatched_gold: list[int]
    unmatched_pred: list[int]


@dataclass
class ClassScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class EvalReport:
    mode: str
    threshold: float
    tokenizer: str
    classes: dict[str, ClassScore]
    macro_f1: float
    samples: int
    aggregate: str = "corpus"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "threshold": self.threshold,
            "tokenizer": self.tokenizer,
            "classes": {name: score.to_dict() for name, score in self.classes.items()},
            "macro_f1": self.macro_f1,
            "samples": self.samples,
            "aggregate": self.aggregate,
        }


def extract_spans(labels: Sequence[int]) -> list[LabeledSpan]:
    """Maximal constant-label runs, both classes emitted."""
    spans: list[LabeledSpan] = []
    run_start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[run_start]:
            spans.append(LabeledSpan(run_start, i, labels[run_start]))
            run_start = i
    return spans


def iou(a: LabeledSpan, b: LabeledSpan) -> Fraction:
    """|a∩b| / |a∪b| over token index sets, exact."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return Fraction(0)
    union = (a.end - a.start) + (b.end - b.start) - inter
    return Fraction(inter, union)


def coerce_threshold(threshold) -> Fraction:
    """Exact threshold; floats go through their decimal string so 0.5 is
    exactly 1/2, not the nearest binary float."""
    try:
        value = Fraction(str(threshold)) if isinstance(threshold, float) else Fraction(threshold)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidThreshold(f"bad threshold {threshold!r}") from exc
    if not 0 < value <= 1:
        raise InvalidThreshold(f"threshold must lie in (0, 1], got {threshold!r}")
    return value


def match_spans(
    gold: Sequence[LabeledSpan], pred: Sequence[LabeledSpan], threshold
) -> MatchResult:
    """Greedy descending-IoU matching (ties: smaller gold start, then pred
    start), then augmenting-path completion so the cardinality always
    equals the maximum matching. For thresholds >= 0.5 over disjoint span
    lists the completion never fires and the result is the pure greedy
    matching."""
    thr = coerce_threshold(threshold)
    candidates = []
    eligible: dict[int, list[int]] = {}
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred):
            if g.label != p.label:
                continue
            value = iou(g, p)
            if value >= thr:
                candidates.append((value, gi, pi))
                eligible.setdefault(gi, []).append(pi)
    candidates.sort(key=lambda c: (-c[0], gold[c[1]].start, pred[c[2]].start))

    gold_of_pred: dict[int, int] = {}
    matched_gold: set[int] = set()
    for value, gi, pi in candidates:
        if gi in matched_gold or pi in gold_of_pred:
            continue
        matched_gold.add(gi)
        gold_of_pred[pi] = gi

    def augment(gi: int, visited: set[int]) -> bool:
        for pi in eligible.get(gi, ()):
            if pi in visited:
                continue
            visited.add(pi)
            if pi not in gold_of_pred or augment(gold_of_pred[pi], visited):
                gold_of_pred[pi] = gi
                return True
        return False

    for gi in range(len(gold)):
        if gi in eligible and gi not in {g for g in gold_of_pred.values()}:
            augment(gi, set())

    pred_of_gold = {g: p for p, g in gold_of_pred.items()}
    pairs = [
        (gi, pred_of_gold[gi], iou(gold[gi], pred[pred_of_gold[gi]]))
        for gi in sorted(pred_of_gold)
    ]
    return MatchResult(
        pairs=pairs,
        unmatched_gold=[gi for gi in range(len(gold)) if gi not in pred_of_gold],
        unmatched_pred=[pi for pi in range(len(pred)) if pi not in gold_of_pred],
    )


@dataclass
class EvalSample:
    """One joined gold/prediction pair over a shared token sequence."""

    id: str
    gold_labels: list[int]
    pred_labels: list[int]
    sentence_ranges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.gold_labels) != len(self.pred_labels):
            raise TokenCountMismatch(self.id, len(self.gold_labels), len(self.pred_labels))


def sentence_token_ranges(
    tokens: Sequence[Token], sentences: Sequence[SentenceSpan]
) -> list[tuple[int, int]]:
    """Token-index interval of each sentence. Sentence boundaries coincide
    with token boundaries, so every token lands in exactly one sentence."""
    ranges = []
    ti = 0
    for sent in sentences:
        start = ti
        while ti < len(tokens) and tokens[ti].end <= sent.end:
            ti += 1
        ranges.append((start, ti))
    return ranges


def build_eval_samples(
    gold: Iterable[CorruptedSample], predictions: Iterable[PredictionRecord]
) -> list[EvalSample]:
    """Join gold corrupted samples with predictions by id, projecting both
    sides onto the shared tokenizer's tokens."""
    preds = {}
    for rec in predictions:
        preds[rec.id] = rec
    out = []
    gold_ids = set()
    for sample in gold:
        gold_ids.add(sample.id)
        rec = preds.get(sample.id)
        if rec is None:
            raise IdMismatch(f"no prediction for sample {sample.id!r}")
        tokens = tokenize(sample.response)
        gold_labels = project_to_tokens(sample.response, sample.hallucinated_spans).labels
        if rec.token_labels is not None:
            if len(rec.token_labels) != len(tokens):
                raise TokenCountMismatch(sample.id, len(tokens), len(rec.token_labels))
            pred_labels = list(rec.token_labels)
        else:
            pred_labels = project_to_tokens(sample.response, rec.char_spans).labels
        ranges = sentence_token_ranges(tokens, split_sentences(sample.response))
        out.append(
            EvalSample(
                id=sample.id,
                gold_labels=gold_labels,
                pred_labels=pred_labels,
                sentence_ranges=ranges,
            )
        )
    extra = set(preds) - gold_ids
    if extra:
        raise IdMismatch(f"predictions for unknown sample ids: {sorted(extra)[:5]}")
    return out


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with the zero-denominator-is-zero rule and the
    empty-empty convention (no gold and no predicted spans scores 1.0)."""
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def detection_f1(
    samples: Sequence[EvalSample], threshold, aggregate: str = "corpus"
) -> EvalReport:
    """Span detection scoring. aggregate="corpus" sums TP/FP/FN over samples
    before computing F1; "per_sample" averages per-sample scores instead
    (counts in the report stay corpus sums either way)."""
    if aggregate not in ("corpus", "per_sample"):
        raise ValidationError(f"unknown aggregate {aggregate!r}")
    thr = coerce_threshold(threshold)
    scores = {label: ClassScore() for label in (HALLUCINATED, NON_HALLUCINATED)}
    per_sample_f1: dict[int, list[float]] = {HALLUCINATED: [], NON_HALLUCINATED: []}
    per_sample_pr: dict[int, list[tuple[float, float]]] = {
        HALLUCINATED: [],
        NON_HALLUCINATED: [],
    }
    for sample in samples:
        gold_spans = extract_spans(sample.gold_labels)
        pred_spans = extract_spans(sample.pred_labels)
        result = match_spans(gold_spans, pred_spans, thr)
        local = {label: [0, 0, 0] for label in scores}  # tp, fp, fn
        for gi, _, _ in result.pairs:
            local[gold_spans[gi].label][0] += 1
        for gi in result.unmatched_gold:
            local[gold_spans[gi].label][2] += 1
        for pi in result.unmatched_pred:
            local[pred_spans[pi].label][1] += 1
        for label, (tp, fp, fn) in local.items():
            scores[label].tp += tp
            scores[label].fp += fp
            scores[label].fn += fn
            precision, recall, f1 = _f1(tp, fp, fn)
            per_sample_f1[label].append(f1)
            per_sample_pr[label].append((precision, recall))
    for label, score in scores.items():
        if aggregate == "corpus":
            score.precision, score.recall, score.f1 = _f1(score.tp, score.fp, score.fn)
        else:
            values = per_sample_f1[label]
            prs = per_sample_pr[label]
            score.f1 = sum(values) / len(values) if values else 1.0
            score.precision = sum(p for p, _ in prs) / len(prs) if prs else 1.0
            score.recall = sum(r for _, r in prs) / len(prs) if prs else 1.0
    macro = (scores[HALLUCINATED].f1 + scores[NON_HALLUCINATED].f1) / 2
    return EvalReport(
        mode="detection",
        threshold=float(thr),
        tokenizer=TOKENIZER_ID,
        classes={CLASS_NAMES[label]: score for label, score in scores.items()},
        macro_f1=macro,
        samples=len(samples),
        aggregate=aggregate,
    )


def classify_spans(labels: Sequence[int], spans: Sequence[tuple[int, int]]) -> list[int]:
    """Majority vote over each span's token labels; exact tie is
    non-hallucinated. Spans must be in bounds and token-disjoint."""
    prev_end = 0
    for start, end in spans:
        if not (0 <= start < end <= len(labels)):
            raise SpanOutOfBounds(
                f"span ({start}, {end}) out of bounds for {len(labels)} tokens"
            )
        if start < prev_end:
            raise SpanOutOfBounds(f"span ({start}, {end}) overlaps a previous span")
        prev_end = end
    return [
        HALLUCINATED if 2 * sum(labels[start:end]) > end - start else NON_HALLUCINATED
        for start, end in spans
    ]


def weighted_f1(gold_labels: Sequence[int], pred_labels: Sequence[int]) -> dict:
    """Support-weighted F1 over classification units (spans or sentences)."""
    if len(gold_labels) != len(pred_labels):
        raise LengthMismatch(
            f"{len(gold_labels)} gold labels vs {len(pred_labels)} predicted"
        )
    total = len(gold_labels)
    result: dict = {"classes": {}, "wf1": 1.0 if total == 0 else 0.0, "units": total}
    wf1 = 0.0
    for label in (HALLUCINATED, NON_HALLUCINATED):
        tp = sum(1 for g, p in zip(gold_labels, pred_labels) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold_labels, pred_labels) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold_labels, pred_labels) if g == label and p != label)
        support = tp + fn
        precision, recall, f1 = _f1(tp, fp, fn)
        result["classes"][CLASS_NAMES[label]] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
        if total:
            wf1 += (support / total) * f1
    if total:
        result["wf1"] = wf1
    return result


def span_classification(
    samples: Sequence[EvalSample], predefined: Mapping[str, Sequence[tuple[int, int]]]
) -> dict:
    """Majority-vote classification of pre-defined token spans, scored with
    weighted F1 across all spans of all samples."""
    gold_votes: list[int] = []
    pred_votes: list[int] = []
    for sample in samples:
        spans = predefined.get(sample.id)
        if spans is None:
            raise IdMismatch(f"no pre-defined spans for sample {sample.id!r}")
        gold_votes.extend(classify_spans(sample.gold_labels, spans))
        pred_votes.extend(classify_spans(sample.pred_labels, spans))
    return weighted_f1(gold_votes, pred_votes)


def sentence_classification(samples: Sequence[EvalSample]) -> dict:
    """Sentence-level scoring: a sentence is hallucinated when any token in
    it carries label 1, on either side."""
    gold_votes: list[int] = []
    pred_votes: list[int] = []
    for sample in samples:
        for start, end in sample.sentence_ranges:
            gold_votes.append(
                HALLUCINATED if any(sample.gold_labels[start:end]) else NON_HALLUCINATED
            )
            pred_votes.append(
                HALLUCINATED if any(sample.pred_labels[start:end]) else NON_HALLUCINATED
            )
    return weighted_f1(gold_votes, pred_votes)
