"""Data model, JSONL IO, span-integrity validation, corpus statistics,
and deterministic split construction.

All files are line-delimited JSON, one record per line, UTF-8. Character
offsets count Unicode code points and are end-exclusive. Serialization is
byte-stable: fixed key order, ensure_ascii=False.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .errors import ValidationError


class MalformedRecord(ValidationError):
    """A line failed to parse or has the wrong shape."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SpanIntegrityError(ValidationError):
    """A span's offsets, ordering, or phrase disagree with the text."""

    def __init__(self, sample_id: str, span_index: int, reason: str):
        super().__init__(f"sample {sample_id!r}, span {span_index}: {reason}")
        self.sample_id = sample_id
        self.span_index = span_index


class DuplicateId(ValidationError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class SizesExceedCorpus(ValidationError):
    """Requested split sizes do not fit the id list."""


@dataclass(frozen=True)
class GroundedSpan:
    start: int
    end: int
    phrase: str


@dataclass
class GroundedSample:
    id: str
    image: str
    prompt: str
    response: str
    spans: list[GroundedSpan]


@dataclass(frozen=True)
class Replacement:
    orig_start: int
    orig_end: int
    orig_phrase: str
    proposal: str
    new_start: int
    new_end: int
    sentence_expanded: bool
    retries: int


@dataclass
class CorruptionProvenance:
    """Audit trail for one corruption run over one sample.

    kept_spans hold the grounded spans that survived verbatim, at their
    remapped positions in the corrupted response. warning is set only when
    the proposer failed irrecoverably and the sample fell back to the
    uncorrupted path.
    """

    corrupted: bool
    seed_key: int
    replacements: list[Replacement] = field(default_factory=list)
    kept_spans: list[tuple[int, int]] = field(default_factory=list)
    warning: str | None = None


@dataclass
class CorruptedSample:
    id: str
    image: str
    prompt: str
    response: str
    hallucinated_spans: list[tuple[int, int]]
    provenance: CorruptionProvenance


@dataclass
class PredictionRecord:
    """Either token labels or hallucinated character spans, never both."""

    id: str
    token_labels: list[int] | None = None
    char_spans: list[tuple[int, int]] | None = None

    def __post_init__(self):
        if (self.token_labels is None) == (self.char_spans is None):
            raise ValidationError(
                f"prediction {self.id!r} must carry exactly one of token_labels/spans"
            )


@dataclass
class SplitManifest:
    seed: int
    splits: dict[str, list[str]]


def _expect(cond: bool, line_no: int, reason: str) -> None:
    if not cond:
        raise MalformedRecord(line_no, reason)


def _get_str(obj: dict, key: str, line_no: int) -> str:
    v = obj.get(key)
    _expect(isinstance(v, str), line_no, f"field {key!r} must be a string")
    return v


def _get_int(obj: dict, key: str, line_no: int) -> int:
    v = obj.get(key)
    _expect(type(v) is int, line_no, f"field {key!r} must be an integer")
    return v


def validate_intervals(
    sample_id: str, intervals: list[tuple[int, int]], text_len: int, what: str
) -> None:
    """Enforce in-bounds, sorted, non-overlapping intervals."""
    prev_end = -1
    for i, (start, end) in enumerate(intervals):
        if not (0 <= start < end <= text_len):
            raise SpanIntegrityError(
                sample_id, i, f"{what} ({start}, {end}) out of bounds for length {text_len}"
            )
        if start < prev_end:
            raise SpanIntegrityError(sample_id, i, f"{what} overlaps or is out of order")
        prev_end = end


def validate_grounded(sample: GroundedSample) -> None:
    validate_intervals(
        sample.id, [(s.start, s.end) for s in sample.spans], len(sample.response), "span"
    )
    for i, span in enumerate(sample.spans):
        if sample.response[span.start : span.end] != span.phrase:
            raise SpanIntegrityError(
                sample.id,
                i,
                f"phrase {span.phrase!r} != response slice "
                f"{sample.response[span.start:span.end]!r}",
            )
        if not span.phrase.strip():
            raise SpanIntegrityError(sample.id, i, "phrase is empty or whitespace-only")


def grounded_to_dict(sample: GroundedSample) -> dict:
    return {
        "id": sample.id,
        "image": sample.image,
        "prompt": sample.prompt,
        "response": sample.response,
        "spans": [
            {"start": s.start, "end": s.end, "phrase": s.phrase} for s in sample.spans
        ],
    }


def grounded_from_dict(obj: dict, line_no: int = 0) -> GroundedSample:
    _expect(isinstance(obj, dict), line_no, "record must be a JSON object")
    spans_raw = obj.get("spans")
    _expect(isinstance(spans_raw, list), line_no, "field 'spans' must be a list")
    spans = []
    for s in spans_raw:
        _expect(isinstance(s, dict), line_no, "each span must be an object")
        spans.append(
            GroundedSpan(
                _get_int(s, "start", line_no),
                _get_int(s, "end", line_no),
                _get_str(s, "phrase", line_no),
            )
        )
    return GroundedSample(
        id=_get_str(obj, "id", line_no),
        image=_get_str(obj, "image", line_no),
        prompt=_get_str(obj, "prompt", line_no),
        response=_get_str(obj, "response", line_no),
        spans=spans,
    )


def parse_grounded(
    stream: IO[str], collect_errors: list[ValidationError] | None = None
) -> Iterator[GroundedSample]:
    """Yield validated samples in file order.

    With collect_errors=None (default) the first bad record raises; when a
    list is supplied, bad records are appended to it and skipped.
    """
    seen: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
            sample = grounded_from_dict(obj, line_no)
            if sample.id in seen:
                raise DuplicateId(sample.id)
            validate_grounded(sample)
        except ValidationError as exc:
            if collect_errors is None:
                raise
            collect_errors.append(exc)
            continue
        seen.add(sample.id)
        yield sample


def write_grounded(samples: Iterable[GroundedSample], sink: IO[str]) -> int:
    count = 0
    for sample in samples:
        sink.write(json.dumps(grounded_to_dict(sample), ensure_ascii=False) + "\n")
        count += 1
    return count


def _intervals_to_json(intervals: list[tuple[int, int]]) -> list[dict]:
    return [{"start": s, "end": e} for s, e in intervals]


def _intervals_from_json(raw: object, line_no: int) -> list[tuple[int, int]]:
    _expect(isinstance(raw, list), line_no, "interval list expected")
    out = []
    for item in raw:
        _expect(isinstance(item, dict), line_no, "each interval must be an object")
        out.append((_get_int(item, "start", line_no), _get_int(item, "end", line_no)))
    return out


def corrupted_to_dict(sample: CorruptedSample) -> dict:
    prov = sample.provenance
    prov_obj = {
        "corrupted": prov.corrupted,
        "seed_key": prov.seed_key,
        "replacements": [
            {
                "orig_start": r.orig_start,
                "orig_end": r.orig_end,
                "orig_phrase": r.orig_phrase,
                "proposal": r.proposal,
                "new_start": r.new_start,
                "new_end": r.new_end,
                "sentence_expanded": r.sentence_expanded,
                "retries": r.retries,
            }
            for r in prov.replacements
        ],
        "kept_spans": _intervals_to_json(prov.kept_spans),
    }
    if prov.warning is not None:
        prov_obj["warning"] = prov.warning
    return {
        "id": sample.id,
        "image": sample.image,
        "prompt": sample.prompt,
        "response": sample.response,
        "hallucinated_spans": _intervals_to_json(sample.hallucinated_spans),
        "provenance": prov_obj,
    }


def corrupted_from_dict(obj: dict, line_no: int = 0) -> CorruptedSample:
    _expect(isinstance(obj, dict), line_no, "record must be a JSON object")
    prov_raw = obj.get("provenance")
    _expect(isinstance(prov_raw, dict), line_no, "field 'provenance' must be an object")
    corrupted = prov_raw.get("corrupted")
    _expect(isinstance(corrupted, bool), line_no, "provenance.corrupted must be a boolean")
    repls_raw = prov_raw.get("replacements")
    _expect(isinstance(repls_raw, list), line_no, "provenance.replacements must be a list")
    replacements = []
    for r in repls_raw:
        _expect(isinstance(r, dict), line_no, "each replacement must be an object")
        expanded = r.get("sentence_expanded")
        _expect(isinstance(expanded, bool), line_no, "sentence_expanded must be a boolean")
        replacements.append(
            Replacement(
                orig_start=_get_int(r, "orig_start", line_no),
                orig_end=_get_int(r, "orig_end", line_no),
                orig_phrase=_get_str(r, "orig_phrase", line_no),
                proposal=_get_str(r, "proposal", line_no),
                new_start=_get_int(r, "new_start", line_no),
                new_end=_get_int(r, "new_end", line_no),
                sentence_expanded=expanded,
                retries=_get_int(r, "retries", line_no),
            )
        )
    warning = prov_raw.get("warning")
    if warning is not None:
        _expect(isinstance(warning, str), line_no, "provenance.warning must be a string")
    sample = CorruptedSample(
        id=_get_str(obj, "id", line_no),
        image=_get_str(obj, "image", line_no),
        prompt=_get_str(obj, "prompt", line_no),
        response=_get_str(obj, "response", line_no),
        hallucinated_spans=_intervals_from_json(obj.get("hallucinated_spans"), line_no),
        provenance=CorruptionProvenance(
            corrupted=corrupted,
            seed_key=_get_int(prov_raw, "seed_key", line_no),
            replacements=replacements,
            kept_spans=_intervals_from_json(prov_raw.get("kept_spans"), line_no),
            warning=warning,
        ),
    )
    validate_corrupted(sample)
    return sample


def validate_corrupted(sample: CorruptedSample) -> None:
    n = len(sample.response)
    validate_intervals(sample.id, sample.hallucinated_spans, n, "hallucinated span")
    validate_intervals(sample.id, sample.provenance.kept_spans, n, "kept span")
    if not sample.provenance.corrupted and sample.hallucinated_spans:
        raise SpanIntegrityError(
            sample.id, 0, "uncorrupted sample carries hallucinated spans"
        )
    for i, r in enumerate(sample.provenance.replacements):
        if sample.response[r.new_start : r.new_end] != r.proposal:
            raise SpanIntegrityError(
                sample.id, i, f"replacement proposal {r.proposal!r} != response slice"
            )


def parse_corrupted(stream: IO[str]) -> Iterator[CorruptedSample]:
    seen: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
        sample = corrupted_from_dict(obj, line_no)
        if sample.id in seen:
            raise DuplicateId(sample.id)
        seen.add(sample.id)
        yield sample


def write_corrupted(samples: Iterable[CorruptedSample], sink: IO[str]) -> int:
    count = 0
    for sample in samples:
        sink.write(json.dumps(corrupted_to_dict(sample), ensure_ascii=False) + "\n")
        count += 1
    return count


def parse_predictions(stream: IO[str]) -> Iterator[PredictionRecord]:
    seen: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
        _expect(isinstance(obj, dict), line_no, "record must be a JSON object")
        sample_id = _get_str(obj, "id", line_no)
        if sample_id in seen:
            raise DuplicateId(sample_id)
        seen.add(sample_id)
        has_labels = "token_labels" in obj
        has_spans = "spans" in obj
        _expect(
            has_labels != has_spans,
            line_no,
            "record must carry exactly one of 'token_labels' or 'spans'",
        )
        if has_labels:
            labels = obj["token_labels"]
            _expect(isinstance(labels, list), line_no, "'token_labels' must be a list")
            _expect(
                all(type(v) is int and v in (0, 1) for v in labels),
                line_no,
                "token labels must be 0 or 1",
            )
            yield PredictionRecord(id=sample_id, token_labels=labels)
        else:
            spans = _intervals_from_json(obj["spans"], line_no)
            prev_end = -1
            for start, end in spans:
                _expect(0 <= start < end, line_no, f"bad span ({start}, {end})")
                _expect(start >= prev_end, line_no, "prediction spans overlap")
                prev_end = end
            yield PredictionRecord(id=sample_id, char_spans=spans)


def prediction_to_dict(rec: PredictionRecord) -> dict:
    if rec.token_labels is not None:
        return {"id": rec.id, "token_labels": rec.token_labels}
    return {"id": rec.id, "spans": _intervals_to_json(rec.char_spans)}


def write_predictions(records: Iterable[PredictionRecord], sink: IO[str]) -> int:
    count = 0
    for rec in records:
        sink.write(json.dumps(prediction_to_dict(rec), ensure_ascii=False) + "\n")
        count += 1
    return count


def corpus_stats(samples: Iterable[GroundedSample]) -> dict:
    """Sample and span counts, mean spans per sample (3 decimals), and a
    histogram of span lengths in characters."""
    sample_count = 0
    span_count = 0
    histogram: dict[int, int] = {}
    for sample in samples:
        sample_count += 1
        span_count += len(sample.spans)
        for span in sample.spans:
            length = span.end - span.start
            histogram[length] = histogram.get(length, 0) + 1
    mean = round(span_count / sample_count, 3) if sample_count else 0.0
    return {
        "sample_count": sample_count,
        "span_count": span_count,
        "mean_spans_per_sample": mean,
        "span_length_histogram": dict(sorted(histogram.items())),
    }


def make_splits(
    ids: list[str], sizes: list[int], seed: int, subset_sizes: Iterable[int] = ()
) -> SplitManifest:
    """Shuffle once with the seed, then slice.

    sizes must be [train, val]; subsets are prefixes of the train split
    (named train_{size}), so smaller subsets nest inside larger ones.
    """
    if len(set(ids)) != len(ids):
        raise ValidationError("split ids must be unique")
    if len(sizes) != 2:
        raise SizesExceedCorpus(f"expected two top-level sizes, got {len(sizes)}")
    if any(s <= 0 for s in sizes):
        raise SizesExceedCorpus("split sizes must be positive")
    if sum(sizes) > len(ids):
        raise SizesExceedCorpus(
            f"sizes {sizes} sum to {sum(sizes)} but only {len(ids)} ids are available"
        )
    subset_sizes = sorted(set(subset_sizes))
    if any(s <= 0 or s > sizes[0] for s in subset_sizes):
        raise SizesExceedCorpus("subset sizes must lie in [1, train size]")
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    train = shuffled[: sizes[0]]
    val = shuffled[sizes[0] : sizes[0] + sizes[1]]
    splits = {"train": train, "val": val}
    for size in subset_sizes:
        splits[f"train_{size}"] = train[:size]
    return SplitManifest(seed=seed, splits=splits)


def manifest_to_dict(manifest: SplitManifest) -> dict:
    return {"seed": manifest.seed, "splits": manifest.splits}


def read_manifest(stream: IO[str]) -> SplitManifest:
    obj = json.load(stream)
    if not isinstance(obj, dict) or not isinstance(obj.get("splits"), dict):
        raise MalformedRecord(1, "manifest must be an object with a 'splits' mapping")
    seed = obj.get("seed")
    if type(seed) is not int:
        raise MalformedRecord(1, "manifest 'seed' must be an integer")
    splits = {}
    for name, id_list in obj["splits"].items():
        if not isinstance(id_list, list) or not all(isinstance(i, str) for i in id_list):
            raise MalformedRecord(1, f"split {name!r} must be a list of id strings")
        splits[name] = list(id_list)
    return SplitManifest(seed=seed, splits=splits)


def write_manifest(manifest: SplitManifest, sink: IO[str]) -> None:
    json.dump(manifest_to_dict(manifest), sink, ensure_ascii=False)
    sink.write("\n")
