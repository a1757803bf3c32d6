"""Corrupted-grounding data generation with exact offset bookkeeping.

The grounded variant masks every grounded span, asks a proposer for
replacements, replaces a random 75-100% subset of the fillable masks, and
labels the replaced intervals hallucinated, each affected sentence being
expanded to a full-sentence label with probability 0.5. Two ablation
variants keep the same machinery but change where masks come from
(random_span) or where proposals come from (random_infill).

All randomness is drawn from a per-sample stream keyed by (seed, id) in a
fixed order, so output is byte-identical across runs and worker counts.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Iterable, Iterator

from .corpus import (
    CorruptedSample,
    CorruptionProvenance,
    GroundedSample,
    Replacement,
)
from .errors import ServiceError, ValidationError
from .proposer import MaskRequest, MaskSlot, WordFreqProposer, build_ban_set, sentinel
from .textseg import split_sentences, tokenize

VARIANTS = ("grounded", "random_span", "random_infill")


@dataclass(frozen=True)
class CorruptionConfig:
    seed: int
    p_corrupt: float = 0.95
    replace_fraction_min: float = 0.75
    replace_fraction_max: float = 1.0
    p_sentence_expand: float = 0.5
    variant: str = "grounded"
    proposer_name: str = "mock"
    # Sentence-selection rate for random_span; None = auto-calibrate so the
    # expected mask count matches the corpus's mean grounded spans/sample.
    p_sent_select: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_corrupt <= 1.0 or not 0.0 <= self.p_sentence_expand <= 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        if not 0.0 < self.replace_fraction_min <= self.replace_fraction_max <= 1.0:
            raise ValidationError("need 0 < replace_fraction_min <= max <= 1")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.p_sent_select is not None and not 0.0 <= self.p_sent_select <= 1.0:
            raise ValidationError("p_sent_select must lie in [0, 1]")


def sample_rng(seed: int, sample_id: str) -> tuple[random.Random, int]:
    """Per-sample stream keyed by a 63-bit hash mix of (seed, id)."""
    digest = hashlib.sha256(f"{seed}\x1f{sample_id}".encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
    return random.Random(key), key


def replacement_count(rng: random.Random, n: int, cfg: CorruptionConfig) -> int:
    """k = max(1, round(f*n)) with f ~ U[min, max], over n fillable masks."""
    f = rng.uniform(cfg.replace_fraction_min, cfg.replace_fraction_max)
    return max(1, round(f * n))


@dataclass
class SampleOutcome:
    """One corrupted sample plus the counters RunStats aggregates."""

    sample: CorruptedSample
    fillable: int = 0
    replaced: int = 0
    affected_sentences: int = 0
    expanded_sentences: int = 0
    unfillable: int = 0
    proposer_failed: bool = False


@dataclass
class RunStats:
    samples: int = 0
    corrupted: int = 0
    unfillable: int = 0
    proposer_failures: int = 0
    replaced_ratio_sum: float = 0.0
    replaced_ratio_count: int = 0
    sentences_affected: int = 0
    sentences_expanded: int = 0

    def add(self, outcome: SampleOutcome) -> None:
        self.samples += 1
        self.corrupted += outcome.sample.provenance.corrupted
        self.unfillable += outcome.unfillable
        self.proposer_failures += outcome.proposer_failed
        if outcome.fillable:
            self.replaced_ratio_sum += outcome.replaced / outcome.fillable
            self.replaced_ratio_count += 1
        self.sentences_affected += outcome.affected_sentences
        self.sentences_expanded += outcome.expanded_sentences

    @property
    def corrupted_fraction(self) -> float:
        return self.corrupted / self.samples if self.samples else 0.0

    @property
    def replaced_fraction(self) -> float:
        if not self.replaced_ratio_count:
            return 0.0
        return self.replaced_ratio_sum / self.replaced_ratio_count

    @property
    def sentence_expansion_fraction(self) -> float:
        if not self.sentences_affected:
            return 0.0
        return self.sentences_expanded / self.sentences_affected

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "corrupted": self.corrupted,
            "corrupted_fraction": round(self.corrupted_fraction, 6),
            "replaced_fraction": round(self.replaced_fraction, 6),
            "sentences_affected": self.sentences_affected,
            "sentences_expanded": self.sentences_expanded,
            "sentence_expansion_fraction": round(self.sentence_expansion_fraction, 6),
            "unfillable": self.unfillable,
            "proposer_failures": self.proposer_failures,
        }


def _uncorrupted(
    sample: GroundedSample, seed_key: int, warning: str | None = None
) -> CorruptedSample:
    return CorruptedSample(
        id=sample.id,
        image=sample.image,
        prompt=sample.prompt,
        response=sample.response,
        hallucinated_spans=[],
        provenance=CorruptionProvenance(
            corrupted=False,
            seed_key=seed_key,
            kept_spans=[(s.start, s.end) for s in sample.spans],
            warning=warning,
        ),
    )


def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    # Overlapping or adjacent intervals collapse into one.
    merged: list[tuple[int, int]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _build_request(
    response: str, masks: list[tuple[int, int, str]], proposal_seed: int
) -> MaskRequest:
    parts = []
    prev = 0
    slots = []
    for i, (start, end, phrase) in enumerate(masks):
        parts.append(response[prev:start])
        parts.append(sentinel(i))
        slots.append(MaskSlot(index=i, original=phrase, banned_tokens=build_ban_set(phrase)))
        prev = end
    parts.append(response[prev:])
    return MaskRequest(
        text_with_masks="".join(parts),
        masks=tuple(slots),
        num_candidates=1,
        seed=proposal_seed,
    )


def _corrupt_with_masks(
    sample: GroundedSample,
    cfg: CorruptionConfig,
    proposer,
    masks: list[tuple[int, int, str]],
    rng: random.Random,
    seed_key: int,
) -> SampleOutcome:
    """Shared mask-replace-relabel flow. Draw order on the sample stream:
    proposal seed, replace fraction f, k-subset, then one expansion draw
    per affected sentence in text order."""
    proposal_seed = rng.getrandbits(63)
    request = _build_request(sample.response, masks, proposal_seed)
    try:
        proposals = proposer.propose(request)
    except ServiceError as exc:
        return SampleOutcome(
            sample=_uncorrupted(sample, seed_key, warning=f"proposer failed: {exc}"),
            proposer_failed=True,
        )
    by_index = {p.index: p for p in proposals}
    fillable = [i for i in range(len(masks)) if by_index[i].candidate is not None]
    unfillable = len(masks) - len(fillable)
    if not fillable:
        return SampleOutcome(
            sample=_uncorrupted(sample, seed_key), unfillable=unfillable
        )

    k = replacement_count(rng, len(fillable), cfg)
    chosen = {fillable[j] for j in rng.sample(range(len(fillable)), k)}

    parts = []
    prev = 0
    delta = 0
    replacements: list[Replacement] = []
    kept: list[tuple[int, int]] = []
    for i, (start, end, phrase) in enumerate(masks):
        parts.append(sample.response[prev:start])
        if i in chosen:
            candidate = by_index[i].candidate
            new_start = start + delta
            replacements.append(
                Replacement(
                    orig_start=start,
                    orig_end=end,
                    orig_phrase=phrase,
                    proposal=candidate,
                    new_start=new_start,
                    new_end=new_start + len(candidate),
                    sentence_expanded=False,
                    retries=by_index[i].retries,
                )
            )
            parts.append(candidate)
            delta += len(candidate) - (end - start)
        else:
            kept.append((start + delta, end + delta))
            parts.append(phrase)
        prev = end
    parts.append(sample.response[prev:])
    new_response = "".join(parts)

    hall = [(r.new_start, r.new_end) for r in replacements]
    affected = 0
    expanded_spans: list[tuple[int, int]] = []
    for sent in split_sentences(new_response):
        if any(s < sent.end and sent.start < e for s, e in hall):
            affected += 1
            if rng.random() < cfg.p_sentence_expand:
                expanded_spans.append((sent.start, sent.end))
    for j, r in enumerate(replacements):
        if any(r.new_start < e and s < r.new_end for s, e in expanded_spans):
            replacements[j] = dc_replace(r, sentence_expanded=True)

    corrupted = CorruptedSample(
        id=sample.id,
        image=sample.image,
        prompt=sample.prompt,
        response=new_response,
        hallucinated_spans=_merge_intervals(hall + expanded_spans),
        provenance=CorruptionProvenance(
            corrupted=True,
            seed_key=seed_key,
            replacements=replacements,
            kept_spans=kept,
        ),
    )
    return SampleOutcome(
        sample=corrupted,
        fillable=len(fillable),
        replaced=k,
        affected_sentences=affected,
        expanded_sentences=len(expanded_spans),
        unfillable=unfillable,
    )


def corrupt_sample(sample: GroundedSample, cfg: CorruptionConfig, proposer) -> SampleOutcome:
    """Grounded variant: mask every grounded span."""
    rng, seed_key = sample_rng(cfg.seed, sample.id)
    do_corrupt = rng.random() < cfg.p_corrupt
    if not do_corrupt or not sample.spans:
        return SampleOutcome(sample=_uncorrupted(sample, seed_key))
    masks = [(s.start, s.end, s.phrase) for s in sample.spans]
    return _corrupt_with_masks(sample, cfg, proposer, masks, rng, seed_key)


def corrupt_random_span(
    sample: GroundedSample, cfg: CorruptionConfig, proposer
) -> SampleOutcome:
    """Ablation variant: masks are random token-aligned sentence spans
    instead of grounded spans. One selection draw per sentence, then a
    length draw (uniform 1-5 tokens, clamped) and a start draw per
    selected sentence."""
    if cfg.p_sent_select is None:
        raise ValidationError("random_span requires p_sent_select (or auto-calibration)")
    rng, seed_key = sample_rng(cfg.seed, sample.id)
    do_corrupt = rng.random() < cfg.p_corrupt
    if not do_corrupt:
        return SampleOutcome(sample=_uncorrupted(sample, seed_key))
    tokens = tokenize(sample.response)
    masks: list[tuple[int, int, str]] = []
    for sent in split_sentences(sample.response):
        if rng.random() >= cfg.p_sent_select:
            continue
        in_sent = [t for t in tokens if t.start >= sent.start and t.end <= sent.end]
        if not in_sent:
            continue
        length = min(rng.randint(1, 5), len(in_sent))
        start_idx = rng.randrange(len(in_sent) - length + 1)
        first, last = in_sent[start_idx], in_sent[start_idx + length - 1]
        masks.append((first.start, last.end, sample.response[first.start : last.end]))
    if not masks:
        return SampleOutcome(sample=_uncorrupted(sample, seed_key))
    return _corrupt_with_masks(sample, cfg, proposer, masks, rng, seed_key)


def corrupt_random_infill(
    sample: GroundedSample, cfg: CorruptionConfig, proposer=None
) -> SampleOutcome:
    """Ablation variant: grounded masks, word-frequency proposals."""
    if proposer is None:
        proposer = WordFreqProposer()
    return corrupt_sample(sample, cfg, proposer)


def _dispatch(cfg: CorruptionConfig, proposer) -> Callable[[GroundedSample], SampleOutcome]:
    if cfg.variant == "grounded":
        return lambda s: corrupt_sample(s, cfg, proposer)
    if cfg.variant == "random_span":
        return lambda s: corrupt_random_span(s, cfg, proposer)
    return lambda s: corrupt_random_infill(s, cfg, proposer)


def calibrate_sentence_rate(samples: list[GroundedSample]) -> float:
    """p_sent_select such that expected masks/sample matches the corpus's
    mean grounded spans/sample, capped at 1."""
    spans = sum(len(s.spans) for s in samples)
    sentences = sum(len(split_sentences(s.response)) for s in samples)
    if not sentences:
        return 0.0
    return min(1.0, spans / sentences)


def corrupt_all(
    samples: Iterable[GroundedSample],
    cfg: CorruptionConfig,
    proposer,
    workers: int = 1,
) -> Iterator[SampleOutcome]:
    """Process samples, preserving input order for any worker count."""
    func = _dispatch(cfg, proposer)
    if workers <= 1:
        yield from map(func, samples)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(func, samples, chunksize=16)


def run_pipeline(
    samples: Iterable[GroundedSample],
    cfg: CorruptionConfig,
    proposer=None,
    workers: int = 1,
) -> tuple[list[CorruptedSample], RunStats]:
    samples = list(samples)
    if cfg.variant == "random_span" and cfg.p_sent_select is None:
        cfg = dc_replace(cfg, p_sent_select=calibrate_sentence_rate(samples))
    if cfg.variant == "random_infill" and proposer is None:
        proposer = WordFreqProposer()
    if proposer is None:
        raise ValidationError(f"variant {cfg.variant!r} needs a proposer")
    stats = RunStats()
    out = []
    for outcome in corrupt_all(samples, cfg, proposer, workers):
        stats.add(outcome)
        out.append(outcome.sample)
    return out, stats
