"""Model loading and the propose implementation."""

from __future__ import annotations

import logging
import threading

import torch
from transformers import AutoModelForSeq2SeqLM, AutoTokenizer, LogitsProcessorList

from infill_service.banning import SegmentBanProcessor, ban_ids, sentinel_table, surface_table
from infill_service.config import ServiceConfig
from infill_service.wire import (
    MASK_TOKEN_RE,
    InvalidRequest,
    ProposeRequest,
    mask_indices_in_text,
    validate_semantics,
)

log = logging.getLogger(__name__)

SEED_MASK = (1 << 63) - 1


class InfillModel:
    """A loaded text-to-text model plus everything needed to serve it.

    One instance serves the whole process. Generation runs under a lock so
    that seeding the global torch RNG per request stays deterministic and
    memory use stays bounded; requests are answered in arrival order.
    """

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        log.info("loading model %s", config.model)
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(config.model)
        self.model.eval()
        self.sentinels = sentinel_table(self.tokenizer)
        if not self.sentinels:
            raise ValueError(
                f"tokenizer for {config.model!r} has no <extra_id_k> sentinel tokens; "
                "an in-filling model is required"
            )
        self.slot_to_sentinel = {slot: tid for tid, slot in self.sentinels.items()}
        self.surfaces = surface_table(self.tokenizer)
        self._lock = threading.Lock()
        log.info("model ready, %d sentinel slots", len(self.sentinels))

    def _prepare_text(self, text: str) -> str:
        """Rewrite ``<mask_k>`` placeholders into the model's sentinels."""

        def replace(match) -> str:
            slot = int(match.group(1))
            sentinel_id = self.slot_to_sentinel.get(slot)
            if sentinel_id is None:
                raise InvalidRequest(
                    f"mask index {slot} exceeds the model's {len(self.sentinels)} sentinel slots"
                )
            return self.tokenizer.convert_ids_to_tokens(sentinel_id)

        return MASK_TOKEN_RE.sub(replace, text)

    def propose(self, request: ProposeRequest) -> dict[str, object]:
        """Fill every requested mask and return the wire-shaped reply."""
        validate_semantics(request)
        for slot in sorted(mask_indices_in_text(request.text_with_masks)):
            if slot not in self.slot_to_sentinel:
                raise InvalidRequest(
                    f"mask index {slot} exceeds the model's {len(self.sentinels)} sentinel slots"
                )
        text = self._prepare_text(request.text_with_masks)
        bans_by_slot = {
            mask.index: ban_ids(self.surfaces, mask.banned_tokens) for mask in request.masks
        }
        processor = SegmentBanProcessor(self.sentinels, bans_by_slot)
        sequences = self._generate(text, request.num_candidates, request.seed, processor)
        candidates: dict[int, list[str]] = {mask.index: [] for mask in request.masks}
        for sequence in sequences:
            segments = self._split_segments(sequence)
            for slot, piece_ids in segments.items():
                if slot not in candidates:
                    continue
                filled = self.tokenizer.decode(piece_ids, skip_special_tokens=True).strip()
                if filled:
                    candidates[slot].append(filled)
        return {
            "proposals": [
                {"index": mask.index, "candidates": candidates[mask.index]}
                for mask in request.masks
            ],
            "metadata": self.config.decode_metadata(),
        }

    def _generate(
        self,
        text: str,
        num_candidates: int,
        seed: int,
        processor: SegmentBanProcessor,
    ) -> list[list[int]]:
        encoded = self.tokenizer(text, return_tensors="pt")
        sequences: list[list[int]] = []
        with self._lock, torch.no_grad():
            torch.manual_seed(seed & SEED_MASK)
            remaining = num_candidates
            while remaining > 0:
                batch = min(remaining, self.config.max_batch_size)
                output = self.model.generate(
                    input_ids=encoded.input_ids,
                    attention_mask=encoded.attention_mask,
                    do_sample=True,
                    temperature=self.config.temperature,
                    top_p=self.config.top_p,
                    max_new_tokens=self.config.max_new_tokens,
                    num_return_sequences=batch,
                    logits_processor=LogitsProcessorList([processor]),
                    pad_token_id=self.tokenizer.pad_token_id,
                )
                sequences.extend(output.tolist())
                remaining -= batch
        return sequences

    def _split_segments(self, sequence: list[int]) -> dict[int, list[int]]:
        """Group generated piece ids by the sentinel slot they fill.

        Everything before the first sentinel is discarded, and a slot that
        appears more than once keeps accumulating (sampled decoders can
        revisit a sentinel; the pieces still belong to that slot).
        """
        skip = {self.tokenizer.pad_token_id, self.tokenizer.eos_token_id}
        segments: dict[int, list[int]] = {}
        current: int | None = None
        for token_id in sequence:
            slot = self.sentinels.get(token_id)
            if slot is not None:
                current = slot
                segments.setdefault(current, [])
                continue
            if token_id in skip or current is None:
                continue
            segments[current].append(token_id)
        return segments
