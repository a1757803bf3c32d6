"""Decode-time banning of surface tokens.

Banned tokens arrive as plain words ("bottles"), but the model emits vocab
pieces ("▁bottles", "bott", "les"). Banning only the exact piece whose
string matches the word would leak the word through case variants or
alternative segmentations of the same surface form, so the ban is applied
at the surface level: every vocab piece whose detokenized, case-folded form
equals a banned token is suppressed. Pieces that merely contain a banned
token as a substring are left alone; only whole-piece surface matches count.

Bans are scoped per mask. During generation the decoder alternates between
sentinel tokens and the segments that fill them, so the ban set in force at
any step is the one belonging to the most recently emitted sentinel. Before
the first sentinel nothing is banned; that prefix is discarded when the
output is parsed into segments.
"""

from __future__ import annotations

import math
import re

from transformers import LogitsProcessor

SENTINEL_RE = re.compile(r"<extra_id_(\d+)>")


def sentinel_table(tokenizer) -> dict[int, int]:
    """Map each sentinel's vocab id to its slot number k."""
    table: dict[int, int] = {}
    for token, token_id in tokenizer.get_vocab().items():
        match = SENTINEL_RE.fullmatch(token)
        if match:
            table[token_id] = int(match.group(1))
    return table


def surface_table(tokenizer) -> dict[str, tuple[int, ...]]:
    """Map each case-folded piece surface to every vocab id producing it.

    Built once per loaded model. ``convert_tokens_to_string`` applies the
    tokenizer's own decoder, so word-boundary markers are resolved the same
    way they are in real output.
    """
    surfaces: dict[str, list[int]] = {}
    for token, token_id in tokenizer.get_vocab().items():
        surface = tokenizer.convert_tokens_to_string([token]).strip().casefold()
        if surface:
            surfaces.setdefault(surface, []).append(token_id)
    return {surface: tuple(sorted(ids)) for surface, ids in surfaces.items()}


def ban_ids(surfaces: dict[str, tuple[int, ...]], banned_tokens: list[str]) -> tuple[int, ...]:
    """Vocab ids to suppress for one mask's banned token list."""
    ids: set[int] = set()
    for token in banned_tokens:
        ids.update(surfaces.get(token.strip().casefold(), ()))
    return tuple(sorted(ids))


class SegmentBanProcessor(LogitsProcessor):
    """Suppress each mask's banned ids while its segment is being decoded.

    Tracks, per batch row, which sentinel was emitted last and zeroes out
    (sets to -inf) the logits of that mask's banned vocab ids. Rows are
    independent because sampled candidates diverge after the first step.
    """

    def __init__(
        self,
        sentinels: dict[int, int],
        bans_by_slot: dict[int, tuple[int, ...]],
    ) -> None:
        self.sentinels = sentinels
        self.bans_by_slot = bans_by_slot

    def __call__(self, input_ids, scores):
        for row in range(input_ids.shape[0]):
            slot = None
            for token_id in input_ids[row].tolist():
                mapped = self.sentinels.get(token_id)
                if mapped is not None:
                    slot = mapped
            if slot is None:
                continue
            banned = self.bans_by_slot.get(slot)
            if banned:
                scores[row, list(banned)] = -math.inf
        return scores
