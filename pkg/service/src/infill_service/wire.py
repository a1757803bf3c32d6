"""Request and response shapes for the propose endpoint.

The JSON contract: a request carries ``text_with_masks`` in which every
masked span appears as a ``<mask_k>`` placeholder, plus one mask record per
span to fill. The reply carries one proposal entry per requested mask index,
each with a list of candidate strings, plus a metadata block describing how
they were decoded. Schema violations and semantically impossible requests
are both client errors (HTTP 400).
"""

from __future__ import annotations

import re

from pydantic import BaseModel, ConfigDict, Field

MASK_TOKEN_RE = re.compile(r"<mask_(\d+)>")


class InvalidRequest(ValueError):
    """A request that parses as JSON but cannot be served."""


class WireMask(BaseModel):
    """One masked span the client wants filled."""

    model_config = ConfigDict(extra="forbid")

    index: int = Field(ge=0)
    original: str = ""
    banned_tokens: list[str] = Field(default_factory=list)


class ProposeRequest(BaseModel):
    """Body of ``POST /v1/propose``."""

    model_config = ConfigDict(extra="forbid")

    text_with_masks: str
    masks: list[WireMask] = Field(min_length=1)
    num_candidates: int = Field(default=1, ge=1)
    seed: int = 0


def mask_indices_in_text(text: str) -> set[int]:
    """Indices k of every ``<mask_k>`` placeholder present in the text."""
    return {int(m.group(1)) for m in MASK_TOKEN_RE.finditer(text)}


def validate_semantics(request: ProposeRequest) -> None:
    """Reject requests whose masks and text disagree.

    Mask indices must be unique and every requested index must have a
    placeholder in the text. The text may contain additional placeholders
    beyond the requested set; clients re-request subsets of masks against
    the unchanged text, so extra placeholders are conditioned on but not
    answered.
    """
    indices = [mask.index for mask in request.masks]
    if len(set(indices)) != len(indices):
        raise InvalidRequest("duplicate mask indices in request")
    present = mask_indices_in_text(request.text_with_masks)
    missing = sorted(set(indices) - present)
    if missing:
        raise InvalidRequest(
            f"mask indices {missing} have no <mask_k> placeholder in text_with_masks"
        )
