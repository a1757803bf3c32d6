"""Best-effort converters from upstream release formats.

These are one-off ingestion helpers, not a stability-guaranteed API: field
names in upstream releases drift, so each converter documents the exact
shape it expects and fails loudly on anything else.

gvc_tags: grounded-chat records whose response marks grounded phrases
inline with <p>...</p> tags; the converter strips the tags and records
character offsets into the untagged response.

mhaldetect: annotation records carrying the response as a list of labeled
segments; segments whose label contains "inaccurate" (any case) become
hallucinated spans in a gold evaluation file.
"""

from __future__ import annotations

import json
import re
from typing import IO, Iterator

from .corpus import (
    CorruptedSample,
    CorruptionProvenance,
    GroundedSample,
    GroundedSpan,
    MalformedRecord,
    validate_corrupted,
    validate_grounded,
)

_TAG_RE = re.compile(r"<p>(.*?)</p>", re.DOTALL)


def _load_lines(stream: IO[str]) -> Iterator[tuple[int, dict]]:
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        yield line_no, obj


def convert_gvc_tags(stream: IO[str]) -> Iterator[GroundedSample]:
    """Expects per line: {"id"?, "image", "prompt", "response"} with <p>
    tags around grounded phrases inside the response."""
    for line_no, obj in _load_lines(stream):
        tagged = obj.get("response")
        if not isinstance(tagged, str):
            raise MalformedRecord(line_no, "field 'response' must be a string")
        plain_parts: list[str] = []
        spans: list[GroundedSpan] = []
        cursor = 0
        length = 0
        for match in _TAG_RE.finditer(tagged):
            before = tagged[cursor : match.start()]
            plain_parts.append(before)
            length += len(before)
            phrase = match.group(1)
            if phrase.strip():
                spans.append(GroundedSpan(length, length + len(phrase), phrase))
            plain_parts.append(phrase)
            length += len(phrase)
            cursor = match.end()
        plain_parts.append(tagged[cursor:])
        sample = GroundedSample(
            id=str(obj.get("id", f"gvc-{line_no}")),
            image=str(obj.get("image", "")),
            prompt=str(obj.get("prompt", obj.get("question", ""))),
            response="".join(plain_parts),
            spans=spans,
        )
        validate_grounded(sample)
        yield sample


def convert_mhaldetect(stream: IO[str]) -> Iterator[CorruptedSample]:
    """Expects per line: {"id"?, "image", "question", "segments":
    [{"text": str, "label": str}, ...]}; segment texts are joined with a
    single space unless the boundary already carries whitespace."""
    for line_no, obj in _load_lines(stream):
        segments = obj.get("segments")
        if not isinstance(segments, list) or not segments:
            raise MalformedRecord(line_no, "field 'segments' must be a non-empty list")
        response = ""
        spans: list[tuple[int, int]] = []
        for seg in segments:
            if not isinstance(seg, dict) or not isinstance(seg.get("text"), str):
                raise MalformedRecord(line_no, "each segment needs a string 'text'")
            text = seg["text"]
            if response and not response[-1].isspace() and not text[:1].isspace():
                response += " "
            start = len(response)
            response += text
            label = str(seg.get("label", ""))
            if "inaccurate" in label.casefold() and text.strip():
                spans.append((start, start + len(text)))
        sample = CorruptedSample(
            id=str(obj.get("id", f"mhal-{line_no}")),
            image=str(obj.get("image", "")),
            prompt=str(obj.get("question", obj.get("prompt", ""))),
            response=response,
            hallucinated_spans=spans,
            provenance=CorruptionProvenance(corrupted=bool(spans), seed_key=0),
        )
        validate_corrupted(sample)
        yield sample
