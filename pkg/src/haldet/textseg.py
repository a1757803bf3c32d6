"""Sentence segmentation, offset-preserving tokenization, and projection
between character spans and token-label sequences.

All offsets count Unicode code points into the source string and are
end-exclusive. The tokenizer is deliberately model-free: maximal runs of
word characters form tokens, every other non-whitespace character is a
single-character token, whitespace is never a token. Both gold labels and
predictions are projected through the same tokenizer, and its identity is
echoed into evaluation reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ValidationError

# Identity string echoed into reports so scores can be attributed to the
# token units they were computed over.
TOKENIZER_ID = "wordpunct-v1"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

_TERMINALS = frozenset(".!?")

# Case-folded words (including their trailing period) that do not end a
# sentence. Frozen; extending it changes segmentation and therefore labels.
_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "approx.",
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.",
        "no.", "fig.", "figs.", "inc.", "ltd.", "co.",
    }
)


class SpanOutOfBounds(ValidationError):
    """A character span does not fit inside the text it refers to."""


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class SentenceSpan:
    start: int
    end: int


@dataclass
class TokenLabelSequence:
    """Tokens plus one binary label per token (1 = hallucinated)."""

    tokens: list[Token]
    labels: list[int]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )


def tokenize(text: str) -> list[Token]:
    """Split text into word and single-character punctuation tokens.

    Total and deterministic; token slices concatenated with the source
    gaps reconstruct the input exactly.
    """
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def word_tokens(text: str) -> list[str]:
    """Case-folded word tokens only (punctuation dropped)."""
    return [t.text.casefold() for t in tokenize(text) if t.text[0].isalnum() or t.text[0] == "_"]


def _is_abbreviation(text: str, dot_index: int) -> bool:
    # Word is everything back to the previous whitespace, including the dot;
    # leading punctuation such as '(' is stripped before the lookup.
    k = dot_index
    while k > 0 and not text[k - 1].isspace():
        k -= 1
    word = text[k : dot_index + 1].casefold()
    word = word.lstrip("\"'([{")
    return word in _ABBREVIATIONS


def split_sentences(text: str) -> list[SentenceSpan]:
    """Segment text into sentence spans covering all non-whitespace.

    A sentence ends right after '.', '!' or '?' when the next character is
    whitespace (or end of text), unless the word carrying a '.' is on the
    abbreviation guard list. Text with no terminal punctuation is a single
    sentence. Every boundary falls on a token boundary because sentences
    start at non-whitespace and end after a punctuation token.
    """
    spans: list[SentenceSpan] = []
    n = len(text)
    i = 0
    while i < n:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        start = i
        end = None
        j = i
        while j < n:
            c = text[j]
            if c in _TERMINALS and (j + 1 == n or text[j + 1].isspace()):
                if c == "." and _is_abbreviation(text, j):
                    j += 1
                    continue
                end = j + 1
                break
            j += 1
        if end is None:
            end = n
            while end > start and text[end - 1].isspace():
                end -= 1
        spans.append(SentenceSpan(start, end))
        i = end
    return spans


def project_to_tokens(
    text: str, hallucinated_char_spans: list[tuple[int, int]]
) -> TokenLabelSequence:
    """Label each token 1 iff it overlaps a hallucinated char span by >= 1 char."""
    n = len(text)
    for start, end in hallucinated_char_spans:
        if not (0 <= start < end <= n):
            raise SpanOutOfBounds(f"span ({start}, {end}) out of bounds for text of length {n}")
    tokens = tokenize(text)
    spans = sorted(hallucinated_char_spans)
    labels = []
    si = 0
    for tok in tokens:
        while si < len(spans) and spans[si][1] <= tok.start:
            si += 1
        hit = False
        for s, e in spans[si:]:
            if s >= tok.end:
                break
            if e > tok.start:
                hit = True
                break
        labels.append(1 if hit else 0)
    return TokenLabelSequence(tokens, labels)


def project_to_chars(seq: TokenLabelSequence) -> list[tuple[int, int]]:
    """Collapse maximal runs of label-1 tokens into character spans."""
    out: list[tuple[int, int]] = []
    run_start = None
    for tok, label in zip(seq.tokens, seq.labels):
        if label == 1:
            if run_start is None:
                run_start = tok.start
            run_end = tok.end
        elif run_start is not None:
            out.append((run_start, run_end))
            run_start = None
    if run_start is not None:
        out.append((run_start, run_end))
    return out
