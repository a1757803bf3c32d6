"""Replacement-phrase proposers with original-phrase banning.

A proposer answers a MaskRequest: for each "<mask_k>" sentinel in the text
it returns one accepted candidate phrase, or marks the mask unfillable
after the retry budget. Candidates must not contain any banned token (the
case-folded non-stop-word tokens of the original phrase), must be
non-empty, must not equal the original modulo case and punctuation, and
may be at most four times the original's token length.

Four sources are provided: a fixed-cycle mock, a count-based n-gram model,
a frequency-weighted word sampler, and an HTTP client for an external
in-filling service.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .errors import ServiceError, ValidationError
from .textseg import tokenize, word_tokens

MAX_RETRIES = 3

# Accepted candidates may span at most this many times the original's tokens.
MAX_LEN_FACTOR = 4

_SENTINEL_RE = re.compile(r"<mask_(\d+)>")


class EmptyCorpus(ValidationError):
    """No responses were supplied to train on."""


class ServiceUnavailable(ServiceError):
    """The proposal service cannot be reached or keeps returning 5xx."""


class MalformedServiceReply(ServiceError):
    """The proposal service rejected the request or broke the wire schema."""


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The frozen stop-word list shipped with the package."""
    text = resources.files("haldet").joinpath("data/stopwords_en_v1.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


@lru_cache(maxsize=1)
def word_frequencies() -> tuple[tuple[str, ...], tuple[int, ...]]:
    """The frozen (words, counts) table shipped with the package."""
    text = resources.files("haldet").joinpath("data/wordfreq_en_v1.txt").read_text("utf-8")
    words, counts = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, count = line.split("\t")
        words.append(word)
        counts.append(int(count))
    return tuple(words), tuple(counts)


def build_ban_set(phrase: str) -> frozenset[str]:
    """Case-folded word tokens of the phrase, minus stop words."""
    return frozenset(word_tokens(phrase)) - stopwords()


@dataclass(frozen=True)
class MaskSlot:
    index: int
    original: str
    banned_tokens: frozenset[str]


@dataclass(frozen=True)
class MaskRequest:
    text_with_masks: str
    masks: tuple[MaskSlot, ...]
    num_candidates: int = 1
    seed: int = 0


@dataclass(frozen=True)
class Proposal:
    """One proposer answer for one mask; candidate None means unfillable."""

    index: int
    candidate: str | None
    source: str
    retries: int


def sentinel(index: int) -> str:
    return f"<mask_{index}>"


def validate_request(req: MaskRequest) -> None:
    found = [int(m.group(1)) for m in _SENTINEL_RE.finditer(req.text_with_masks)]
    if found != list(range(len(found))):
        raise ValidationError(f"mask sentinels must be dense and ordered, got {found}")
    declared = [m.index for m in req.masks]
    if sorted(declared) != sorted(set(declared)) or any(
        i < 0 or i >= len(found) for i in declared
    ):
        raise ValidationError(f"mask indices {declared} do not match sentinels {found}")
    if req.num_candidates < 1:
        raise ValidationError("num_candidates must be positive")


def _normalized(phrase: str) -> tuple[str, ...]:
    # Word tokens only, case-folded: the "equal modulo case/punctuation" key.
    return tuple(word_tokens(phrase))


def acceptable(candidate: str, original: str, banned: frozenset[str]) -> bool:
    """The candidate-validation rule shared by every source."""
    if not candidate.strip():
        return False
    cand_tokens = frozenset(word_tokens(candidate)) - stopwords()
    if cand_tokens & banned:
        return False
    if len(tokenize(candidate)) > MAX_LEN_FACTOR * max(1, len(tokenize(original))):
        return False
    if _normalized(candidate) == _normalized(original):
        return False
    return True


class MockProposer:
    """Deterministic fixed-cycle proposer for tests and dry runs.

    The seed picks a start offset into the cycle; each attempt consumes the
    next entry. Candidates still pass the shared validation rule.
    """

    source = "mock"

    CYCLE = (
        "a red umbrella",
        "two wooden crates",
        "a sleeping kitten",
        "an antique lantern",
        "a stack of pancakes",
        "a silver kettle",
        "three paper boats",
        "a crooked mailbox",
        "a velvet curtain",
        "an overturned canoe",
        "a chipped teapot",
        "a woven basket",
        "a rusty weathervane",
        "a pair of binoculars",
        "a checkered tablecloth",
        "an inflatable flamingo",
        "a bronze sundial",
        "a tangled garden hose",
        "a polka dot kite",
        "a marble chessboard",
        "an unlit campfire",
        "a folded newspaper",
        "a cracked flowerpot",
        "a miniature windmill",
    )

    def propose(self, req: MaskRequest) -> list[Proposal]:
        validate_request(req)
        pos = random.Random(req.seed).randrange(len(self.CYCLE))
        out = []
        for mask in req.masks:
            accepted = None
            retries = 0
            for attempt in range(1 + MAX_RETRIES):
                candidate = self.CYCLE[pos % len(self.CYCLE)]
                pos += 1
                if acceptable(candidate, mask.original, mask.banned_tokens):
                    accepted = candidate
                    retries = attempt
                    break
            else:
                retries = MAX_RETRIES
            out.append(Proposal(mask.index, accepted, self.source, retries))
        return out


@dataclass
class NGramModel:
    """Count-based model with add-one smoothing over the shared tokenizer's
    case-folded vocabulary. Contexts are padded with a BOS marker."""

    order: int
    vocab: list[str]
    counts: dict[tuple[str, ...], dict[str, int]] = field(default_factory=dict)

    BOS = "<s>"

    def prob(self, context: tuple[str, ...], token: str) -> float:
        ctx_counts = self.counts.get(context, {})
        total = sum(ctx_counts.values())
        return (ctx_counts.get(token, 0) + 1) / (total + len(self.vocab))

    def to_json(self) -> str:
        return json.dumps(
            {
                "order": self.order,
                "vocab": self.vocab,
                "counts": {
                    "\x1f".join(ctx): dict(sorted(toks.items()))
                    for ctx, toks in sorted(self.counts.items())
                },
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "NGramModel":
        obj = json.loads(text)
        counts = {
            tuple(key.split("\x1f")): {t: int(n) for t, n in toks.items()}
            for key, toks in obj["counts"].items()
        }
        return cls(order=int(obj["order"]), vocab=list(obj["vocab"]), counts=counts)


def model_tokens(text: str) -> list[str]:
    return [t.text.casefold() for t in tokenize(text)]


def train_ngram(responses: list[str], order: int) -> NGramModel:
    if order not in (2, 3):
        raise ValidationError(f"n-gram order must be 2 or 3, got {order}")
    vocab: set[str] = set()
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    trained = False
    for response in responses:
        tokens = model_tokens(response)
        if not tokens:
            continue
        trained = True
        vocab.update(tokens)
        padded = [NGramModel.BOS] * (order - 1) + tokens
        for i in range(order - 1, len(padded)):
            context = tuple(padded[i - order + 1 : i])
            slot = counts.setdefault(context, {})
            slot[padded[i]] = slot.get(padded[i], 0) + 1
    if not trained:
        raise EmptyCorpus("no non-empty responses to train on")
    return NGramModel(order=order, vocab=sorted(vocab), counts=counts)


def sample_phrase(
    model: NGramModel,
    left_context: list[str],
    banned: frozenset[str],
    target_len: int,
    rng: random.Random,
) -> str | None:
    """Multinomial sampling token-by-token with banned tokens zeroed.

    Length is geometric with mean target_len, clamped to [1, 4x target].
    Returns None when the entire vocabulary is banned.
    """
    allowed = [t for t in model.vocab if t not in banned]
    if not allowed:
        return None
    target_len = max(1, target_len)
    cap = MAX_LEN_FACTOR * target_len
    p_stop = 1.0 / target_len
    length = 1
    while length < cap and rng.random() >= p_stop:
        length += 1
    context = list(left_context)
    out = []
    for _ in range(length):
        tail = ([NGramModel.BOS] * (model.order - 1) + context)[-(model.order - 1) :]
        weights = [model.prob(tuple(tail), tok) for tok in allowed]
        token = rng.choices(allowed, weights=weights, k=1)[0]
        out.append(token)
        context.append(token)
    return " ".join(out)


class NGramProposer:
    """Offline proposer backed by an NGramModel.

    Each mask is conditioned on the source text's left context (other
    sentinels stand in for their original phrases), so output is a pure
    function of (request, seed).
    """

    source = "ngram"

    def __init__(self, model: NGramModel):
        self.model = model

    def propose(self, req: MaskRequest) -> list[Proposal]:
        validate_request(req)
        rng = random.Random(req.seed)
        originals = {m.index: m.original for m in req.masks}

        def restore(text: str) -> str:
            return _SENTINEL_RE.sub(lambda m: originals.get(int(m.group(1)), ""), text)

        out = []
        for mask in req.masks:
            head, _, _ = req.text_with_masks.partition(sentinel(mask.index))
            context = model_tokens(restore(head))
            target_len = len(tokenize(mask.original))
            accepted = None
            retries = MAX_RETRIES
            for attempt in range(1 + MAX_RETRIES):
                candidate = sample_phrase(
                    self.model, context, mask.banned_tokens, target_len, rng
                )
                if candidate is not None and acceptable(
                    candidate, mask.original, mask.banned_tokens
                ):
                    accepted = candidate
                    retries = attempt
                    break
            out.append(Proposal(mask.index, accepted, self.source, retries))
        return out


class WordFreqProposer:
    """Frequency-weighted word sampler for the random-infill variant.

    Draws a length uniform in [1, 5], then that many words independently,
    frequency-weighted, joined by single spaces.
    """

    source = "wordfreq"

    def __init__(self, table: tuple[tuple[str, ...], tuple[int, ...]] | None = None):
        self.words, self.counts = table if table is not None else word_frequencies()
        if not self.words:
            raise EmptyCorpus("word-frequency table is empty")

    def propose(self, req: MaskRequest) -> list[Proposal]:
        validate_request(req)
        rng = random.Random(req.seed)
        out = []
        for mask in req.masks:
            accepted = None
            retries = MAX_RETRIES
            for attempt in range(1 + MAX_RETRIES):
                length = rng.randint(1, 5)
                candidate = " ".join(
                    rng.choices(self.words, weights=self.counts, k=length)
                )
                if acceptable(candidate, mask.original, mask.banned_tokens):
                    accepted = candidate
                    retries = attempt
                    break
            out.append(Proposal(mask.index, accepted, self.source, retries))
        return out


def request_to_wire(req: MaskRequest) -> dict:
    return {
        "text_with_masks": req.text_with_masks,
        "masks": [
            {
                "index": m.index,
                "original": m.original,
                "banned_tokens": sorted(m.banned_tokens),
            }
            for m in req.masks
        ],
        "num_candidates": req.num_candidates,
        "seed": req.seed,
    }


def parse_wire_reply(obj: object, expected_indices: set[int]) -> dict[int, list[str]]:
    """Validate a /v1/propose response body and index its candidates."""
    if not isinstance(obj, dict) or not isinstance(obj.get("proposals"), list):
        raise MalformedServiceReply("reply must be an object with a 'proposals' list")
    candidates: dict[int, list[str]] = {}
    for item in obj["proposals"]:
        if (
            not isinstance(item, dict)
            or type(item.get("index")) is not int
            or not isinstance(item.get("candidates"), list)
            or not all(isinstance(c, str) for c in item["candidates"])
        ):
            raise MalformedServiceReply(f"bad proposal entry: {item!r}")
        candidates[item["index"]] = item["candidates"]
    missing = expected_indices - set(candidates)
    if missing:
        raise MalformedServiceReply(f"reply is missing masks {sorted(missing)}")
    return candidates


class ServiceProposer:
    """HTTP client for the external in-filling service.

    Per wire contract, 503 replies are retried twice with backoff. Masks
    whose candidates fail validation are re-requested with a shifted seed,
    up to the shared retry budget. After 3 consecutive transport failures
    the circuit opens and further calls fail fast.
    """

    source = "service"

    def __init__(
        self,
        base_url: str,
        timeout: float = 10.0,
        backoff: float = 0.25,
        max_in_flight: int = 8,
        session=None,
    ):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.backoff = backoff
        self._session = session if session is not None else requests.Session()
        self._slots = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()
        self._consecutive_failures = 0

    def _post(self, payload: dict) -> dict:
        import requests

        with self._lock:
            if self._consecutive_failures >= 3:
                raise ServiceUnavailable("circuit open after repeated service failures")
        last_exc: Exception | None = None
        for attempt in range(3):  # initial try + two 503 retries
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._session.post(
                        self.base_url + "/v1/propose", json=payload, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_exc = ServiceUnavailable(f"proposal service unreachable: {exc}")
                continue
            if resp.status_code == 503:
                last_exc = ServiceUnavailable("proposal service returned 503")
                continue
            if resp.status_code != 200:
                self._record(failed=True)
                raise MalformedServiceReply(
                    f"proposal service returned HTTP {resp.status_code}"
                )
            try:
                body = resp.json()
            except ValueError as exc:
                self._record(failed=True)
                raise MalformedServiceReply("reply body is not JSON") from exc
            self._record(failed=False)
            return body
        self._record(failed=True)
        raise last_exc

    def _record(self, failed: bool) -> None:
        with self._lock:
            self._consecutive_failures = self._consecutive_failures + 1 if failed else 0

    def propose(self, req: MaskRequest) -> list[Proposal]:
        validate_request(req)
        pending = {m.index: m for m in req.masks}
        accepted: dict[int, str] = {}
        retries_used: dict[int, int] = {m.index: 0 for m in req.masks}
        for attempt in range(1 + MAX_RETRIES):
            if not pending:
                break
            wire_req = MaskRequest(
                text_with_masks=req.text_with_masks,
                masks=tuple(pending[i] for i in sorted(pending)),
                num_candidates=req.num_candidates,
                seed=req.seed + attempt,
            )
            body = self._post(request_to_wire(wire_req))
            candidates = parse_wire_reply(body, set(pending))
            for index in sorted(pending):
                mask = pending[index]
                retries_used[index] = attempt
                for cand in candidates[index]:
                    if acceptable(cand, mask.original, mask.banned_tokens):
                        accepted[index] = cand
                        break
                if index in accepted:
                    del pending[index]
        return [
            Proposal(
                m.index,
                accepted.get(m.index),
                self.source,
                retries_used[m.index] if m.index in accepted else MAX_RETRIES,
            )
            for m in req.masks
        ]
