"""Runtime configuration for the in-filling service."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServiceConfig:
    """Settings that control model loading and decoding.

    ``model`` is a local directory or a model hub identifier understood by
    ``transformers``; the tokenizer it resolves to must provide
    ``<extra_id_k>`` sentinel tokens, which is how T5-style models mark
    in-fill slots. Decoding parameters are fixed per process and echoed in
    every response so that clients can record exactly how candidates were
    produced.
    """

    model: str
    host: str = "127.0.0.1"
    port: int = 8008
    max_batch_size: int = 8
    temperature: float = 1.0
    top_p: float = 0.95
    max_new_tokens: int = 24

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be a non-empty path or identifier")
        if not 0 < self.port < 65536:
            raise ValueError(f"port out of range: {self.port}")
        if self.max_batch_size < 1:
            raise ValueError(f"max_batch_size must be >= 1, got {self.max_batch_size}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")

    def decode_metadata(self) -> dict[str, object]:
        """Decoding settings echoed verbatim in every propose response."""
        return {
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_new_tokens": self.max_new_tokens,
        }
