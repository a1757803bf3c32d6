"""Corrupted-grounding data generation and span-level detector scoring.

The package has two halves sharing one tokenizer and one set of wire
formats:

* generation: take samples whose responses carry grounded phrase spans,
  replace a controlled fraction of those phrases with plausible but wrong
  text proposed by a masked language model, and record exactly which
  character spans of the rewritten response are hallucinated;
* evaluation: score span or token predictions against such references
  with IoU-matched span F1, plus span- and sentence-level classification
  summaries.
"""

__version__ = "0.1.0"

from .errors import HaldetError, ServiceError, ValidationError

__all__ = ["HaldetError", "ServiceError", "ValidationError", "__version__"]
