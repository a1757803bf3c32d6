"""Exception hierarchy shared across the toolkit.

Concrete errors live next to the code that raises them; only the two
categories the CLI cares about are defined here (input problems exit 2,
proposal-service problems exit 3).
"""


class HaldetError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(HaldetError):
    """Bad input data, configuration, or file contents."""


class ServiceError(HaldetError):
    """Failures talking to an external proposal service."""
