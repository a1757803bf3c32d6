"""HTTP sidecar that fills masked spans with a pretrained text-to-text LM.

The service answers ``POST /v1/propose`` with sampled in-fill candidates for
each masked span in a request, while guaranteeing at decode time that no
banned surface token can be emitted inside its span. ``GET /healthz``
reports readiness once the model has finished loading.
"""

from infill_service.config import ServiceConfig
from infill_service.model import InfillModel
from infill_service.wire import InvalidRequest, ProposeRequest, WireMask

__all__ = [
    "InfillModel",
    "InvalidRequest",
    "ProposeRequest",
    "ServiceConfig",
    "WireMask",
]

__version__ = "0.1.0"
