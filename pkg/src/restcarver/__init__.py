"""restcarver: carve API test suites and infer OpenAPI specs from recorded traffic."""

__version__ = "0.1.0"

from .model import ApiCall, ApiSequence, CallOrigin, HttpRequest, HttpResponse  # noqa: F401
