"""Exception hierarchy shared across the package.

Callers that need to distinguish failure modes (the service layer, retry
logic, the CLI) catch the specific classes; everything still funnels into
``OversightError`` so coarse handlers stay simple.
"""

from __future__ import annotations


class OversightError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(OversightError):
    """Problem with a schema document or a schema-level operation."""


class SchemaParseError(SchemaError):
    """The schema document is not well-formed."""


class SchemaValidationError(SchemaError):
    """The schema document parsed but violates a schema invariant."""


class InstanceError(OversightError):
    """A record failed validation against the schema.

    The message always names the offending feature; ``feature`` carries it
    separately for structured error payloads.
    """

    def __init__(self, message: str, feature: str | None = None):
        super().__init__(message)
        self.feature = feature


class DatasetError(OversightError):
    """Stream-level dataset failure (unreadable source, missing header)."""


class ModelError(OversightError):
    """Problem loading a model document or cross-validating it."""


class UnsupportedModelOperation(OversightError):
    """The operation does not apply to this model kind."""


class PredictionUnavailable(OversightError):
    """A prediction could not be obtained; the pipeline must not guess."""


class RemoteTimeoutError(PredictionUnavailable):
    """Remote predictor did not answer within the per-attempt timeout."""


class RemoteTransportError(PredictionUnavailable):
    """Transport failure (connection error or non-2xx status) after retries."""


class RemoteResponseError(PredictionUnavailable):
    """Remote predictor answered with an unusable body."""


class StoreError(OversightError):
    """Review-store or audit-log persistence failure."""


class DuplicateCaseError(StoreError):
    """A case with this id already exists; the store is unchanged."""


class UnknownCaseError(StoreError):
    """No case with this id."""


class AlreadyResolvedError(StoreError):
    """The case already has a terminal decision.

    ``record`` carries the existing terminal audit record so clients can
    reconcile instead of retrying.
    """

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(OversightError):
    """Service configuration is invalid or references unusable paths."""
