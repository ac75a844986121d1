"""Exception hierarchy shared across the workbench.

Every error carries a machine-readable ``code`` that the HTTP layer exposes
verbatim, so exceptions raised deep in the pipeline surface as stable API
error codes.
"""

from __future__ import annotations


class ExplainError(Exception):
    """Base class for all workbench errors."""

    code = "internal_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# domain ---------------------------------------------------------------

class DimensionMismatch(ExplainError):
    code = "dimension_mismatch"


class ValueOutOfRange(ExplainError):
    code = "value_out_of_range"


class EmptyPrediction(ExplainError):
    code = "empty_prediction"


# model zoo ------------------------------------------------------------

class DuplicateModelId(ExplainError):
    code = "duplicate_model_id"


class UnknownModel(ExplainError):
    code = "model_not_found"


class AdapterFailure(ExplainError):
    code = "adapter_failure"


class GradientsUnsupported(ExplainError):
    code = "gradients_unsupported"


# saliency -------------------------------------------------------------

class ShapeMismatch(ExplainError):
    code = "shape_mismatch"


class NonFiniteInput(ExplainError):
    code = "non_finite_input"


class InvalidParameter(ExplainError):
    code = "invalid_parameter"


class TooLarge(ExplainError):
    code = "too_large"


class TargetInvalid(ExplainError):
    code = "target_invalid"


class LengthMismatch(ExplainError):
    code = "length_mismatch"


class UnknownMethod(ExplainError):
    code = "method_not_found"


class DuplicateMethodId(ExplainError):
    code = "duplicate_method_id"


# prompting ------------------------------------------------------------

class UnresolvableRef(ExplainError):
    code = "unresolvable_ref"


class TaskMismatch(ExplainError):
    code = "task_mismatch"


class StageError(ExplainError):
    """Wraps a component error with the pipeline stage it occurred in."""

    code = "stage_error"

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause
        if isinstance(cause, ExplainError):
            self.code = cause.code


# lvm gateway ----------------------------------------------------------

class AuthError(ExplainError):
    code = "auth_error"


class RateLimited(ExplainError):
    code = "rate_limited"


class Timeout(ExplainError):
    code = "timeout"


class MalformedResponse(ExplainError):
    code = "malformed_response"


class TransientProviderError(ExplainError):
    """Retryable upstream failure (network error or HTTP 5xx)."""

    code = "provider_unavailable"


class DuplicateProvider(ExplainError):
    code = "duplicate_provider"


class UnknownProvider(ExplainError):
    code = "provider_not_found"


# text metrics ---------------------------------------------------------

class EmbedderFailure(ExplainError):
    code = "embedder_failure"


class EmptyInput(ExplainError):
    code = "empty_input"


# service --------------------------------------------------------------

class MalformedAnnotation(ExplainError):
    code = "malformed_annotation"


class MissingImage(ExplainError):
    code = "missing_image"


class PortInUse(ExplainError):
    code = "port_in_use"


class StoreUnwritable(ExplainError):
    code = "store_unwritable"


class BlobCorrupted(ExplainError):
    code = "blob_corrupted"


class UnknownRecord(ExplainError):
    code = "record_not_found"


class UnknownBlob(ExplainError):
    code = "blob_not_found"


class UnknownDataset(ExplainError):
    code = "dataset_not_found"
