"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class RagSqlError(Exception):
    """Base class for all engine errors."""


class InvalidInput(RagSqlError, ValueError):
    pass


class DimensionMismatch(RagSqlError, ValueError):
    pass


# providers


class ProviderError(RagSqlError):
    """Failure talking to (or interpreting) an external model service."""


class ProviderUnavailable(ProviderError):
    def __init__(self, message: str, *, attempts: int = 0) -> None:
        super().__init__(message)
        self.attempts = attempts


class MissingFixture(ProviderError):
    def __init__(self, template_id: str, fingerprint: str) -> None:
        super().__init__(f"no scripted response for {template_id}/{fingerprint}")
        self.template_id = template_id
        self.fingerprint = fingerprint


class MalformedResponse(ProviderError):
    pass


# vector store


class DuplicateId(RagSqlError):
    pass


class CorruptStore(RagSqlError):
    pass


class StoreUnavailable(RagSqlError):
    pass


# training pipelines


class InconsistentExtraction(RagSqlError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class RetrainConflict(RagSqlError):
    pass


class NormalizationLeak(RagSqlError):
    def __init__(self, identifiers: list[str]) -> None:
        super().__init__("normalized question leaks identifiers: " + ", ".join(identifiers))
        self.identifiers = identifiers


class DegenerateVariations(RagSqlError):
    pass


class NoTablesFound(RagSqlError):
    pass


class NoTablesSelected(RagSqlError):
    pass


# calibration / retrieval / generation


class EmptyInput(RagSqlError, ValueError):
    pass


class InvalidProfile(RagSqlError):
    pass


class RefinementEmpty(RagSqlError):
    pass


class NoContext(RagSqlError):
    pass


class InvalidGeneration(RagSqlError):
    def __init__(self, message: str, violation: object = None) -> None:
        super().__init__(message)
        self.violation = violation
