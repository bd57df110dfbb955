"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class LearnerQError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(LearnerQError, ValueError):
    pass


class InvalidInputError(LearnerQError, ValueError):
    pass


class InvalidDatasetError(LearnerQError, ValueError):
    """A dataset record failed validation.

    ``record`` holds the first offending record so callers can report it.
    """

    def __init__(self, message: str, record: object = None) -> None:
        super().__init__(message)
        self.record = record


class CredentialError(LearnerQError):
    pass


class NotFoundError(LearnerQError):
    pass


class RateLimitError(LearnerQError):
    pass


class AnnotationError(LearnerQError):
    """The teacher returned something that could not be parsed."""

    def __init__(self, message: str, payload: object = None) -> None:
        super().__init__(message)
        self.payload = payload


class GenerationError(LearnerQError):
    pass


class ReplayMissError(LearnerQError):
    """A replay-only cache was asked for a request it never recorded."""


class MissingModelError(LearnerQError):
    pass


class MissingLabelsError(LearnerQError):
    pass
