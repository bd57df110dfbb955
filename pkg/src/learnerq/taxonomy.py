"""Label vocabularies: subjects and Bloom's Taxonomy levels."""

from __future__ import annotations

from enum import Enum

from .errors import InvalidInputError


class SubjectTag(str, Enum):
    BIOLOGY = "biology"
    CHEMISTRY = "chemistry"
    MATHEMATICS = "mathematics"
    PHYSICS = "physics"
    COMPUTER_SCIENCE = "computer_science"

    @classmethod
    def parse(cls, value: "str | SubjectTag") -> "SubjectTag":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            raise InvalidInputError(f"unknown subject {value!r}") from None


class BTLevel(str, Enum):
    """Cognitive level labels.

    Declaration order is the fixed reporting order: the six levels in
    ascending complexity followed by ``IRRELEVANT``.
    """

    KNOWLEDGE = "Knowledge"
    COMPREHENSION = "Comprehension"
    APPLICATION = "Application"
    ANALYSIS = "Analysis"
    EVALUATION = "Evaluation"
    SYNTHESIS = "Synthesis"
    IRRELEVANT = "Irrelevant"

    @classmethod
    def parse(cls, value: "str | BTLevel") -> "BTLevel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for level in cls:
            if level.value.lower() == key:
                return level
        raise InvalidInputError(f"unknown Bloom level {value!r}")

    @property
    def is_bloom(self) -> bool:
        return self is not BTLevel.IRRELEVANT


SUBJECTS: tuple[SubjectTag, ...] = tuple(SubjectTag)
BLOOM_LEVELS: tuple[BTLevel, ...] = tuple(level for level in BTLevel if level.is_bloom)
ALL_LEVELS: tuple[BTLevel, ...] = tuple(BTLevel)


def class_set(n_classes: int) -> tuple[BTLevel, ...]:
    """Return the ordered label set for a 6- or 7-way classifier."""
    if n_classes == 6:
        return BLOOM_LEVELS
    if n_classes == 7:
        return ALL_LEVELS
    raise InvalidInputError(f"n_classes must be 6 or 7, got {n_classes}")
