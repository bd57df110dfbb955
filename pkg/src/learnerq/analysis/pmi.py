"""Verb/class association via pointwise mutual information.

Counts are taken over (verb, class) pairs.  With ``T`` the total number of
pairs, ``P(w, c) = n(w, c) / T`` and the marginals are the row and column
sums divided by ``T``, so the joint table always sums to one.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..corpus import QuestionRecord
from ..errors import InvalidInputError
from ..taxonomy import ALL_LEVELS, BTLevel
from .verbs import Tagger, extract_verbs

logger = logging.getLogger(__name__)

PMI_FILE = "pmi_verbs.csv"
DEFAULT_MIN_FREQ = 6  # "greater than 5"


@dataclass(frozen=True)
class VerbOccurrence:
    lemma: str
    bt_class: BTLevel
    question_id: str

    def __post_init__(self) -> None:
        if not self.lemma:
            raise InvalidInputError("verb lemma must be non-empty")


@dataclass(frozen=True)
class PMIEntry:
    lemma: str
    bt_class: BTLevel
    pmi: float
    collection_frequency: int


def verb_occurrences(
    questions: Iterable[QuestionRecord],
    presence: bool = True,
    tagger: Tagger | None = None,
) -> list[VerbOccurrence]:
    """One occurrence per (verb, question) pair; ``presence=False`` keeps repeats."""
    out = []
    for q in questions:
        if q.bt_label is None:
            raise InvalidInputError(f"question {q.question_id} has no BT label")
        lemmas = extract_verbs(q.text, tagger, distinct=presence)
        out.extend(VerbOccurrence(lemma, BTLevel.parse(q.bt_label), q.question_id) for lemma in lemmas)
    return out


def pmi_table(occurrences: Sequence[VerbOccurrence], min_freq: int = DEFAULT_MIN_FREQ) -> list[PMIEntry]:
    """PMI for every observed (verb, class) pair whose verb occurs at least ``min_freq`` times."""
    if not occurrences:
        raise InvalidInputError("no verb occurrences")
    joint = Counter((o.lemma, BTLevel.parse(o.bt_class)) for o in occurrences)
    by_word: Counter[str] = Counter()
    by_class: Counter[BTLevel] = Counter()
    for (w, c), n in joint.items():
        by_word[w] += n
        by_class[c] += n
    total = sum(joint.values())

    entries = []
    for (w, c), n in joint.items():
        if by_word[w] < min_freq:
            continue
        # log(P(w,c) / (P(w) P(c))) with all three divided by the same total
        pmi = math.log(n * total / (by_word[w] * by_class[c]))
        entries.append(PMIEntry(w, c, pmi, by_word[w]))
    order = {level: i for i, level in enumerate(ALL_LEVELS)}
    entries.sort(key=lambda e: (order[e.bt_class], -e.pmi, e.lemma))
    return entries


def top_verbs(entries: Iterable[PMIEntry], n: int = 10) -> dict[BTLevel, list[str]]:
    grouped: dict[BTLevel, list[PMIEntry]] = {}
    for e in entries:
        grouped.setdefault(BTLevel.parse(e.bt_class), []).append(e)
    out = {}
    for level in ALL_LEVELS:
        if level not in grouped:
            continue
        ranked = sorted(grouped[level], key=lambda e: (-e.pmi, -e.collection_frequency, e.lemma))
        out[level] = [e.lemma for e in ranked[:n]]
    return out


def write_pmi_csv(entries: Sequence[PMIEntry], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lemma", "class", "pmi", "freq"])
        for e in entries:
            w.writerow([e.lemma, e.bt_class.value, f"{e.pmi:.10f}", e.collection_frequency])
