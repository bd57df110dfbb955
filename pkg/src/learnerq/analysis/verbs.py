"""Verb extraction with a pluggable part-of-speech tagger.

The default :class:`LexiconTagger` is a small deterministic tagger: a token
is a verb when it lemmatises to an entry of the bundled verb lexicon and
its left context does not force a noun reading (``the list``, ``a plan``).
Auxiliaries and modals are not reported.  Its output only changes when
``LexiconTagger.version`` is bumped.
"""

from __future__ import annotations

import logging
import re
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

from ..errors import InvalidInputError

logger = logging.getLogger(__name__)

# A tagger maps text to (token, tag, lemma) triples; verbs carry tag "VERB".
Tagger = Callable[[str], Sequence[tuple[str, str, str]]]

_TOKEN_RE = re.compile(r"[A-Za-z]+(?:['\-][A-Za-z]+)*")

DETERMINERS = frozenset(
    "the a an this these those my your his her its our their some any each every no "
    "another either neither whose".split()
)
VERB_CUES = frozenset(
    "to can could will would should may might must shall do does did don't doesn't didn't "
    "not i you we they he she it".split()
)
NON_REPORTED = frozenset("be have do".split())


def _read_asset(name: str) -> list[str]:
    text = resources.files("learnerq").joinpath("assets").joinpath(name).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


@lru_cache(maxsize=None)
def verb_lexicon() -> frozenset[str]:
    return frozenset(_read_asset("verbs.txt"))


@lru_cache(maxsize=None)
def irregular_forms() -> dict[str, str]:
    forms = {}
    for line in _read_asset("irregular_verbs.txt"):
        lemma, *inflected = line.split()
        for form in inflected:
            forms.setdefault(form, lemma)
    forms.update({"is": "be", "am": "be", "are": "be", "were": "be", "being": "be", "has": "have", "having": "have"})
    return forms


def lemma_candidates(word: str) -> list[str]:
    """Possible base forms for an inflected word, most specific first."""
    w = word.lower()
    out = [w]
    if w in irregular_forms():
        out.insert(0, irregular_forms()[w])
    if w.endswith("ies") and len(w) > 4:
        out.append(w[:-3] + "y")
    if w.endswith("es") and len(w) > 3:
        out.append(w[:-2])
    if w.endswith("s") and not w.endswith("ss") and len(w) > 2:
        out.append(w[:-1])
    if w.endswith("ied") and len(w) > 4:
        out.append(w[:-3] + "y")
    if w.endswith("ed") and len(w) > 3:
        stem = w[:-2]
        out += [stem, stem + "e"]
        if len(stem) > 2 and stem[-1] == stem[-2]:
            out.append(stem[:-1])
    if w.endswith("ing") and len(w) > 4:
        stem = w[:-3]
        out += [stem, stem + "e"]
        if len(stem) > 2 and stem[-1] == stem[-2]:
            out.append(stem[:-1])
    return out


class LexiconTagger:
    version = "1"

    def __init__(self, lexicon: frozenset[str] | None = None) -> None:
        self.lexicon = lexicon if lexicon is not None else verb_lexicon() | NON_REPORTED

    def lemma(self, word: str) -> str | None:
        for cand in lemma_candidates(word):
            if cand in self.lexicon:
                return cand
        return None

    def __call__(self, text: str) -> list[tuple[str, str, str]]:
        tokens = _TOKEN_RE.findall(text)
        tagged = []
        prev = ""
        for tok in tokens:
            low = tok.lower()
            lemma = self.lemma(low)
            if lemma is None or (prev in DETERMINERS and prev not in VERB_CUES):
                tagged.append((tok, "OTHER", low))
            else:
                tagged.append((tok, "VERB", lemma))
            prev = low
        return tagged


_default_tagger: Tagger | None = None


def default_tagger() -> Tagger:
    global _default_tagger
    if _default_tagger is None:
        _default_tagger = LexiconTagger()
    return _default_tagger


def extract_verbs(text: str, tagger: Tagger | None = None, distinct: bool = True) -> list[str]:
    """Lowercase verb lemmas in order of appearance, collapsed unless ``distinct=False``."""
    if not text.strip():
        raise InvalidInputError("text must be non-empty")
    tagger = tagger or default_tagger()
    try:
        tagged = tagger(text)
    except Exception as exc:  # tagger plug-ins are third-party code
        logger.warning("tagger failed on %r: %s", text[:60], exc)
        return []
    lemmas = [
        lemma.lower() for _tok, tag, lemma in tagged if tag == "VERB" and lemma and lemma.lower() not in NON_REPORTED
    ]
    return list(dict.fromkeys(lemmas)) if distinct else lemmas
