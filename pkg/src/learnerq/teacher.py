"""LLM teacher: soft labels for interrogative detection, Bloom-level question
generation for augmentation, and agreement/diagnostic reports.

Every request goes through :class:`ReplayCache`, so once a run has been
recorded all downstream training is reproducible without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .analysis.metrics import MetricsReport, classification_metrics
from .errors import (
    AnnotationError,
    CredentialError,
    GenerationError,
    InvalidConfigError,
    InvalidInputError,
    RateLimitError,
    ReplayMissError,
)
from .taxonomy import ALL_LEVELS, BLOOM_LEVELS, BTLevel, SubjectTag

logger = logging.getLogger(__name__)

EPSILON = 1e-7
FALLBACK_CONFIDENCE = 0.99
DEFAULT_MODEL = "gpt-4o"


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SoftLabel:
    p_interrogative: float
    p_non_interrogative: float
    label_token_logprob: float
    estimated: bool = False  # True when the provider gave no log-probabilities

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_interrogative <= 1.0:
            raise InvalidInputError(f"p_interrogative {self.p_interrogative} outside [0, 1]")
        if self.p_non_interrogative != 1.0 - self.p_interrogative:
            raise InvalidInputError("soft label violates binary closure")
        if self.label_token_logprob > 0:
            raise InvalidInputError("log-probability must be <= 0")

    @classmethod
    def from_prediction(cls, label: int, logprob: float | None) -> "SoftLabel":
        """Build the binary distribution from the predicted label token.

        The token's probability goes to the predicted class and the
        complement to the other one.  Without a log-probability the label is
        taken as a hard label with confidence ``FALLBACK_CONFIDENCE``.
        """
        estimated = logprob is None
        if estimated:
            logprob = math.log(FALLBACK_CONFIDENCE)
        logprob = min(float(logprob), 0.0)
        p = math.exp(logprob)
        p_int = p if label == 1 else 1.0 - p
        return cls(p_int, 1.0 - p_int, logprob, estimated)

    def as_vector(self) -> list[float]:
        return [self.p_non_interrogative, self.p_interrogative]

    def to_dict(self) -> dict:
        return {
            "p_interrogative": self.p_interrogative,
            "p_non_interrogative": self.p_non_interrogative,
            "label_token_logprob": self.label_token_logprob,
            "estimated": self.estimated,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SoftLabel":
        p = float(d["p_interrogative"])
        return cls(p, 1.0 - p, float(d["label_token_logprob"]), bool(d.get("estimated", False)))


@dataclass(frozen=True)
class GeneratedQuestion:
    text: str
    bt_level: BTLevel
    topic: str
    subject: SubjectTag

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise InvalidInputError("generated question text is empty")
        if not BTLevel.parse(self.bt_level).is_bloom:
            raise InvalidInputError("generated questions cannot be Irrelevant")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: int
    system: str
    few_shots: tuple[tuple[str, str], ...]
    user_template: str
    # Repeated once per sampled example, between the fixed shots and the query.
    shot_template: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def _fields(text: str) -> set[str]:
        return {name for _, name, _, _ in string.Formatter().parse(text) if name}

    def placeholders(self) -> set[str]:
        names = self._fields(self.user_template)
        for _, text in self.few_shots:
            names |= self._fields(text)
        return names

    def shot_placeholders(self) -> set[str]:
        names: set[str] = set()
        for _, text in self.shot_template:
            names |= self._fields(text)
        return names

    def render(self, values: Mapping[str, str], shots: Sequence[Mapping[str, str]] = ()) -> list[dict]:
        """Render to chat messages; every placeholder must be supplied."""
        missing = self.placeholders() - set(values)
        if missing:
            raise InvalidInputError(f"unfilled placeholders in {self.name}: {sorted(missing)}")
        messages = [{"role": "system", "content": self.system}]
        for role, text in self.few_shots:
            messages.append({"role": role, "content": text.format_map(values)})
        for shot in shots:
            ctx = {**values, **shot}
            missing = self.shot_placeholders() - set(ctx)
            if missing:
                raise InvalidInputError(f"unfilled shot placeholders in {self.name}: {sorted(missing)}")
            for role, text in self.shot_template:
                messages.append({"role": role, "content": text.format_map(ctx)})
        messages.append({"role": "user", "content": self.user_template.format_map(values)})
        return messages

    @classmethod
    def from_dict(cls, d: Mapping) -> "PromptTemplate":
        return cls(
            name=d["name"],
            version=int(d["version"]),
            system=d["system"],
            few_shots=tuple((r, t) for r, t in d["few_shots"]),
            user_template=d["user_template"],
            shot_template=tuple((r, t) for r, t in d.get("shot_template", [])),
        )


def _asset(name: str) -> str:
    return resources.files("learnerq").joinpath("assets").joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_prompt(name: str, version: int = 1) -> PromptTemplate:
    return PromptTemplate.from_dict(json.loads(_asset(f"prompt_{name}.v{version}.json")))


@lru_cache(maxsize=None)
def topic_pools() -> dict[SubjectTag, tuple[str, ...]]:
    raw = json.loads(_asset("topics.json"))
    return {SubjectTag.parse(k): tuple(v) for k, v in raw.items()}


@lru_cache(maxsize=None)
def seed_questions() -> dict[BTLevel, tuple[str, ...]]:
    raw = json.loads(_asset("bt_seed_questions.json"))
    return {BTLevel.parse(k): tuple(v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# Teacher smoothing
# ---------------------------------------------------------------------------


def smooth_teacher(p: Sequence[float], tau: float, eps: float = EPSILON) -> np.ndarray:
    """Temperature-smooth a probability vector: q_k ∝ p_k ** (1 / tau).

    This equals ``softmax(log(p) / tau)``, i.e. the usual temperature
    softmax when the teacher's logits are taken to be ``log p``.
    """
    if not tau > 0:
        raise InvalidConfigError(f"tau must be > 0, got {tau}")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InvalidInputError("teacher distribution must be a vector with >= 2 entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise InvalidInputError(f"teacher distribution sums to {p.sum()}, expected 1")
    p = np.clip(p, eps, 1.0 - eps)
    logits = np.log(p / p.sum()) / tau
    q = np.exp(logits - logits.max())
    return q / q.sum()


# ---------------------------------------------------------------------------
# Providers and the replay cache
# ---------------------------------------------------------------------------


class ChatBackend(Protocol):
    def complete(self, request: dict) -> dict: ...


class OpenAIChatBackend:
    """Chat-completions client for any OpenAI-compatible endpoint."""

    def __init__(
        self,
        api_key: str | None = None,
        base_url: str = "https://api.openai.com/v1",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        api_key = api_key or os.environ.get("LLM_API_KEY")
        if not api_key:
            raise CredentialError("LLM_API_KEY is not set")
        import httpx

        self._client = httpx.Client(
            base_url=base_url, timeout=timeout, headers={"Authorization": f"Bearer {api_key}"}
        )
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep

    def complete(self, request: dict) -> dict:
        for attempt in range(self.max_attempts):
            resp = self._client.post("/chat/completions", json=request)
            if resp.status_code in (401, 403):
                raise CredentialError(f"LLM provider rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                if attempt + 1 < self.max_attempts:
                    self._sleep(self.backoff * 2**attempt)
                    continue
                raise RateLimitError(f"LLM provider returned {resp.status_code} after {self.max_attempts} attempts")
            resp.raise_for_status()
            return resp.json()
        raise RateLimitError("unreachable")  # pragma: no cover


def request_key(request: Mapping) -> str:
    canonical = json.dumps(request, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ReplayCache:
    """Request-keyed store of provider responses.

    ``mode`` is ``"replay"`` (never call the provider), ``"record"`` (call
    on a miss and store), or ``"refresh"`` (always call, overwrite).
    """

    MODES = ("replay", "record", "refresh")

    def __init__(self, directory: str | Path, backend: ChatBackend | None = None, mode: str = "record") -> None:
        if mode not in self.MODES:
            raise InvalidConfigError(f"unknown cache mode {mode!r}")
        self.directory = Path(directory)
        self.backend = backend
        self.mode = mode
        self.calls = 0
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def lookup(self, request: Mapping) -> dict | None:
        path = self.path(request_key(request))
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        return None

    def complete(self, request: dict) -> dict:
        key = request_key(request)
        with self._lock(key):
            path = self.path(key)
            if self.mode != "refresh" and path.exists():
                return json.loads(path.read_text(encoding="utf-8"))["response"]
            if self.mode == "replay":
                raise ReplayMissError(f"no recorded response for request {key[:12]}")
            if self.backend is None:
                raise CredentialError("no LLM backend configured and the response is not cached")
            response = self.backend.complete(request)
            self.calls += 1
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(
                json.dumps({"request": request, "response": response}, ensure_ascii=False, sort_keys=True, indent=1),
                encoding="utf-8",
            )
            os.replace(tmp, path)
            return response


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

_LABEL_RE = re.compile(r"""^\s*["']?([01])["']?\s*\.?\s*$""")
_REFUSAL_RE = re.compile(r"^\s*(i'?m sorry|i am sorry|i can(?:'|no)t|sorry,)", re.IGNORECASE)


def _message_content(response: Mapping) -> str:
    try:
        return response["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError):
        raise AnnotationError("response has no message content", payload=response) from None


def parse_label_response(response: Mapping) -> tuple[int, float | None]:
    """Extract the ``0``/``1`` label and its token log-probability."""
    content = _message_content(response)
    m = _LABEL_RE.match(content)
    if not m:
        raise AnnotationError(f"unparseable label {content!r}", payload=response)
    label = int(m.group(1))
    logprob = None
    try:
        tokens = response["choices"][0]["logprobs"]["content"] or []
    except (KeyError, IndexError, TypeError):
        tokens = []
    for tok in tokens:
        if tok.get("token", "").strip().strip("'\"") == m.group(1):
            logprob = float(tok["logprob"])
            break
    return label, logprob


def clean_generated(text: str) -> str:
    text = text.strip()
    text = re.sub(r"^(?:question\s*[:\-]\s*)", "", text, flags=re.IGNORECASE)
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


# ---------------------------------------------------------------------------
# Teacher
# ---------------------------------------------------------------------------


class Teacher:
    """Wraps a chat backend (usually behind a replay cache) with the two
    annotation tasks used for training."""

    def __init__(
        self,
        cache: ReplayCache | ChatBackend,
        model: str = DEFAULT_MODEL,
        seed: int = 0,
        n_shots: int = 3,
        example_pool: Mapping[BTLevel, Sequence[str]] | None = None,
        max_retries: int = 3,
        concurrency: int = 4,
    ) -> None:
        self.client = cache
        self.model = model
        self.seed = seed
        self.n_shots = n_shots
        self.example_pool = {k: tuple(v) for k, v in (example_pool or seed_questions()).items()}
        self.max_retries = max_retries
        self.concurrency = concurrency
        self.interrogative_prompt = load_prompt("interrogative")
        self.generation_prompt = load_prompt("bt_generation")

    # -- interrogative soft labels -------------------------------------------------

    def label_request(self, statement: str) -> dict:
        return {
            "model": self.model,
            "messages": self.interrogative_prompt.render({"statement": statement}),
            "temperature": 0,
            "max_tokens": 1,
            "logprobs": True,
            "top_logprobs": 2,
        }

    def soft_label_interrogative(self, statement: str) -> SoftLabel:
        if not statement.strip():
            raise InvalidInputError("statement must be non-empty")
        response = self.client.complete(self.label_request(statement))
        label, logprob = parse_label_response(response)
        if logprob is None:
            logger.warning("no log-probabilities for %r; using hard label", statement[:60])
        return SoftLabel.from_prediction(label, logprob)

    def soft_label_many(self, statements: Sequence[str]) -> list[SoftLabel]:
        with ThreadPoolExecutor(max_workers=max(1, self.concurrency)) as pool:
            return list(pool.map(self.soft_label_interrogative, statements))

    # -- Bloom-level generation ----------------------------------------------------

    def _shots(self, level: BTLevel, topic: str, subject: SubjectTag) -> list[dict]:
        pool = sorted(self.example_pool.get(level, ()))
        if not pool:
            return []
        digest = hashlib.sha256(f"{self.seed}|{level.value}|{topic}|{subject.value}".encode()).hexdigest()
        rng = random.Random(int(digest[:16], 16))
        picks = rng.sample(pool, min(self.n_shots, len(pool)))
        return [{"level": level.value, "sample_question": q} for q in picks]

    def generation_request(self, level: BTLevel, topic: str, subject: SubjectTag, attempt: int = 0) -> dict:
        values = {"level": level.value, "topic": topic, "subject": subject.value.replace("_", " ")}
        return {
            "model": self.model,
            "messages": self.generation_prompt.render(values, self._shots(level, topic, subject)),
            "temperature": 1.0,
            "max_tokens": 128,
            "seed": self.seed + attempt,
        }

    def generate_bt_question(self, level: BTLevel | str, topic: str, subject: SubjectTag | str) -> GeneratedQuestion:
        level = BTLevel.parse(level)
        subject = SubjectTag.parse(subject)
        if not level.is_bloom:
            raise InvalidConfigError("cannot generate questions for the Irrelevant class")
        last = None
        for attempt in range(self.max_retries):
            response = self.client.complete(self.generation_request(level, topic, subject, attempt))
            text = clean_generated(_message_content(response))
            if text and not _REFUSAL_RE.match(text):
                return GeneratedQuestion(text=text, bt_level=level, topic=topic, subject=subject)
            last = text
            logger.warning("empty or refused generation for %s/%s (attempt %d)", level.value, topic, attempt + 1)
        raise GenerationError(f"generation failed after {self.max_retries} attempts; last output {last!r}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def agreement_report(predicted: Sequence[BTLevel | str], original: Sequence[BTLevel | str]) -> MetricsReport:
    """Teacher-vs-original label agreement.

    Macro-averaged precision/recall/F1 over the levels that occur in either
    list, plus exact-match accuracy.
    """
    if len(predicted) != len(original):
        raise InvalidInputError(f"length mismatch: {len(predicted)} vs {len(original)}")
    pred = [BTLevel.parse(x) for x in predicted]
    gold = [BTLevel.parse(x) for x in original]
    present = set(pred) | set(gold)
    classes = [lvl for lvl in ALL_LEVELS if lvl in present] or list(BLOOM_LEVELS)
    report = classification_metrics(pred, gold, classes)
    report.extra.update(
        precision=report.macro.precision, recall=report.macro.recall, f1=report.macro.f1
    )
    return report


def low_confidence_report(
    labeled: Sequence[tuple[str, object, float]], threshold: float
) -> list[tuple[str, float]]:
    """Items whose label log-probability falls below ``threshold``, most
    uncertain first."""
    hits = [(text, float(lp)) for text, _label, lp in labeled if lp < threshold]
    return sorted(hits, key=lambda item: item[1])
