"""Corpus data model, comment cleaning/filtering and descriptive statistics.

On disk a corpus is a directory holding ``videos.jsonl``, ``comments.jsonl``
and (once questions are extracted) ``questions.jsonl``.  Every length
filter and statistic counts whitespace tokens.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import InvalidConfigError, InvalidDatasetError, InvalidInputError
from .taxonomy import BTLevel, SubjectTag

logger = logging.getLogger(__name__)

VIDEOS_FILE = "videos.jsonl"
COMMENTS_FILE = "comments.jsonl"
QUESTIONS_FILE = "questions.jsonl"
STATS_FILE = "corpus_stats.csv"


def token_count(text: str) -> int:
    return len(text.split())


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterConfig:
    comment_min_tokens: int = 3
    comment_max_tokens: int = 512
    question_min_tokens: int = 3
    question_max_tokens: int = 50
    comments_per_video_cap: int = 1000

    def __post_init__(self) -> None:
        pairs = [
            ("comment", self.comment_min_tokens, self.comment_max_tokens),
            ("question", self.question_min_tokens, self.question_max_tokens),
        ]
        for name, lo, hi in pairs:
            if lo < 1 or lo > hi:
                raise InvalidConfigError(f"{name} token bounds must satisfy 1 <= min <= max, got {lo}..{hi}")
        if self.comments_per_video_cap < 1:
            raise InvalidConfigError("comments_per_video_cap must be >= 1")


@dataclass
class VideoRecord:
    video_id: str
    subject: SubjectTag
    title: str = ""
    description: str = ""
    view_count: int = 0
    like_count: int = 0
    transcript: str = ""
    comment_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.subject = SubjectTag.parse(self.subject)
        if self.view_count < 0 or self.like_count < 0:
            raise InvalidInputError(f"video {self.video_id}: negative counts")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subject"] = self.subject.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VideoRecord":
        return cls(**_known(cls, d))


@dataclass
class CommentRecord:
    comment_id: str
    video_id: str
    raw_text: str
    clean_text: str = ""
    like_count: int = 0
    reply_count: int = 0
    retrieval_rank: int = 1

    def __post_init__(self) -> None:
        if self.like_count < 0 or self.reply_count < 0:
            raise InvalidInputError(f"comment {self.comment_id}: negative counts")
        if self.retrieval_rank < 1:
            raise InvalidInputError(f"comment {self.comment_id}: retrieval_rank must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CommentRecord":
        return cls(**_known(cls, d))


@dataclass
class QuestionRecord:
    question_id: str
    comment_id: str
    video_id: str
    subject: SubjectTag
    text: str
    detection_prob: float
    token_count: int
    bt_label: BTLevel | None = None
    bt_probs: list[float] | None = None

    def __post_init__(self) -> None:
        self.subject = SubjectTag.parse(self.subject)
        if self.bt_label is not None:
            self.bt_label = BTLevel.parse(self.bt_label)
        if not 0.0 <= self.detection_prob <= 1.0:
            raise InvalidInputError(f"question {self.question_id}: detection_prob outside [0, 1]")
        if self.bt_probs is not None and abs(math.fsum(self.bt_probs) - 1.0) > 1e-6:
            raise InvalidInputError(f"question {self.question_id}: bt_probs do not sum to 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subject"] = self.subject.value
        d["bt_label"] = self.bt_label.value if self.bt_label is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        return cls(**_known(cls, d))


def _known(cls, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in d.items() if k in names}


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

# Emoji / pictograph blocks plus the joiners and selectors that glue them.
_EMOJI_RANGES = [
    (0x1F000, 0x1FAFF),  # mahjong .. symbols & pictographs extended-A
    (0x2600, 0x26FF),  # misc symbols
    (0x2700, 0x27BF),  # dingbats
    (0x2B00, 0x2BFF),  # misc symbols and arrows
    (0x231A, 0x231B),
    (0x23E9, 0x23F3),
    (0x23F8, 0x23FA),
    (0xFE00, 0xFE0F),  # variation selectors
    (0x200D, 0x200D),  # zero width joiner
    (0x20E3, 0x20E3),  # combining enclosing keycap
    (0xE0020, 0xE007F),  # tag characters
]
EMOJI_RE = re.compile("[" + "".join(f"{chr(a)}-{chr(b)}" for a, b in _EMOJI_RANGES) + "]")
URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
MENTION_RE = re.compile(r"(?<!\w)@\w+(?:[.\-]\w+)*")


def is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(a <= cp <= b for a, b in _EMOJI_RANGES)


def clean_comment(raw_text: str) -> str:
    """Strip URLs, @-mentions and emoji, then normalise whitespace.

    Removal can expose a new match (``"ht😀tp://x"``), so the rules are
    applied until nothing changes; this makes the function idempotent.
    """
    text = raw_text
    while True:
        out = EMOJI_RE.sub("", text)
        out = URL_RE.sub("", out)
        out = MENTION_RE.sub("", out)
        out = " ".join(out.split())
        if out == text:
            return out
        text = out


def cap_comments(comments: Sequence[CommentRecord], cap: int) -> list[CommentRecord]:
    """Keep the first ``cap`` comments in retrieval order."""
    if cap < 1:
        raise InvalidConfigError(f"cap must be >= 1, got {cap}")
    ordered = sorted(comments, key=lambda c: c.retrieval_rank)
    return ordered[:cap]


def filter_comments(comments: Iterable[CommentRecord], cfg: FilterConfig) -> list[CommentRecord]:
    lo, hi = cfg.comment_min_tokens, cfg.comment_max_tokens
    return [c for c in comments if lo <= token_count(c.clean_text) <= hi]


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def segment_sentences(text: str) -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by whitespace."""
    return [s for s in (p.strip() for p in _SENTENCE_END.split(text)) if s]


def question_id(comment_id: str, sentence_index: int) -> str:
    return hashlib.sha1(f"{comment_id}\x1f{sentence_index}".encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Provenance:
    comment_id: str
    video_id: str
    subject: SubjectTag
    sentence_index: int


def make_question_records(
    sentences: Iterable[tuple[str, float, Provenance]],
    cfg: FilterConfig,
    threshold: float,
) -> list[QuestionRecord]:
    """Turn scored sentences into question records.

    A sentence survives if its detection probability reaches ``threshold``
    and its whitespace token count lies within the configured question
    bounds.
    """
    out = []
    for text, prob, prov in sentences:
        if not 0.0 <= prob <= 1.0:
            raise InvalidInputError(f"detection probability {prob} outside [0, 1]")
        n = token_count(text)
        if prob < threshold or not cfg.question_min_tokens <= n <= cfg.question_max_tokens:
            continue
        out.append(
            QuestionRecord(
                question_id=question_id(prov.comment_id, prov.sentence_index),
                comment_id=prov.comment_id,
                video_id=prov.video_id,
                subject=prov.subject,
                text=text,
                detection_prob=float(prob),
                token_count=n,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Corpus container and I/O
# ---------------------------------------------------------------------------


def read_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidDatasetError(f"{path}:{lineno}: {exc}", record=line) from exc


def write_jsonl(path: Path, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=False))
            fh.write("\n")
            n += 1
    return n


@dataclass
class Corpus:
    videos: list[VideoRecord] = field(default_factory=list)
    comments: list[CommentRecord] = field(default_factory=list)
    questions: list[QuestionRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for v in self.videos:
            if v.video_id in seen:
                raise InvalidDatasetError(f"duplicate video_id {v.video_id}", record=v.to_dict())
            seen.add(v.video_id)

    def video_index(self) -> dict[str, VideoRecord]:
        return {v.video_id: v for v in self.videos}

    def comments_by_video(self) -> dict[str, list[CommentRecord]]:
        grouped: dict[str, list[CommentRecord]] = defaultdict(list)
        for c in self.comments:
            grouped[c.video_id].append(c)
        return grouped

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_jsonl(directory / VIDEOS_FILE, (v.to_dict() for v in self.videos))
        write_jsonl(directory / COMMENTS_FILE, (c.to_dict() for c in self.comments))
        write_jsonl(directory / QUESTIONS_FILE, (q.to_dict() for q in self.questions))

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)

        def _load(name, record_cls):
            path = directory / name
            if not path.exists():
                return []
            out = []
            for row in read_jsonl(path):
                try:
                    out.append(record_cls.from_dict(row))
                except (TypeError, ValueError) as exc:
                    raise InvalidDatasetError(f"{path}: {exc}", record=row) from exc
            return out

        return cls(
            videos=_load(VIDEOS_FILE, VideoRecord),
            comments=_load(COMMENTS_FILE, CommentRecord),
            questions=_load(QUESTIONS_FILE, QuestionRecord),
        )


def prepare_comments(corpus: Corpus, cfg: FilterConfig) -> Corpus:
    """Clean, cap per video, and length-filter every comment.

    Video ``comment_ids`` are rewritten to the surviving comments; the
    result is a new corpus and the input is left untouched.
    """
    grouped = corpus.comments_by_video()
    kept: list[CommentRecord] = []
    videos = []
    for video in corpus.videos:
        comments = cap_comments(grouped.get(video.video_id, []), cfg.comments_per_video_cap)
        cleaned = [
            CommentRecord(**{**c.to_dict(), "clean_text": clean_comment(c.raw_text)}) for c in comments
        ]
        survivors = filter_comments(cleaned, cfg)
        kept.extend(survivors)
        videos.append(VideoRecord(**{**video.to_dict(), "comment_ids": [c.comment_id for c in survivors]}))
    orphans = set(grouped) - {v.video_id for v in corpus.videos}
    if orphans:
        logger.warning("dropping comments for %d unknown videos", len(orphans))
    return Corpus(videos=videos, comments=kept, questions=list(corpus.questions))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatsRow:
    subject: SubjectTag
    n_videos: int
    avg_views: float
    avg_likes: float
    avg_comments: float
    avg_transcript_tokens: float
    avg_comment_tokens: float
    n_extracted_questions: int


CorpusStats = list[StatsRow]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Per-subject averages over videos.

    ``avg_comment_tokens`` is the mean over videos of each video's mean
    comment length; videos without comments do not enter that average.
    """
    comments = {c.comment_id: c for c in corpus.comments}
    q_counts: dict[SubjectTag, int] = defaultdict(int)
    for q in corpus.questions:
        q_counts[q.subject] += 1
    by_subject: dict[SubjectTag, list[VideoRecord]] = defaultdict(list)
    for v in corpus.videos:
        by_subject[v.subject].append(v)

    rows = []
    for subject in SubjectTag:
        videos = by_subject.get(subject, [])
        if not videos:
            if q_counts.get(subject):
                logger.warning("subject %s has questions but no videos; row omitted", subject.value)
            continue
        per_video_comment_len = []
        for v in videos:
            lens = [token_count(comments[cid].clean_text) for cid in v.comment_ids if cid in comments]
            if lens:
                per_video_comment_len.append(_mean(lens))
        rows.append(
            StatsRow(
                subject=subject,
                n_videos=len(videos),
                avg_views=_mean([v.view_count for v in videos]),
                avg_likes=_mean([v.like_count for v in videos]),
                avg_comments=_mean([len(v.comment_ids) for v in videos]),
                avg_transcript_tokens=_mean([token_count(v.transcript) for v in videos]),
                avg_comment_tokens=_mean(per_video_comment_len),
                n_extracted_questions=q_counts.get(subject, 0),
            )
        )
    return rows


STATS_FIELDS = [f.name for f in fields(StatsRow)]


def write_stats_csv(rows: CorpusStats, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STATS_FIELDS)
        for r in rows:
            writer.writerow([r.subject.value] + [getattr(r, name) for name in STATS_FIELDS[1:]])


def read_stats_csv(path: str | Path) -> CorpusStats:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for d in csv.DictReader(fh):
            rows.append(
                StatsRow(
                    subject=SubjectTag.parse(d["subject"]),
                    n_videos=int(d["n_videos"]),
                    avg_views=float(d["avg_views"]),
                    avg_likes=float(d["avg_likes"]),
                    avg_comments=float(d["avg_comments"]),
                    avg_transcript_tokens=float(d["avg_transcript_tokens"]),
                    avg_comment_tokens=float(d["avg_comment_tokens"]),
                    n_extracted_questions=int(d["n_extracted_questions"]),
                )
            )
        return rows
