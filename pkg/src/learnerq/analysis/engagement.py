"""BT-level distribution per subject and view-normalised engagement per level."""

from __future__ import annotations

import csv
import logging
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..corpus import CommentRecord, QuestionRecord, VideoRecord
from ..errors import InvalidConfigError, InvalidInputError
from ..taxonomy import ALL_LEVELS, BLOOM_LEVELS, SUBJECTS, BTLevel, SubjectTag

logger = logging.getLogger(__name__)

DISTRIBUTION_FILE = "bt_distribution.csv"
ENGAGEMENT_FILE = "engagement.csv"


@dataclass(frozen=True)
class DistributionRow:
    subject: SubjectTag
    proportions: Mapping[BTLevel, float]
    n_questions: int


@dataclass(frozen=True)
class EngagementRow:
    bt_class: BTLevel
    mean_like_rate: float
    mean_reply_rate: float
    n_questions: int


def _labelled(questions: Iterable[QuestionRecord]) -> list[tuple[QuestionRecord, BTLevel]]:
    out = []
    for q in questions:
        if q.bt_label is None:
            raise InvalidInputError(f"question {q.question_id} has no BT label")
        out.append((q, BTLevel.parse(q.bt_label)))
    return out


def bt_distribution(questions: Iterable[QuestionRecord], include_irrelevant: bool = False) -> list[DistributionRow]:
    """Per-subject class proportions; without Irrelevant they are renormalised over the six levels."""
    levels = ALL_LEVELS if include_irrelevant else BLOOM_LEVELS
    counts: dict[SubjectTag, Counter] = defaultdict(Counter)
    for q, label in _labelled(questions):
        counts[SubjectTag.parse(q.subject)][label] += 1

    rows = []
    for subject in SUBJECTS:
        c = counts.get(subject, Counter())
        n = sum(c[level] for level in levels)
        if n == 0:
            logger.warning("no labelled questions for %s; row omitted", subject.value)
            continue
        rows.append(DistributionRow(subject, {level: c[level] / n for level in levels}, n))
    return rows


def engagement_rates(
    questions: Iterable[QuestionRecord],
    comments: Iterable[CommentRecord],
    videos: Iterable[VideoRecord],
    aggregate: str = "mean",
    include_irrelevant: bool = False,
) -> list[EngagementRow]:
    """Likes and replies of each question's comment divided by its video's views, aggregated per level."""
    if aggregate not in ("mean", "median"):
        raise InvalidConfigError(f"aggregate must be 'mean' or 'median', got {aggregate!r}")
    agg = statistics.fmean if aggregate == "mean" else statistics.median
    by_comment = {c.comment_id: c for c in comments}
    by_video = {v.video_id: v for v in videos}

    likes: dict[BTLevel, list[float]] = defaultdict(list)
    replies: dict[BTLevel, list[float]] = defaultdict(list)
    skipped = 0
    for q, label in _labelled(questions):
        if label is BTLevel.IRRELEVANT and not include_irrelevant:
            continue
        comment = by_comment.get(q.comment_id)
        video = by_video.get(q.video_id)
        if comment is None or video is None:
            raise InvalidInputError(f"question {q.question_id} does not join to a comment and a video")
        if video.view_count == 0:
            skipped += 1
            continue
        likes[label].append(comment.like_count / video.view_count)
        replies[label].append(comment.reply_count / video.view_count)
    if skipped:
        logger.warning("%d questions excluded: video has zero views", skipped)

    # Sorting the rates keeps the float result independent of input order.
    return [
        EngagementRow(level, agg(sorted(likes[level])), agg(sorted(replies[level])), len(likes[level]))
        for level in ALL_LEVELS
        if likes[level]
    ]


def write_distribution_csv(rows: Sequence[DistributionRow], path: str | Path) -> None:
    levels = list(rows[0].proportions) if rows else list(BLOOM_LEVELS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "n_questions", *[level.value for level in levels]])
        for row in rows:
            w.writerow([row.subject.value, row.n_questions, *[f"{row.proportions[level]:.10f}" for level in levels]])


def write_engagement_csv(rows: Sequence[EngagementRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bt_class", "mean_like_rate", "mean_reply_rate", "n_questions"])
        for row in rows:
            w.writerow([row.bt_class.value, f"{row.mean_like_rate:.12g}", f"{row.mean_reply_rate:.12g}", row.n_questions])
