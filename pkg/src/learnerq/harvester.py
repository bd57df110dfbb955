"""Video metadata, caption and comment acquisition with an on-disk cache.

Every raw response is stored verbatim under ``<cache>/<kind>/<id>.json``
before it is parsed, so a warm cache reproduces a harvest exactly and
without credentials.
"""

from __future__ import annotations

import html
import json
import logging
import os
import re
import threading
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .corpus import CommentRecord, Corpus, VideoRecord
from .errors import CredentialError, InvalidConfigError, NotFoundError, RateLimitError
from .taxonomy import SubjectTag

logger = logging.getLogger(__name__)

API_ROOT = "https://www.googleapis.com/youtube/v3"
TIMEDTEXT_URL = "https://www.youtube.com/api/timedtext"
PAGE_SIZE = 100

KIND_VIDEO = "video"
KIND_TRANSCRIPT = "transcript"
KIND_COMMENTS = "comments"
KIND_PLAYLIST = "playlist"


@dataclass(frozen=True)
class HarvestSpec:
    playlist_or_channel_ids: Sequence[str]
    subject: SubjectTag
    max_videos: int
    comments_per_video_cap: int = 1000

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject", SubjectTag.parse(self.subject))
        if self.max_videos < 1:
            raise InvalidConfigError("max_videos must be >= 1")
        if self.comments_per_video_cap < 1:
            raise InvalidConfigError("comments_per_video_cap must be >= 1")


@dataclass(frozen=True)
class CacheEntry:
    key: tuple[str, str]  # (resource kind, resource id)
    payload: str
    fetched_at: str

    def to_dict(self) -> dict:
        return {"key": list(self.key), "payload": self.payload, "fetched_at": self.fetched_at}

    @classmethod
    def from_dict(cls, d: dict) -> "CacheEntry":
        kind, rid = d["key"]
        return cls((kind, rid), d["payload"], d["fetched_at"])


_UNSAFE = re.compile(r"[^A-Za-z0-9_.\-]")


class HarvestCache:
    """One immutable file per (kind, id)."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, kind: str, rid: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault((kind, rid), threading.Lock())

    def path(self, kind: str, rid: str) -> Path:
        return self.directory / kind / f"{_UNSAFE.sub('_', rid)}.json"

    def get(self, kind: str, rid: str) -> CacheEntry | None:
        path = self.path(kind, rid)
        if not path.exists():
            return None
        entry = CacheEntry.from_dict(json.loads(path.read_text(encoding="utf-8")))
        if entry.key != (kind, rid):  # two ids sanitised to the same file name
            return None
        return entry

    def put(self, kind: str, rid: str, payload: str) -> CacheEntry:
        path = self.path(kind, rid)
        if path.exists():
            existing = self.get(kind, rid)
            if existing is not None:
                return existing
        entry = CacheEntry((kind, rid), payload, datetime.now(timezone.utc).isoformat(timespec="seconds"))
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(entry.to_dict(), ensure_ascii=False, indent=1), encoding="utf-8")
        os.replace(tmp, path)
        return entry


class Transport(Protocol):
    def get(self, url: str, params: dict) -> tuple[int, str]: ...


class HttpTransport:
    """Plain HTTPS GET that appends the API key to Data API calls."""

    def __init__(self, api_key: str | None = None, timeout: float = 30.0) -> None:
        import httpx

        self.api_key = api_key if api_key is not None else os.environ.get("VIDEO_API_KEY")
        self._client = httpx.Client(timeout=timeout, follow_redirects=True)

    def get(self, url: str, params: dict) -> tuple[int, str]:
        if url.startswith(API_ROOT):
            if not self.api_key:
                raise CredentialError("VIDEO_API_KEY is not set and the response is not cached")
            params = {**params, "key": self.api_key}
        resp = self._client.get(url, params=params)
        return resp.status_code, resp.text


class RateLimiter:
    """Minimum spacing between requests, shared across threads."""

    def __init__(self, per_second: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep) -> None:
        self.interval = 1.0 / per_second if per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            self._sleep(delay)


def _error_reasons(text: str) -> set[str]:
    try:
        err = json.loads(text).get("error", {})
    except (ValueError, AttributeError):
        return set()
    return {e.get("reason", "") for e in err.get("errors", []) if isinstance(e, dict)}


_RETRY_REASONS = {"rateLimitExceeded", "userRateLimitExceeded", "quotaExceeded"}
_KEEP_REASONS = {"commentsDisabled"}  # a valid, cacheable answer


class Harvester:
    def __init__(
        self,
        cache: HarvestCache,
        transport: Transport | None = None,
        max_attempts: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        concurrency: int = 4,
        requests_per_second: float = 5.0,
        caption_lang: str = "en",
    ) -> None:
        self.cache = cache
        self._transport = transport
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self.concurrency = concurrency
        self.limiter = RateLimiter(requests_per_second, sleep=sleep)
        self.caption_lang = caption_lang
        self.network_calls = 0
        self._count_lock = threading.Lock()

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            self._transport = HttpTransport()
        return self._transport

    # -- raw access --------------------------------------------------------

    def _fetch(self, kind: str, rid: str, url: str, params: dict) -> str:
        with self.cache.lock(kind, rid):
            hit = self.cache.get(kind, rid)
            if hit is not None:
                return hit.payload
            text = self._request(url, params, what=f"{kind} {rid}")
            return self.cache.put(kind, rid, text).payload

    def _request(self, url: str, params: dict, what: str) -> str:
        for attempt in range(self.max_attempts):
            self.limiter.wait()
            status, text = self.transport.get(url, params)
            with self._count_lock:
                self.network_calls += 1
            reasons = _error_reasons(text) if status >= 400 else set()
            if status == 200 or reasons & _KEEP_REASONS:
                return text
            if status == 404:
                raise NotFoundError(f"{what}: not found")
            retryable = status == 429 or status >= 500 or bool(reasons & _RETRY_REASONS)
            if status in (401, 403) and not retryable:
                raise CredentialError(f"{what}: request rejected ({status})")
            if not retryable:
                raise NotFoundError(f"{what}: unexpected status {status}")
            if attempt + 1 < self.max_attempts:
                delay = self.backoff * 2**attempt
                logger.info("%s: status %d, retrying in %.1fs", what, status, delay)
                self._sleep(delay)
        raise RateLimitError(f"{what}: still rate limited after {self.max_attempts} attempts")

    # -- typed fetches ----------------------------------------------------

    def fetch_video_metadata(self, video_id: str, subject: SubjectTag | str) -> VideoRecord:
        text = self._fetch(
            KIND_VIDEO, video_id, f"{API_ROOT}/videos", {"part": "snippet,statistics", "id": video_id}
        )
        items = json.loads(text).get("items") or []
        if not items:
            raise NotFoundError(f"video {video_id} not found")
        item = items[0]
        snippet, stats = item.get("snippet", {}), item.get("statistics", {})
        return VideoRecord(
            video_id=video_id,
            subject=subject,
            title=snippet.get("title", ""),
            description=snippet.get("description", ""),
            view_count=int(stats.get("viewCount", 0)),
            like_count=int(stats.get("likeCount", 0)),
        )

    def fetch_transcript(self, video_id: str) -> str:
        text = self._fetch(
            KIND_TRANSCRIPT, video_id, TIMEDTEXT_URL, {"v": video_id, "lang": self.caption_lang, "fmt": "json3"}
        )
        segments = parse_caption_payload(text)
        if not segments:
            raise NotFoundError(f"video {video_id} has no captions")
        return " ".join(segments)

    def fetch_comments(self, video_id: str, cap: int) -> list[CommentRecord]:
        if cap < 1:
            raise InvalidConfigError("comment cap must be >= 1")
        records: list[CommentRecord] = []
        token = None
        page = 0
        while len(records) < cap:
            params = {
                "part": "snippet",
                "videoId": video_id,
                "maxResults": PAGE_SIZE,
                "order": "relevance",
                "textFormat": "plainText",
            }
            if token:
                params["pageToken"] = token
            text = self._fetch(KIND_COMMENTS, f"{video_id}.p{page}", f"{API_ROOT}/commentThreads", params)
            if "commentsDisabled" in _error_reasons(text):
                logger.warning("comments are disabled for video %s", video_id)
                return []
            body = json.loads(text)
            for item in body.get("items", []):
                if len(records) >= cap:
                    break
                top = item["snippet"]["topLevelComment"]
                sn = top["snippet"]
                records.append(
                    CommentRecord(
                        comment_id=top.get("id") or item["id"],
                        video_id=video_id,
                        raw_text=sn.get("textOriginal", sn.get("textDisplay", "")),
                        like_count=int(sn.get("likeCount", 0)),
                        reply_count=int(item["snippet"].get("totalReplyCount", 0)),
                        retrieval_rank=len(records) + 1,
                    )
                )
            token = body.get("nextPageToken")
            page += 1
            if not token:
                break
        return records

    def list_videos(self, source_id: str, limit: int) -> list[str]:
        """Video ids of a playlist, or of a channel's uploads playlist."""
        playlist = "UU" + source_id[2:] if source_id.startswith("UC") else source_id
        ids: list[str] = []
        token = None
        page = 0
        while len(ids) < limit:
            params = {"part": "contentDetails", "playlistId": playlist, "maxResults": 50}
            if token:
                params["pageToken"] = token
            body = json.loads(self._fetch(KIND_PLAYLIST, f"{playlist}.p{page}", f"{API_ROOT}/playlistItems", params))
            ids.extend(item["contentDetails"]["videoId"] for item in body.get("items", []))
            token = body.get("nextPageToken")
            page += 1
            if not token:
                break
        return ids[:limit]

    # -- whole harvest ----------------------------------------------------

    def harvest_video(self, video_id: str, subject: SubjectTag, cap: int) -> tuple[VideoRecord, list[CommentRecord]]:
        video = self.fetch_video_metadata(video_id, subject)
        try:
            video.transcript = self.fetch_transcript(video_id)
        except NotFoundError:
            logger.warning("no transcript for video %s", video_id)
        comments = self.fetch_comments(video_id, cap)
        video.comment_ids = [c.comment_id for c in comments]
        return video, comments

    def harvest(self, spec: HarvestSpec) -> Corpus:
        video_ids: list[str] = []
        for source in spec.playlist_or_channel_ids:
            for vid in self.list_videos(source, spec.max_videos - len(video_ids)):
                if vid not in video_ids:
                    video_ids.append(vid)
            if len(video_ids) >= spec.max_videos:
                break
        return self.harvest_ids(video_ids, spec.subject, spec.comments_per_video_cap)

    def harvest_ids(self, video_ids: Sequence[str], subject: SubjectTag | str, cap: int = 1000) -> Corpus:
        subject = SubjectTag.parse(subject)

        def one(vid: str):
            try:
                return self.harvest_video(vid, subject, cap)
            except NotFoundError as exc:
                logger.warning("skipping %s: %s", vid, exc)
                return None

        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            results = list(pool.map(one, video_ids))  # map keeps input order
        videos, comments = [], []
        for res in results:
            if res is not None:
                videos.append(res[0])
                comments.extend(res[1])
        return Corpus(videos=videos, comments=comments)


def parse_caption_payload(text: str) -> list[str]:
    """Caption text segments from a json3, XML or WebVTT payload, timestamps dropped."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("{"):
        body = json.loads(text)
        out = []
        for event in body.get("events", []):
            seg = "".join(s.get("utf8", "") for s in event.get("segs", []) or [])
            seg = " ".join(seg.split())
            if seg:
                out.append(seg)
        return out
    if text.startswith("<"):
        root = ET.fromstring(text)
        return [" ".join(html.unescape(el.text or "").split()) for el in root.iter() if el.tag in ("text", "p") and (el.text or "").strip()]
    if text.startswith("WEBVTT"):
        out = []
        for block in text.split("\n\n")[1:]:
            lines = [ln for ln in block.splitlines() if ln.strip() and "-->" not in ln and not ln.strip().isdigit()]
            seg = " ".join(" ".join(lines).split())
            seg = re.sub(r"<[^>]+>", "", seg)
            if seg:
                out.append(seg)
        return out
    return []
