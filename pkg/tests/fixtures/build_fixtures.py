"""Regenerate the bundled fixtures.

The corpus is authored below as literal text; the expected cleaning,
filtering and extraction results live in ``corpus_expected.json`` and were
counted by hand, not produced by this script.  The harvest cache holds the
same corpus as raw API payloads so a warm-cache harvest reproduces it.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

HERE = Path(__file__).parent

VIDEOS = [
    # id, subject, title, views, likes, transcript, topic, topic2
    ("bio01", "biology", "Cell division", 1200, 60, "cells divide by mitosis and meiosis", "mitosis", "meiosis"),
    ("bio02", "biology", "DNA replication", 800, 40, "dna replication is semi conservative", "replication", "transcription"),
    ("chem01", "chemistry", "Entropy", 500, 25, "entropy measures disorder in a system", "entropy", "enthalpy"),
    ("math01", "mathematics", "Integrals", 2000, 150, "integrals accumulate area under a curve", "integrals", "derivatives"),
    ("phys01", "physics", "Momentum", 300, 9, "momentum is mass times velocity", "momentum", "inertia"),
    ("cs01", "computer_science", "Recursion", 4500, 120, "recursion calls the same function on smaller input", "recursion", "iteration"),
]

# Noise differs per video; the cleaned text does not.
URLS = ["https://example.com/notes", "http://a.co/x?y=1", "www.lecture-notes.org/p/3", "HTTPS://Site.io", "https://t.co/abc", "www.x.y"]
MENTIONS = ["@bob", "@dr.smith-lab", "@Anna_K", "@x1", "@TeacherMike", "@q.e.d"]
EMOJI = ["😀", "👩‍🔬", "🎉", "✨", "🤓", "❤️"]

LONG_Q = "Is it true that {t} " + "really " * 46 + "matters?"


def comment_texts(i: int, t: str, t2: str) -> list[str]:
    return [
        f"Great lecture! {URLS[i]} Why does {t} matter so much?",
        f"{MENTIONS[i]} thanks {EMOJI[i]} for explaining {t} so clearly",
        "ok 👍",
        "Why though?",
        f"Nice. Why? How is {t} related to the exam?",
        f"I love this channel {URLS[(i + 1) % 6]} 🔥🔥 keep going",
        f"Can someone explain {t} again? I missed the part at 4:20 {MENTIONS[(i + 2) % 6]}",
        LONG_Q.format(t=t),
        "Thank you professor 🙏🏽 this helped a lot",
        f"What is the difference between {t} and {t2}? 🤔 {URLS[(i + 3) % 6]}",
    ]


def build_corpus() -> tuple[list[dict], list[dict]]:
    videos, comments = [], []
    for i, (vid, subject, title, views, likes, transcript, t, t2) in enumerate(VIDEOS):
        texts = comment_texts(i, t, t2)
        if vid == "cs01":
            texts.append("blah " * 599 + "blah")
        ids = []
        for rank, text in enumerate(texts, start=1):
            cid = f"{vid}-c{rank:02d}"
            ids.append(cid)
            comments.append(
                {
                    "comment_id": cid,
                    "video_id": vid,
                    "raw_text": text,
                    "clean_text": "",
                    "like_count": (rank * 3 + i) % 7,
                    "reply_count": (rank + i) % 3,
                    "retrieval_rank": rank,
                }
            )
        videos.append(
            {
                "video_id": vid,
                "subject": subject,
                "title": title,
                "description": f"A lecture on {title.lower()}.",
                "view_count": views,
                "like_count": likes,
                "transcript": transcript,
                "comment_ids": ids,
            }
        )
    return videos, comments


def write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def cache_entry(kind: str, rid: str, payload: dict | str) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, ensure_ascii=False)
    path = HERE / "harvest_cache" / kind / f"{rid}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    entry = {"key": [kind, rid], "payload": text, "fetched_at": "2024-05-01T00:00:00+00:00"}
    path.write_text(json.dumps(entry, ensure_ascii=False, indent=1), encoding="utf-8")


def build_harvest_cache(videos: list[dict], comments: list[dict]) -> None:
    for v in videos:
        vid = v["video_id"]
        cache_entry(
            "video",
            vid,
            {
                "kind": "youtube#videoListResponse",
                "items": [
                    {
                        "id": vid,
                        "snippet": {"title": v["title"], "description": v["description"]},
                        "statistics": {"viewCount": str(v["view_count"]), "likeCount": str(v["like_count"])},
                    }
                ],
            },
        )
        words = v["transcript"].split()
        half = len(words) // 2
        cache_entry(
            "transcript",
            vid,
            {
                "events": [
                    {"tStartMs": 0, "dDurationMs": 2000, "segs": [{"utf8": " ".join(words[:half])}]},
                    {"tStartMs": 2000, "dDurationMs": 40, "aAppend": 1, "segs": [{"utf8": "\n"}]},
                    {"tStartMs": 2040, "dDurationMs": 2000, "segs": [{"utf8": " ".join(words[half:])}]},
                ]
            },
        )
        mine = [c for c in comments if c["video_id"] == vid]
        # bio01 is split across two pages to exercise pagination.
        pages = [mine[:6], mine[6:]] if vid == "bio01" else [mine]
        for p, chunk in enumerate(pages):
            body = {
                "kind": "youtube#commentThreadListResponse",
                "items": [
                    {
                        "id": c["comment_id"],
                        "snippet": {
                            "videoId": vid,
                            "totalReplyCount": c["reply_count"],
                            "topLevelComment": {
                                "id": c["comment_id"],
                                "snippet": {"textOriginal": c["raw_text"], "likeCount": c["like_count"]},
                            },
                        },
                    }
                    for c in chunk
                ],
            }
            if p + 1 < len(pages):
                body["nextPageToken"] = f"page{p + 1}"
            cache_entry("comments", f"{vid}.p{p}", body)

    # Edge cases outside the corpus.
    cache_entry("video", "nocomm01", {"items": [{"id": "nocomm01", "snippet": {"title": "Quiet", "description": ""}, "statistics": {"viewCount": "10", "likeCount": "1"}}]})
    cache_entry("transcript", "nocomm01", "")
    cache_entry(
        "comments",
        "nocomm01.p0",
        {"error": {"code": 403, "message": "comments disabled", "errors": [{"reason": "commentsDisabled", "domain": "youtube.commentThread"}]}},
    )
    cache_entry("video", "ghost01", {"kind": "youtube#videoListResponse", "items": []})
    cache_entry(
        "playlist",
        "PLfixture.p0",
        {"items": [{"contentDetails": {"videoId": v["video_id"]}} for v in videos[:3]], "nextPageToken": "n1"},
    )
    cache_entry("playlist", "PLfixture.p1", {"items": [{"contentDetails": {"videoId": v["video_id"]}} for v in videos[3:]]})


# ---------------------------------------------------------------------------
# Bloom-level question sets
# ---------------------------------------------------------------------------

MINI_DASQBT = {
    "Knowledge": [
        "What is the chemical symbol for sodium?",
        "Define the term osmosis.",
        "List the four bases found in DNA.",
        "Who proposed the theory of general relativity?",
        "Name the organelle that produces ATP.",
        "What is the formula for the area of a circle?",
        "State Newton's first law of motion.",
        "Recall the boiling point of water at sea level.",
        "Which data structure follows first in first out order?",
        "Identify the noble gases in the periodic table.",
    ],
    "Comprehension": [
        "Explain why ice floats on water.",
        "Summarize the main steps of photosynthesis.",
        "Describe how a binary search narrows the search range.",
        "Interpret what a negative slope means on a velocity graph.",
        "Explain the difference between weather and climate.",
        "Paraphrase the law of conservation of energy in your own words.",
        "Why does increasing temperature speed up a reaction?",
        "Describe what happens to enzymes at very high temperatures.",
        "Explain how recursion eventually terminates.",
        "Give an example that illustrates Newton's third law.",
    ],
    "Application": [
        "Calculate the momentum of a 2 kg ball moving at 3 m/s.",
        "Use the quadratic formula to solve x^2 - 5x + 6 = 0.",
        "Apply Ohm's law to find the current through a 10 ohm resistor at 5 volts.",
        "Compute the molar mass of sulfuric acid.",
        "Solve for the derivative of x^3 + 2x.",
        "Write a loop that sums the numbers from 1 to 100.",
        "Demonstrate how to balance the equation for burning methane.",
        "Use a Punnett square to predict offspring of two heterozygous parents.",
        "Determine the acceleration of a car that goes from 0 to 20 m/s in 5 s.",
        "Implement a function that reverses a string.",
    ],
    "Analysis": [
        "Compare mitosis and meiosis in terms of their outcomes.",
        "Analyze why the experiment produced inconsistent results.",
        "Differentiate between ionic and covalent bonds.",
        "Examine the factors that affect the rate of diffusion.",
        "What are the underlying assumptions of the ideal gas law?",
        "Break down the time complexity of merge sort.",
        "Contrast the roles of DNA and RNA in protein synthesis.",
        "Investigate the relationship between pressure and volume in this data.",
        "Distinguish between correlation and causation in the study.",
        "Categorize these reactions as exothermic or endothermic.",
    ],
    "Evaluation": [
        "Assess whether nuclear power is a sustainable energy source.",
        "Judge the validity of the conclusion drawn from this experiment.",
        "Critique the design of this sorting algorithm.",
        "Which method is more reliable for measuring g and why?",
        "Evaluate the strengths and weaknesses of the Bohr model.",
        "Justify the choice of a hash table over a list for this task.",
        "Defend or refute the claim that all mutations are harmful.",
        "Rate the effectiveness of vaccines in controlling epidemics.",
        "Appraise the evidence supporting the big bang theory.",
        "Do you agree that proof by induction is always valid? Argue your view.",
    ],
    "Synthesis": [
        "Design an experiment to test the effect of light on plant growth.",
        "Propose a new algorithm for scheduling classes without conflicts.",
        "Create a model that predicts population growth in a closed habitat.",
        "Formulate a hypothesis about why some metals corrode faster.",
        "Develop a plan to reduce energy loss in a home heating system.",
        "Invent a device that converts wind motion into stored energy.",
        "Compose a proof that the square root of 2 is irrational.",
        "Construct a data pipeline that cleans and merges two datasets.",
        "Devise a strategy to synthesize aspirin in a school lab.",
        "Build a simulation of planetary orbits using Newton's laws.",
    ],
}


def build_bt_sets() -> None:
    rows = [{"text": t, "label": level, "origin": "dasqbt"} for level, qs in MINI_DASQBT.items() for t in qs]
    write_jsonl(HERE / "mini_dasqbt.jsonl", rows)


def build_human_annotations() -> None:
    """300 samples x 3 annotators; samples 7, 32, ... (every 25th from 7) are three-way splits."""
    levels = list(MINI_DASQBT)
    rng = random.Random(7)
    tie_ids = {7 + 25 * j for j in range(12)}
    with open(HERE / "human_annotations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["question_id", "annotator_id", "label"])
        for s in range(300):
            qid = f"h{s:03d}"
            if s in tie_ids:
                labels = rng.sample(levels, 3)
            else:
                major = rng.choice(levels)
                other = rng.choice(levels)
                labels = [major, major, other]
                rng.shuffle(labels)
            for a, label in enumerate(labels):
                w.writerow([qid, f"ann{a + 1}", label])


def main() -> None:
    videos, comments = build_corpus()
    write_jsonl(HERE / "corpus" / "videos.jsonl", videos)
    write_jsonl(HERE / "corpus" / "comments.jsonl", comments)
    build_harvest_cache(videos, comments)
    build_bt_sets()
    build_human_annotations()


if __name__ == "__main__":
    main()
