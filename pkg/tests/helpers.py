"""Synthetic datasets and small configs shared by the tests."""

from __future__ import annotations

import random

from learnerq.btclass import BTExample
from learnerq.encoder import TrainConfig
from learnerq.qdetect import DetectExample
from learnerq.taxonomy import BLOOM_LEVELS
from learnerq.teacher import SoftLabel

WH = ["why", "how", "what", "when", "where", "which"]
AUX = ["does", "can", "is", "should", "could", "would"]
NOUNS = ["cell", "enzyme", "atom", "vector", "orbit", "loop", "matrix", "gene", "photon", "graph", "protein", "lens"]
VERBS = ["change", "work", "grow", "move", "split", "form"]
PAST = ["changed", "worked", "grew", "moved", "split", "formed"]
ADVS = ["slowly", "quickly", "today", "again", "clearly", "well"]


def tiny_config(**kw) -> TrainConfig:
    base = dict(
        encoder_checkpoint="scratch",
        learning_rate=2e-3,
        batch_size=16,
        max_sequence_length=32,
        dropout=0.1,
        epochs=3,
        encoder_dim=32,
        encoder_layers=1,
        encoder_heads=2,
        head_hidden=32,
        patience=3,
    )
    base.update(kw)
    return TrainConfig(**base)


def separable_detect_set(n: int = 400, seed: int = 0) -> list[DetectExample]:
    """Half interrogative (wh/aux words, some with '?' removed), half declarative.

    The two halves share no content-free words, so a bag-of-words linear
    probe separates them perfectly.
    """
    rng = random.Random(seed)
    out = []
    for i in range(n):
        noun = rng.choice(NOUNS)
        if i % 2 == 0:
            mark = "?" if rng.random() < 0.7 else ""
            text = f"{rng.choice(WH)} {rng.choice(AUX)} the {noun} {rng.choice(VERBS)}{mark}"
            p = rng.uniform(0.8, 0.999)
            out.append(DetectExample(text, 1, SoftLabel.from_prediction(1, _log(p))))
        else:
            text = f"the {noun} {rng.choice(PAST)} {rng.choice(ADVS)}."
            p = rng.uniform(0.8, 0.999)
            out.append(DetectExample(text, 0, SoftLabel.from_prediction(0, _log(p))))
    return out


def _log(p: float) -> float:
    import math

    return math.log(p)


KEYWORDS = {
    "Knowledge": ["define", "list", "name", "recall"],
    "Comprehension": ["explain", "summarize", "describe", "interpret"],
    "Application": ["calculate", "solve", "apply", "compute"],
    "Analysis": ["compare", "contrast", "differentiate", "examine"],
    "Evaluation": ["evaluate", "justify", "assess", "critique"],
    "Synthesis": ["design", "create", "propose", "formulate"],
}
TOPICS = ["osmosis", "entropy", "momentum", "recursion", "integrals", "mitosis", "torque", "sorting", "acids", "limits"]
TAILS = ["in this lecture", "for the exam", "using an example", "step by step", "in two sentences", "for a beginner"]


def keyword_bt_set(per_class: int = 40, seed: int = 0, origin: str = "dasqbt") -> list[BTExample]:
    """Questions whose level is fixed by a level-specific leading verb."""
    rng = random.Random(seed)
    out = []
    for level in BLOOM_LEVELS:
        for _ in range(per_class):
            kw = rng.choice(KEYWORDS[level.value])
            out.append(BTExample(f"{kw} the {rng.choice(TOPICS)} {rng.choice(TAILS)}", level, origin))
    return out


class FakeChat:
    """Deterministic stand-in for a chat-completions provider.

    Label requests are answered '1' for statements ending in '?' with a
    log-probability derived from the statement length; generation requests
    echo the requested level, topic and subject as a question.
    """

    def __init__(self, refuse_first: int = 0, with_logprobs: bool = True) -> None:
        self.calls = 0
        self.refuse_first = refuse_first
        self.with_logprobs = with_logprobs

    def complete(self, request: dict) -> dict:
        self.calls += 1
        last = request["messages"][-1]["content"]
        if request.get("max_tokens") == 1:
            label = "1" if last.rstrip().endswith("?") else "0"
            logprob = -0.01 * (1 + len(last) % 50)
            choice = {"message": {"role": "assistant", "content": label}}
            if self.with_logprobs:
                choice["logprobs"] = {"content": [{"token": label, "logprob": logprob, "top_logprobs": []}]}
            return {"choices": [choice]}
        if self.refuse_first > 0:
            self.refuse_first -= 1
            return {"choices": [{"message": {"role": "assistant", "content": "I'm sorry, I can't help with that."}}]}
        words = last.split()
        level = words[1]
        topic_subject = last.split(" question on ", 1)[1]
        topic, subject = topic_subject.rsplit(" in ", 1)
        return {"choices": [{"message": {"role": "assistant", "content": f"[{level}] What about {topic} in {subject} (seed {request.get('seed')})?"}}]}


NOISE = ["lol", "anyone", "here", "2024", "who", "else", "watching", "bro", "really", "ok", "huh", "same"]


def question_records(n: int = 200, seed: int = 0) -> list:
    """Extracted-question stand-ins: half keyword questions, half chatter."""
    from learnerq.corpus import QuestionRecord
    from learnerq.taxonomy import SUBJECTS

    rng = random.Random(seed)
    out = []
    for i in range(n):
        if i % 2 == 0:
            level = BLOOM_LEVELS[(i // 2) % len(BLOOM_LEVELS)]
            text = f"{rng.choice(KEYWORDS[level.value])} the {rng.choice(TOPICS)} {rng.choice(TAILS)}?"
        else:
            text = " ".join(rng.choice(NOISE) for _ in range(rng.randint(3, 7))) + "?"
        out.append(
            QuestionRecord(
                question_id=f"q{i:04d}",
                comment_id=f"c{i:04d}",
                video_id=f"v{i % 10:02d}",
                subject=SUBJECTS[i % len(SUBJECTS)],
                text=text,
                detection_prob=0.9,
                token_count=len(text.split()),
            )
        )
    return out


def write_pipeline_config(path, fixtures_dir, **data) -> None:
    """A YAML config that trains tiny scratch encoders on the fixture data."""
    import yaml

    small = dict(
        encoder_checkpoint="scratch",
        learning_rate=3e-3,
        batch_size=8,
        max_sequence_length=32,
        epochs=4,
        encoder_dim=32,
        encoder_layers=1,
        encoder_heads=2,
        head_hidden=32,
    )
    cfg = {
        "data": {"dasqbt": str(fixtures_dir / "mini_dasqbt.jsonl"), **data},
        "train": {"bt-stage1": small, "bt-stage2": small, "qdetect": small},
        "bt": {"k_irrelevant": 10},
        "analysis": {"min_freq": 2},
        "seed": 11,
    }
    path.write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")


PIPELINE = [
    ["train", "qdetect", "--regex"],
    ["extract-questions", "--input", "{corpus}"],
    ["train", "bt-stage1"],
    ["train", "bt-stage2"],
    ["classify"],
    ["analyze"],
    ["report"],
]


def run_pipeline(root, fixtures_dir, config) -> list[int]:
    from learnerq.cli import main

    codes = []
    for step in PIPELINE:
        argv = [a.format(corpus=fixtures_dir / "corpus") for a in step]
        codes.append(main(argv + ["--config", str(config), "--output-dir", str(root), "--log-level", "WARNING"]))
    return codes
