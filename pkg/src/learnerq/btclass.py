"""Bloom's Taxonomy question classifier and its two-stage training recipe.

Stage 1 trains a 6-way classifier on the labelled question dataset.  Its
softmax confidence is then used to mine the least confident extracted
questions as an ``Irrelevant`` class, and stage 2 retrains a 7-way model on
the original training split, teacher-generated questions and the mined
examples.  Generated questions are only ever used for training.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .analysis.metrics import MetricsReport, classification_metrics
from .corpus import QuestionRecord, read_jsonl, write_jsonl
from .encoder import (
    TRAIN_LOG_FILE,
    SequenceClassifier,
    TrainConfig,
    dataset_hash,
    fit,
    load_classifier,
    new_classifier,
    save_classifier,
    write_train_log,
)
from .errors import GenerationError, InvalidDatasetError, InvalidInputError
from .taxonomy import ALL_LEVELS, BLOOM_LEVELS, SUBJECTS, BTLevel, class_set
from .teacher import Teacher, topic_pools

logger = logging.getLogger(__name__)

ORIGINS = ("dasqbt", "augmented", "mined_irrelevant", "human")


@dataclass(frozen=True)
class BTExample:
    text: str
    label: BTLevel
    origin: str = "dasqbt"

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", BTLevel.parse(self.label))
        if self.origin not in ORIGINS:
            raise InvalidDatasetError(f"unknown origin {self.origin!r}", record=self.text)
        if self.origin == "augmented" and self.label is BTLevel.IRRELEVANT:
            raise InvalidDatasetError("augmented examples cannot be Irrelevant", record=self.text)
        if self.origin == "mined_irrelevant" and self.label is not BTLevel.IRRELEVANT:
            raise InvalidDatasetError("mined examples must be Irrelevant", record=self.text)

    def to_dict(self) -> dict:
        return {"text": self.text, "label": self.label.value, "origin": self.origin}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BTExample":
        try:
            return cls(str(d["text"]), d["label"], d.get("origin", "dasqbt"))
        except (KeyError, ValueError) as exc:
            raise InvalidDatasetError(f"bad Bloom record: {exc}", record=dict(d)) from exc


def load_bt_dataset(path: str | Path) -> list[BTExample]:
    return [BTExample.from_dict(row) for row in read_jsonl(Path(path))]


def save_bt_dataset(examples: Iterable[BTExample], path: str | Path) -> int:
    return write_jsonl(Path(path), (ex.to_dict() for ex in examples))


@dataclass(frozen=True)
class ConfidenceScore:
    question_id: str
    max_class_prob: float
    predicted: BTLevel
    text: str = ""


@dataclass
class HumanSample:
    question_id: str
    annotations: tuple[BTLevel, ...]
    gold: BTLevel | None = field(init=False)

    def __post_init__(self) -> None:
        self.annotations = tuple(BTLevel.parse(a) for a in self.annotations)
        self.gold = aggregate_human_labels(self)


# ---------------------------------------------------------------------------
# Splitting and augmentation
# ---------------------------------------------------------------------------


def _split_group(items: list, train_fraction: float, rng: random.Random) -> tuple[list, list]:
    items = list(items)
    rng.shuffle(items)
    n_train = int(round(train_fraction * len(items)))
    return items[:n_train], items[n_train:]


def split_dataset(
    examples: Sequence[BTExample], train_fraction: float = 0.8, seed: int = 0
) -> tuple[list[BTExample], list[BTExample]]:
    """Stratified, seeded split into (train+val, test).

    Augmented examples are never placed in the held-out part.  If any class
    has fewer than two examples the split falls back to a global shuffle.
    Both outputs keep the input order.
    """
    if not examples:
        raise InvalidInputError("cannot split an empty dataset")
    if not 0.0 < train_fraction <= 1.0:
        raise InvalidInputError("train_fraction must lie in (0, 1]")
    positions = list(range(len(examples)))
    forced = [i for i in positions if examples[i].origin == "augmented"]
    free = [i for i in positions if examples[i].origin != "augmented"]
    rng = random.Random(seed)
    by_label: dict[BTLevel, list[int]] = defaultdict(list)
    for i in free:
        by_label[examples[i].label].append(i)
    train_idx: list[int] = list(forced)
    if by_label and min(len(v) for v in by_label.values()) < 2:
        logger.warning("a class has fewer than 2 examples; using an unstratified split")
        tr, _ = _split_group(free, train_fraction, rng)
        train_idx += tr
    else:
        for label in ALL_LEVELS:
            if label in by_label:
                tr, _ = _split_group(by_label[label], train_fraction, rng)
                train_idx += tr
    chosen = set(train_idx)
    train = [examples[i] for i in positions if i in chosen]
    test = [examples[i] for i in positions if i not in chosen]
    assert not any(ex.origin == "augmented" for ex in test)
    return train, test


def augment_dataset(
    base: Sequence[BTExample],
    teacher: Teacher,
    target_total: int = 5779,
    seed: int = 0,
) -> list[BTExample]:
    """Top ``base`` up to ``target_total`` examples with generated questions.

    Generation cycles through the six levels, and through the subjects every
    six calls; the topic is drawn at random from the subject's pool.
    """
    pools = topic_pools()
    rng = random.Random(seed)
    needed = max(0, target_total - len(base))
    out = list(base)
    failures = 0
    for j in range(needed):
        level = BLOOM_LEVELS[j % len(BLOOM_LEVELS)]
        subject = SUBJECTS[(j // len(BLOOM_LEVELS)) % len(SUBJECTS)]
        topic = rng.choice(pools[subject])
        try:
            q = teacher.generate_bt_question(level, topic, subject)
        except GenerationError as exc:
            failures += 1
            logger.warning("generation %d failed: %s", j, exc)
            continue
        out.append(BTExample(q.text, q.bt_level, "augmented"))
    if failures:
        logger.warning("augmentation produced %d of %d requested examples", needed - failures, needed)
    return out


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class BTModel:
    kind = "transformer"

    def __init__(self, classifier: SequenceClassifier, labels: Sequence[BTLevel], fingerprint: dict | None = None, log=None) -> None:
        self.classifier = classifier
        self.labels = tuple(labels)
        self.fingerprint = fingerprint or {}
        self.training_log = list(log or [])

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.classifier.predict_proba(list(texts))

    def save(self, directory: str | Path) -> Path:
        directory = save_classifier(
            self.classifier,
            directory,
            {"kind": self.kind, "task": "btclass", "labels": [lvl.value for lvl in self.labels]},
            self.fingerprint,
        )
        write_train_log(self.training_log, directory / TRAIN_LOG_FILE)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "BTModel":
        classifier, config = load_classifier(directory)
        fp = Path(directory) / "fingerprint.json"
        return cls(classifier, [BTLevel.parse(x) for x in config["labels"]], json.loads(fp.read_text()) if fp.exists() else {})


def train_bt(
    train: Sequence[BTExample],
    val: Sequence[BTExample],
    tcfg: TrainConfig,
    n_classes: int = 6,
) -> BTModel:
    """Fine-tune a 6- or 7-way classifier with cross-entropy; keep the best
    validation macro-F1 checkpoint."""
    labels = class_set(n_classes)
    index = {lvl: i for i, lvl in enumerate(labels)}
    for ex in list(train) + list(val):
        if ex.label not in index:
            raise InvalidDatasetError(f"label {ex.label.value} outside the {n_classes}-class set", record=ex.to_dict())
    if not train:
        raise InvalidDatasetError("training set is empty")
    missing = [lvl.value for lvl in labels if lvl not in {ex.label for ex in train}]
    if missing:
        logger.warning("classes absent from training data: %s", ", ".join(missing))

    texts = [ex.text for ex in train]
    target_t = torch.tensor([index[ex.label] for ex in train], dtype=torch.long)

    def loss_fn(logits, idx):
        loss = F.cross_entropy(logits, target_t[idx])
        return loss, {"lce": float(loss.detach()), "lkl": 0.0, "w_mean": 0.0}

    def macro_f1(preds, golds):
        return classification_metrics(preds, golds, list(range(n_classes))).macro.f1

    classifier = new_classifier(tcfg, n_classes, texts)
    result = fit(
        classifier,
        texts,
        loss_fn,
        tcfg,
        val_texts=[ex.text for ex in val],
        val_labels=[index[ex.label] for ex in val],
        score_fn=macro_f1,
    )
    fingerprint = {
        "dataset_hash": dataset_hash([ex.to_dict() for ex in train]),
        "val_hash": dataset_hash([ex.to_dict() for ex in val]),
        "seed": tcfg.seed,
        "best_epoch": result.best_epoch,
        "best_val_macro_f1": result.best_score if result.val_scores else None,
    }
    return BTModel(classifier, labels, fingerprint, result.log)


def classify_bt(model: BTModel, questions: Sequence[QuestionRecord | str]) -> list[tuple[BTLevel, list[float]]]:
    """Argmax label and a 7-entry probability vector (report order) per
    question.  A 6-way model assigns probability 0 to ``Irrelevant``."""
    texts = [q if isinstance(q, str) else q.text for q in questions]
    probs = model.predict_proba(texts)
    out = []
    for row in probs:
        full = [0.0] * len(ALL_LEVELS)
        for p, lvl in zip(row, model.labels):
            full[ALL_LEVELS.index(lvl)] = float(p)
        out.append((model.labels[int(np.argmax(row))], full))
    return out


def apply_labels(questions: Sequence[QuestionRecord], results: Sequence[tuple[BTLevel, list[float]]]) -> list[QuestionRecord]:
    if len(questions) != len(results):
        raise InvalidInputError("questions and results differ in length")
    return [replace(q, bt_label=label, bt_probs=list(probs)) for q, (label, probs) in zip(questions, results)]


def score_confidence(model: BTModel, questions: Sequence[QuestionRecord]) -> list[ConfidenceScore]:
    if model.n_classes != 6:
        raise InvalidInputError("confidence mining expects the 6-class stage-1 model")
    probs = model.predict_proba([q.text for q in questions])
    return [
        ConfidenceScore(q.question_id, float(row.max()), model.labels[int(row.argmax())], q.text)
        for q, row in zip(questions, probs)
    ]


def mine_irrelevant(scores: Sequence[ConfidenceScore], k: int = 500) -> list[BTExample]:
    """The ``k`` least confident questions, relabelled ``Irrelevant``.

    Ties on confidence are broken by ascending question id.
    """
    if k < 0 or len(scores) < k:
        raise InvalidInputError(f"cannot mine {k} examples from {len(scores)} scores")
    ranked = sorted(scores, key=lambda s: (s.max_class_prob, s.question_id))[:k]
    return [BTExample(s.text, BTLevel.IRRELEVANT, "mined_irrelevant") for s in ranked]


def evaluate_bt(model: BTModel, test: Sequence[BTExample]) -> MetricsReport:
    preds = [label for label, _ in classify_bt(model, [ex.text for ex in test])]
    return classification_metrics(preds, [ex.label for ex in test], model.labels)


# ---------------------------------------------------------------------------
# Two-stage recipe
# ---------------------------------------------------------------------------


def train_stage2(
    base_train: Sequence[BTExample],
    base_val: Sequence[BTExample],
    augmented: Sequence[BTExample],
    irrelevant_train: Sequence[BTExample],
    tcfg: TrainConfig,
    val_fraction: float = 0.1,
) -> BTModel:
    """Retrain on original + generated + mined examples.

    The mined training portion is split again into train/val; with no mined
    examples this is a 6-way model trained on exactly the stage-1 data.
    """
    if any(ex.origin != "augmented" for ex in augmented):
        raise InvalidDatasetError("augmented set contains non-augmented examples")
    irr_train, irr_val = ([], [])
    if irrelevant_train:
        irr_train, irr_val = split_dataset(irrelevant_train, 1.0 - val_fraction, tcfg.seed)
    n_classes = 7 if irrelevant_train else 6
    train = list(base_train) + list(augmented) + irr_train
    val = list(base_val) + irr_val
    return train_bt(train, val, tcfg, n_classes)


@dataclass
class TwoStageResult:
    stage1: BTModel
    stage2: BTModel
    train: list[BTExample]
    val: list[BTExample]
    test1: list[BTExample]
    test2: list[BTExample]
    augmented: list[BTExample]
    mined: list[BTExample]
    report1: MetricsReport
    report2: MetricsReport


def run_two_stage(
    dataset: Sequence[BTExample],
    questions: Sequence[QuestionRecord],
    tcfg: TrainConfig,
    k: int = 500,
    augmented: Sequence[BTExample] = (),
    train_fraction: float = 0.8,
    val_fraction: float = 0.1,
) -> TwoStageResult:
    """Run both stages end to end.

    ``augmented`` is produced beforehand by :func:`augment_dataset` (or
    loaded from disk) and only enters the stage-2 training set.  Mined
    examples are split ``train_fraction`` / rest, the held-out part joining
    the stage-1 test set.
    """
    trainval, test1 = split_dataset(dataset, train_fraction, tcfg.seed)
    train, val = split_dataset(trainval, 1.0 - val_fraction, tcfg.seed)
    stage1 = train_bt(train, val, tcfg, 6)
    report1 = evaluate_bt(stage1, test1)

    mined = mine_irrelevant(score_confidence(stage1, questions), k) if k else []
    irr_trainval, irr_test = split_dataset(mined, train_fraction, tcfg.seed) if mined else ([], [])
    stage2 = train_stage2(train, val, augmented, irr_trainval, tcfg, val_fraction)
    test2 = list(test1) + irr_test
    assert not any(ex.origin == "augmented" for ex in test2)
    report2 = evaluate_bt(stage2, test2)
    return TwoStageResult(
        stage1, stage2, train, val, list(test1), test2, list(augmented), mined, report1, report2
    )


# ---------------------------------------------------------------------------
# Human labels
# ---------------------------------------------------------------------------


def aggregate_human_labels(sample: HumanSample) -> BTLevel | None:
    """Majority vote over three annotations; a three-way split has no gold."""
    if len(sample.annotations) != 3:
        raise InvalidInputError(f"expected 3 annotations, got {len(sample.annotations)}")
    label, count = Counter(sample.annotations).most_common(1)[0]
    return label if count >= 2 else None


def load_human_annotations(path: str | Path) -> list[HumanSample]:
    """Read ``question_id, annotator_id, label`` rows into samples (file
    order of first appearance)."""
    grouped: dict[str, list[tuple[str, str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            grouped.setdefault(row["question_id"], []).append((row["annotator_id"], row["label"]))
    samples = []
    for qid, rows in grouped.items():
        rows.sort(key=lambda r: r[0])
        samples.append(HumanSample(qid, tuple(label for _, label in rows)))
    return samples


@dataclass
class HumanEvaluation:
    report: MetricsReport
    n_gold: int
    n_ties: int


def evaluate_human(
    predictions: Mapping[str, BTLevel],
    samples: Sequence[HumanSample],
    classes: Sequence[BTLevel] = ALL_LEVELS,
) -> HumanEvaluation:
    """Score model predictions against aggregated human labels.  Samples
    without a majority are excluded and counted as ties."""
    scored = [s for s in samples if s.gold is not None]
    n_ties = len(samples) - len(scored)
    missing = [s.question_id for s in scored if s.question_id not in predictions]
    if missing:
        raise InvalidInputError(f"{len(missing)} annotated questions have no prediction, e.g. {missing[0]}")
    report = classification_metrics(
        [BTLevel.parse(predictions[s.question_id]) for s in scored], [s.gold for s in scored], classes
    )
    report.extra.update(n_gold=len(scored), excluded_ties=n_ties)
    return HumanEvaluation(report, len(scored), n_ties)
