"""Interrogative-sentence detection trained with a confidence-weighted
knowledge-distillation loss.

The loss for one example with target class ``i``::

    L    = L_CE + alpha * L_KL
    L_CE = -log s_i
    L_KL = (1 - exp(-log s_i / log t_i)) * (-tau^2 * sum_k t_k,tau * log s_k,tau)

``s`` is the student softmax, ``s_tau`` the student softmax at temperature
``tau``, ``t`` the (clamped) teacher distribution and ``t_tau`` the teacher
smoothed with :func:`learnerq.teacher.smooth_teacher`.  The weight in front
of the KL term grows as the student falls behind the teacher on the
target class.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .analysis.metrics import MetricsReport, binary_metrics
from .encoder import (
    CONFIG_FILE,
    TRAIN_LOG_FILE,
    SequenceClassifier,
    TrainConfig,
    dataset_hash,
    fit,
    load_classifier,
    new_classifier,
    read_model_config,
    save_classifier,
    write_train_log,
)
from .errors import InvalidConfigError, InvalidDatasetError, InvalidInputError
from .teacher import EPSILON, SoftLabel, smooth_teacher

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistillConfig:
    tau: float = 2.0
    alpha: float = 2.5
    epsilon: float = EPSILON

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InvalidConfigError("tau must be > 0")
        if not self.alpha >= 0:
            raise InvalidConfigError("alpha must be >= 0")
        if not 0 < self.epsilon < 0.5:
            raise InvalidConfigError("epsilon must lie in (0, 0.5)")


@dataclass
class DetectExample:
    text: str
    label: int
    teacher: SoftLabel | None = None

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise InvalidDatasetError(f"label must be 0 or 1, got {self.label!r}", record=self.text)

    def to_dict(self) -> dict:
        d = {"text": self.text, "label": self.label}
        if self.teacher is not None:
            d["teacher"] = self.teacher.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectExample":
        teacher = d.get("teacher")
        try:
            return cls(str(d["text"]), int(d["label"]), SoftLabel.from_dict(teacher) if teacher else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDatasetError(f"bad detection record: {exc}", record=d) from exc


# ---------------------------------------------------------------------------
# Loss: scalar reference path (numpy) and analytic gradient
# ---------------------------------------------------------------------------


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    return z - m - math.log(np.exp(z - m).sum())


def cross_entropy(student_logits: Sequence[float], target: int) -> float:
    z = np.asarray(student_logits, dtype=np.float64)
    return float(-log_softmax(z)[target])


def _check(student_logits, target, teacher, cfg):
    z = np.asarray(student_logits, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidInputError("student logits must be a vector with K >= 2")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("student logits must be finite")
    if t.shape != z.shape:
        raise InvalidInputError("teacher and student must have the same number of classes")
    if abs(t.sum() - 1.0) > 1e-6 or np.any(t < 0):
        raise InvalidInputError(f"teacher distribution is not normalised (sum {t.sum()})")
    if not 0 <= target < z.size:
        raise InvalidInputError(f"target {target} out of range")
    t = np.clip(t, cfg.epsilon, 1.0 - cfg.epsilon)
    return z, t / t.sum()


@dataclass(frozen=True)
class DistillTerms:
    loss: float
    lce: float
    lkl: float
    weight: float
    soft_ce: float


def distillation_terms(
    student_logits: Sequence[float], target: int, teacher: Sequence[float], cfg: DistillConfig
) -> DistillTerms:
    z, t = _check(student_logits, target, teacher, cfg)
    tau = cfg.tau
    log_s = log_softmax(z)
    log_s_tau = log_softmax(z / tau)
    t_tau = smooth_teacher(t, tau, cfg.epsilon)
    lce = float(-log_s[target])
    weight = float(-math.expm1(-log_s[target] / math.log(t[target])))
    soft_ce = float(-(tau**2) * np.dot(t_tau, log_s_tau))
    lkl = weight * soft_ce
    return DistillTerms(lce + cfg.alpha * lkl, lce, lkl, weight, soft_ce)


def distillation_loss(
    student_logits: Sequence[float], target: int, teacher: Sequence[float], cfg: DistillConfig
) -> float:
    return distillation_terms(student_logits, target, teacher, cfg).loss


def distillation_loss_grad(
    student_logits: Sequence[float], target: int, teacher: Sequence[float], cfg: DistillConfig
) -> np.ndarray:
    """Analytic gradient of :func:`distillation_loss` w.r.t. the logits.

    With a = log s_i, b = log t_i, H the soft cross-entropy and w the weight:
    dCE = s - e_i; dw = -exp(-a/b)/b * (s - e_i); dH = tau * (s_tau - t_tau).
    """
    z, t = _check(student_logits, target, teacher, cfg)
    tau = cfg.tau
    log_s = log_softmax(z)
    s = np.exp(log_s)
    s_tau = np.exp(log_softmax(z / tau))
    t_tau = smooth_teacher(t, tau, cfg.epsilon)
    a, b = log_s[target], math.log(t[target])
    onehot = np.zeros_like(z)
    onehot[target] = 1.0
    d_ce = s - onehot
    weight = -math.expm1(-a / b)
    d_weight = -math.exp(-a / b) / b * d_ce
    soft_ce = -(tau**2) * np.dot(t_tau, np.log(s_tau))
    d_soft = tau * (s_tau - t_tau)
    return d_ce + cfg.alpha * (d_weight * soft_ce + weight * d_soft)


# ---------------------------------------------------------------------------
# Loss: batched torch path used for training
# ---------------------------------------------------------------------------


def smooth_teacher_torch(t: torch.Tensor, tau: float) -> torch.Tensor:
    return torch.softmax(torch.log(t) / tau, dim=-1)


def distillation_loss_torch(
    logits: torch.Tensor, targets: torch.Tensor, teacher: torch.Tensor, cfg: DistillConfig
) -> tuple[torch.Tensor, dict[str, float]]:
    """Mean distillation loss over a batch, plus logged components."""
    t = teacher.clamp(cfg.epsilon, 1.0 - cfg.epsilon)
    t = t / t.sum(dim=-1, keepdim=True)
    log_s = F.log_softmax(logits, dim=-1)
    log_s_i = log_s.gather(1, targets[:, None]).squeeze(1)
    lce = -log_s_i
    log_t_i = torch.log(t.gather(1, targets[:, None]).squeeze(1))
    weight = -torch.expm1(-log_s_i / log_t_i)
    t_tau = smooth_teacher_torch(t, cfg.tau)
    soft_ce = -(cfg.tau**2) * (t_tau * F.log_softmax(logits / cfg.tau, dim=-1)).sum(-1)
    lkl = weight * soft_ce
    loss = (lce + cfg.alpha * lkl).mean()
    parts = {
        "lce": float(lce.mean().detach()),
        "lkl": float(lkl.mean().detach()),
        "w_mean": float(weight.mean().detach()),
    }
    return loss, parts


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------


class DetectorModel:
    kind = "transformer"

    def __init__(self, classifier: SequenceClassifier, distill: DistillConfig, fingerprint: dict, log=None) -> None:
        self.classifier = classifier
        self.distill = distill
        self.fingerprint = fingerprint
        self.training_log = list(log or [])

    @property
    def train_config(self) -> TrainConfig:
        return self.classifier.cfg

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.classifier.predict_proba(list(texts))[:, 1]

    def save(self, directory: str | Path) -> Path:
        directory = save_classifier(
            self.classifier,
            directory,
            {"kind": self.kind, "task": "qdetect", "labels": [0, 1], "distill": asdict(self.distill)},
            self.fingerprint,
        )
        write_train_log(self.training_log, directory / TRAIN_LOG_FILE)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "DetectorModel":
        classifier, config = load_classifier(directory)
        fp_path = Path(directory) / "fingerprint.json"
        fingerprint = json.loads(fp_path.read_text()) if fp_path.exists() else {}
        return cls(classifier, DistillConfig(**config.get("distill", {})), fingerprint)


class RegexDetector:
    """Rule-based stand-in: a sentence is interrogative iff it matches
    ``pattern`` (default: ends with a question mark)."""

    kind = "regex"

    def __init__(self, pattern: str = r"\?\s*$") -> None:
        self.pattern = pattern
        self._re = re.compile(pattern)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return np.array([1.0 if self._re.search(t) else 0.0 for t in texts], dtype=np.float64)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        config = {"kind": self.kind, "task": "qdetect", "pattern": self.pattern}
        (directory / CONFIG_FILE).write_text(json.dumps(config, indent=2, sort_keys=True), encoding="utf-8")
        return directory


def load_detector(directory: str | Path) -> DetectorModel | RegexDetector:
    config = read_model_config(directory)
    if config.get("kind") == RegexDetector.kind:
        return RegexDetector(config.get("pattern", r"\?\s*$"))
    return DetectorModel.load(directory)


# ---------------------------------------------------------------------------
# Training, inference, evaluation
# ---------------------------------------------------------------------------


def _teacher_matrix(examples: Sequence[DetectExample]) -> torch.Tensor:
    rows = []
    for ex in examples:
        if ex.teacher is not None:
            rows.append(ex.teacher.as_vector())
        else:
            # only reached with alpha == 0, where the KL term is multiplied out
            rows.append([1.0 - ex.label, float(ex.label)])
    return torch.tensor(rows, dtype=torch.float32)


def _positive_f1(preds: Sequence[int], golds: Sequence[int]) -> float:
    return binary_metrics(preds, golds).extra["f1"]


def train_detector(
    train: Sequence[DetectExample],
    val: Sequence[DetectExample],
    dcfg: DistillConfig,
    tcfg: TrainConfig,
) -> DetectorModel:
    """Fine-tune a binary classifier under the distillation loss.

    The checkpoint with the best validation F1 (positive class) is kept.
    """
    if not train:
        raise InvalidDatasetError("training set is empty")
    if dcfg.alpha > 0:
        for ex in train:
            if ex.teacher is None:
                raise InvalidDatasetError("alpha > 0 requires a teacher soft label on every example", record=ex.text)
    texts = [ex.text for ex in train]
    targets = torch.tensor([ex.label for ex in train], dtype=torch.long)
    teacher = _teacher_matrix(train)

    def loss_fn(logits, idx):
        return distillation_loss_torch(logits, targets[idx], teacher[idx], dcfg)

    classifier = new_classifier(tcfg, 2, texts)
    result = fit(
        classifier,
        texts,
        loss_fn,
        tcfg,
        val_texts=[ex.text for ex in val],
        val_labels=[ex.label for ex in val],
        score_fn=_positive_f1,
    )
    fingerprint = {
        "dataset_hash": dataset_hash([ex.to_dict() for ex in train]),
        "val_hash": dataset_hash([ex.to_dict() for ex in val]),
        "seed": tcfg.seed,
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_score if result.val_scores else None,
    }
    return DetectorModel(classifier, dcfg, fingerprint, result.log)


def predict_interrogative(
    model: DetectorModel | RegexDetector, texts: Sequence[str], threshold: float = 0.5
) -> list[tuple[int, float]]:
    """Label each text; label is 1 iff p_interrogative >= threshold."""
    out: list[tuple[int, float] | None] = [None] * len(texts)
    live = [i for i, t in enumerate(texts) if t.strip()]
    for i, t in enumerate(texts):
        if not t.strip():
            logger.warning("empty text at position %d; labelled non-interrogative", i)
            out[i] = (0, 0.0)
    probs = model.predict_proba([texts[i] for i in live]) if live else []
    for i, p in zip(live, probs):
        p = float(min(max(p, 0.0), 1.0))
        out[i] = (int(p >= threshold), p)
    return out  # type: ignore[return-value]


def evaluate_detector(model: DetectorModel | RegexDetector, test: Sequence[DetectExample], threshold: float = 0.5) -> MetricsReport:
    if not test:
        raise InvalidInputError("test set is empty")
    preds = [label for label, _ in predict_interrogative(model, [ex.text for ex in test], threshold)]
    return binary_metrics(preds, [ex.label for ex in test])


def load_detect_dataset(path: str | Path) -> list[DetectExample]:
    from .corpus import read_jsonl

    return [DetectExample.from_dict(row) for row in read_jsonl(Path(path))]


def save_detect_dataset(examples: Sequence[DetectExample], path: str | Path) -> None:
    from .corpus import write_jsonl

    write_jsonl(Path(path), (ex.to_dict() for ex in examples))
