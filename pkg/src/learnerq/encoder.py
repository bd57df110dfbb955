"""Text encoders, the classification head, and the shared training loop.

Two encoder back-ends sit behind one interface:

* a pretrained Hugging Face encoder (``encoder_checkpoint`` is a hub id or
  a local directory), pooled at the first token;
* ``"scratch"``: a small word-level transformer trained from random
  initialisation, mean-pooled.  It needs no downloads and is what the test
  suite uses.

Both feed the same head: two dense layers with dropout and ReLU.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import InvalidConfigError, MissingModelError

logger = logging.getLogger(__name__)

SCRATCH = "scratch"
WEIGHTS_FILE = "weights.pt"
CONFIG_FILE = "config.json"
FINGERPRINT_FILE = "fingerprint.json"
TRAIN_LOG_FILE = "train_log.csv"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 16
    max_sequence_length: int = 128
    dropout: float = 0.2
    epochs: int = 10
    seed: int = 0
    encoder_checkpoint: str = "roberta-base"
    patience: int = 3
    head_hidden: int = 256
    # only used by the scratch encoder
    encoder_dim: int = 128
    encoder_layers: int = 2
    encoder_heads: int = 4
    max_vocab: int = 30000

    def __post_init__(self) -> None:
        positive = ("learning_rate", "batch_size", "max_sequence_length", "epochs", "head_hidden")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfigError("dropout must lie in [0, 1)")
        if self.patience < 1:
            raise InvalidConfigError("patience must be >= 1")
        if self.encoder_dim % self.encoder_heads:
            raise InvalidConfigError("encoder_dim must be divisible by encoder_heads")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class WordTokenizer:
    PAD, UNK, CLS = 0, 1, 2
    SPECIALS = ("[PAD]", "[UNK]", "[CLS]")

    def __init__(self, vocab: dict[str, int]) -> None:
        self.vocab = vocab

    @staticmethod
    def split(text: str) -> list[str]:
        return _WORD_RE.findall(text.lower())

    @classmethod
    def build(cls, texts: Sequence[str], max_vocab: int) -> "WordTokenizer":
        counts = Counter(tok for t in texts for tok in cls.split(t))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max(0, max_vocab - len(cls.SPECIALS))]
        vocab = {tok: i for i, tok in enumerate(cls.SPECIALS)}
        for tok, _ in ranked:
            vocab[tok] = len(vocab)
        return cls(vocab)

    def encode(self, texts: Sequence[str], max_len: int) -> dict[str, torch.Tensor]:
        rows = [[self.CLS] + [self.vocab.get(t, self.UNK) for t in self.split(x)][: max_len - 1] for x in texts]
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), self.PAD, dtype=torch.long)
        for i, r in enumerate(rows):
            ids[i, : len(r)] = torch.tensor(r, dtype=torch.long)
        return {"input_ids": ids, "attention_mask": ids != self.PAD}


class ScratchEncoder(nn.Module):
    kind = SCRATCH

    def __init__(self, tokenizer: WordTokenizer, cfg: TrainConfig) -> None:
        super().__init__()
        self.tokenizer = tokenizer
        self.max_len = cfg.max_sequence_length
        d = cfg.encoder_dim
        self.hidden_size = d
        self.embed = nn.Embedding(len(tokenizer.vocab), d, padding_idx=WordTokenizer.PAD)
        self.pos = nn.Embedding(cfg.max_sequence_length, d)
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=cfg.encoder_heads,
            dim_feedforward=2 * d,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, num_layers=cfg.encoder_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(d)

    def tokenize(self, texts: Sequence[str]) -> dict[str, torch.Tensor]:
        return self.tokenizer.encode(texts, self.max_len)

    def forward(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        ids, mask = batch["input_ids"], batch["attention_mask"]
        positions = torch.arange(ids.shape[1]).unsqueeze(0)
        h = self.embed(ids) + self.pos(positions)
        h = self.norm(self.layers(h, src_key_padding_mask=~mask))
        m = mask.unsqueeze(-1).to(h.dtype)
        return (h * m).sum(1) / m.sum(1).clamp(min=1.0)

    def save(self, directory: Path) -> None:
        (directory / "vocab.json").write_text(json.dumps(self.tokenizer.vocab, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, directory: Path, cfg: TrainConfig) -> "ScratchEncoder":
        vocab = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
        return cls(WordTokenizer(vocab), cfg)


class HFEncoder(nn.Module):
    kind = "huggingface"

    def __init__(self, model, tokenizer, max_len: int) -> None:
        super().__init__()
        self.model = model
        self.tokenizer = tokenizer
        self.max_len = max_len
        self.hidden_size = model.config.hidden_size

    @classmethod
    def from_pretrained(cls, checkpoint: str, cfg: TrainConfig) -> "HFEncoder":
        from transformers import AutoModel, AutoTokenizer

        try:
            tokenizer = AutoTokenizer.from_pretrained(checkpoint)
            model = AutoModel.from_pretrained(checkpoint)
        except OSError as exc:
            raise MissingModelError(f"cannot load encoder checkpoint {checkpoint!r}: {exc}") from exc
        return cls(model, tokenizer, cfg.max_sequence_length)

    def tokenize(self, texts: Sequence[str]) -> dict[str, torch.Tensor]:
        enc = self.tokenizer(
            list(texts), padding=True, truncation=True, max_length=self.max_len, return_tensors="pt"
        )
        return dict(enc)

    def forward(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        return self.model(**batch).last_hidden_state[:, 0]

    def save(self, directory: Path) -> None:
        target = directory / "encoder"
        self.tokenizer.save_pretrained(target)
        self.model.config.save_pretrained(target)

    @classmethod
    def load(cls, directory: Path, cfg: TrainConfig) -> "HFEncoder":
        from transformers import AutoConfig, AutoModel, AutoTokenizer

        target = directory / "encoder"
        tokenizer = AutoTokenizer.from_pretrained(target)
        model = AutoModel.from_config(AutoConfig.from_pretrained(target))
        return cls(model, tokenizer, cfg.max_sequence_length)


def build_encoder(cfg: TrainConfig, train_texts: Sequence[str]) -> nn.Module:
    if cfg.encoder_checkpoint == SCRATCH:
        return ScratchEncoder(WordTokenizer.build(train_texts, cfg.max_vocab), cfg)
    return HFEncoder.from_pretrained(cfg.encoder_checkpoint, cfg)


class SequenceClassifier(nn.Module):
    """Encoder followed by two dense layers (dropout, ReLU) and class logits."""

    def __init__(self, encoder: nn.Module, n_classes: int, cfg: TrainConfig) -> None:
        super().__init__()
        self.encoder = encoder
        self.head = nn.Sequential(
            nn.Dropout(cfg.dropout),
            nn.Linear(encoder.hidden_size, cfg.head_hidden),
            nn.ReLU(),
            nn.Dropout(cfg.dropout),
            nn.Linear(cfg.head_hidden, n_classes),
        )
        self.n_classes = n_classes
        self.cfg = cfg

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        return self.head(self.encoder(self.encoder.tokenize(texts)))

    @torch.no_grad()
    def predict_proba(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        """Softmax probabilities as float64 rows that sum to 1."""
        self.eval()
        if not texts:
            return np.zeros((0, self.n_classes))
        chunks = []
        for i in range(0, len(texts), batch_size):
            logits = self(texts[i : i + batch_size]).double()
            chunks.append(torch.softmax(logits, dim=-1).numpy())
        probs = np.concatenate(chunks)
        return probs / probs.sum(axis=1, keepdims=True)


def new_classifier(cfg: TrainConfig, n_classes: int, train_texts: Sequence[str]) -> SequenceClassifier:
    torch.manual_seed(cfg.seed)
    return SequenceClassifier(build_encoder(cfg, train_texts), n_classes, cfg)


def save_classifier(model: SequenceClassifier, directory: str | Path, meta: dict, fingerprint: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / WEIGHTS_FILE)
    model.encoder.save(directory)
    config = {
        **meta,
        "encoder_kind": model.encoder.kind,
        "n_classes": model.n_classes,
        "train_config": asdict(model.cfg),
    }
    (directory / CONFIG_FILE).write_text(json.dumps(config, indent=2, sort_keys=True), encoding="utf-8")
    (directory / FINGERPRINT_FILE).write_text(json.dumps(fingerprint, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def read_model_config(directory: str | Path) -> dict:
    path = Path(directory) / CONFIG_FILE
    if not path.exists():
        raise MissingModelError(f"no model found at {directory}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_classifier(directory: str | Path) -> tuple[SequenceClassifier, dict]:
    directory = Path(directory)
    config = read_model_config(directory)
    cfg = TrainConfig.from_dict(config["train_config"])
    if config["encoder_kind"] == SCRATCH:
        encoder = ScratchEncoder.load(directory, cfg)
    else:
        encoder = HFEncoder.load(directory, cfg)
    model = SequenceClassifier(encoder, config["n_classes"], cfg)
    model.load_state_dict(torch.load(directory / WEIGHTS_FILE, map_location="cpu", weights_only=True))
    model.eval()
    return model, config


def dataset_hash(rows: Sequence) -> str:
    h = hashlib.sha256()
    for row in rows:
        h.update(json.dumps(row, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

LossFn = Callable[[torch.Tensor, Sequence[int]], "tuple[torch.Tensor, dict[str, float]]"]
ScoreFn = Callable[[Sequence[int], Sequence[int]], float]

LOG_FIELDS = ["step", "epoch", "loss", "lce", "lkl", "w_mean"]


@dataclass
class FitResult:
    log: list[dict] = field(default_factory=list)
    val_scores: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = -math.inf


def fit(
    model: SequenceClassifier,
    train_texts: Sequence[str],
    loss_fn: LossFn,
    cfg: TrainConfig,
    val_texts: Sequence[str] = (),
    val_labels: Sequence[int] = (),
    score_fn: ScoreFn | None = None,
) -> FitResult:
    """Mini-batch Adam training with best-validation checkpoint selection.

    ``loss_fn(logits, indices)`` receives the logits for a batch and the
    positions of its examples in ``train_texts``.  With no validation set
    the final weights are kept.  Early stopping after ``cfg.patience``
    epochs without improvement.
    """
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    order = list(range(len(train_texts)))
    result = FitResult()
    best_state = None
    stale = 0
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = model([train_texts[i] for i in idx])
            loss, parts = loss_fn(logits, idx)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            result.log.append({"step": step, "epoch": epoch + 1, "loss": float(loss.detach()), **parts})
        if not val_texts or score_fn is None:
            continue
        preds = model.predict_proba(list(val_texts)).argmax(axis=1).tolist()
        score = score_fn(preds, list(val_labels))
        result.val_scores.append(score)
        logger.info("epoch %d: validation score %.4f", epoch + 1, score)
        if score > result.best_score:
            result.best_score, result.best_epoch = score, epoch + 1
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stopping after epoch %d", epoch + 1)
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def write_train_log(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in LOG_FIELDS})
