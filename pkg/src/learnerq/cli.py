"""Command-line entry point.

Each command reads a declarative config (YAML or JSON), applies
command-line overrides, writes its outputs to one directory under the
output root, and leaves a ``manifest.json`` there.

Exit codes: 0 success, 1 other error, 2 credentials, 3 missing model,
4 invalid dataset, 5 missing labels.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .config import MODEL_NAMES, PipelineConfig, RunManifest
from .corpus import (
    STATS_FILE,
    Corpus,
    Provenance,
    corpus_stats,
    make_question_records,
    prepare_comments,
    segment_sentences,
    write_stats_csv,
)
from .errors import (
    CredentialError,
    InvalidDatasetError,
    InvalidInputError,
    LearnerQError,
    MissingLabelsError,
    MissingModelError,
    NotFoundError,
    RateLimitError,
)
from .taxonomy import BTLevel

logger = logging.getLogger("learnerq")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CREDENTIALS = 2
EXIT_MISSING_MODEL = 3
EXIT_INVALID_DATASET = 4
EXIT_MISSING_LABELS = 5

HARVEST_DIR = "harvest"
CORPUS_DIR = "corpus"
EXTRACTED_DIR = "extracted"
MODELS_DIR = "models"
CLASSIFIED_DIR = "classified"
ANALYSIS_DIR = "analysis"
REPORT_DIR = "report"
CONFIDENCE_FILE = "confidence.jsonl"
REPORT_FILE = "bt_report.csv"
CONFUSION_FILE = "confusion.csv"


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _out(cfg: PipelineConfig, name: str) -> Path:
    return cfg.output_dir / name


def _in_dir(args, cfg: PipelineConfig, default: str) -> Path:
    return Path(args.input) if getattr(args, "input", None) else _out(cfg, default)


def _load_corpus(path: Path) -> Corpus:
    if not path.is_dir():
        raise InvalidDatasetError(f"corpus directory {path} does not exist")
    return Corpus.load(path)


def _load_dataset(path: str | Path | None, loader: Callable, what: str) -> list:
    if path is None:
        raise InvalidDatasetError(f"no {what} dataset configured")
    path = Path(path)
    if not path.exists():
        raise InvalidDatasetError(f"{what} dataset {path} does not exist")
    try:
        return loader(path)
    except InvalidDatasetError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDatasetError(f"{path}: {exc}") from exc


def _write_confidence(scores, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scores:
            row = {
                "question_id": s.question_id,
                "max_class_prob": s.max_class_prob,
                "predicted": s.predicted.value,
                "text": s.text,
            }
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _read_confidence(path: Path):
    from .btclass import ConfidenceScore

    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(
                    ConfidenceScore(d["question_id"], float(d["max_class_prob"]), BTLevel.parse(d["predicted"]), d["text"])
                )
    return out


def _teacher(cfg: PipelineConfig):
    import os

    from .teacher import OpenAIChatBackend, ReplayCache, Teacher

    backend = OpenAIChatBackend() if os.environ.get("LLM_API_KEY") else None
    cache = ReplayCache(cfg.paths.teacher_cache_dir, backend, cfg.bt.teacher_mode)
    return Teacher(cache, model=cfg.bt.teacher_model, seed=cfg.seed)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_harvest(args, cfg: PipelineConfig) -> int:
    from .harvester import HarvestCache, Harvester, HarvestSpec

    h = cfg.harvest
    out = _out(cfg, HARVEST_DIR)
    manifest = RunManifest.start("harvest", cfg, [])
    harvester = Harvester(
        HarvestCache(cfg.paths.cache_dir), concurrency=h.concurrency, requests_per_second=h.requests_per_second
    )
    if h.video_ids:
        corpus = harvester.harvest_ids(h.video_ids[: h.max_videos], h.subject, h.comment_cap)
    elif h.sources:
        corpus = harvester.harvest(HarvestSpec(h.sources, h.subject, h.max_videos, h.comment_cap))
    else:
        raise InvalidDatasetError("nothing to harvest: set harvest.sources or harvest.video_ids")
    corpus.save(out)
    logger.info("harvested %d videos, %d comments (%d requests)", len(corpus.videos), len(corpus.comments), harvester.network_calls)
    manifest.finish(out)
    return EXIT_OK


def cmd_build_corpus(args, cfg: PipelineConfig) -> int:
    src = _in_dir(args, cfg, HARVEST_DIR)
    out = _out(cfg, CORPUS_DIR)
    manifest = RunManifest.start("build-corpus", cfg, [src])
    corpus = prepare_comments(_load_corpus(src), cfg.filter)
    corpus.save(out)
    write_stats_csv(corpus_stats(corpus), out / STATS_FILE)
    logger.info("corpus: %d videos, %d comments kept", len(corpus.videos), len(corpus.comments))
    manifest.finish(out)
    return EXIT_OK


def extract_questions(corpus: Corpus, detector, cfg: PipelineConfig) -> Corpus:
    """Clean, cap and filter comments, then detect and filter questions."""
    from .qdetect import predict_interrogative

    prepared = prepare_comments(corpus, cfg.filter)
    videos = prepared.video_index()
    sentences, provenance = [], []
    for c in prepared.comments:
        for i, s in enumerate(segment_sentences(c.clean_text)):
            sentences.append(s)
            provenance.append(Provenance(c.comment_id, c.video_id, videos[c.video_id].subject, i))
    scored = predict_interrogative(detector, sentences, cfg.detection_threshold) if sentences else []
    rows = [(s, p, prov) for s, (_label, p), prov in zip(sentences, scored, provenance)]
    questions = make_question_records(rows, cfg.filter, cfg.detection_threshold)
    return Corpus(prepared.videos, prepared.comments, questions)


def cmd_extract_questions(args, cfg: PipelineConfig) -> int:
    from .qdetect import load_detector

    src = _in_dir(args, cfg, HARVEST_DIR)
    model_dir = Path(args.model) if args.model else _out(cfg, MODELS_DIR) / "qdetect"
    out = _out(cfg, EXTRACTED_DIR)
    detector = load_detector(model_dir)  # MissingModelError -> exit 3
    manifest = RunManifest.start("extract-questions", cfg, [src, model_dir])
    corpus = _load_corpus(src)
    if not corpus.comments:
        logger.warning("corpus at %s has no comments; writing empty outputs", src)
    result = extract_questions(corpus, detector, cfg)
    result.save(out)
    write_stats_csv(corpus_stats(result), out / STATS_FILE)
    logger.info("extracted %d questions from %d comments", len(result.questions), len(result.comments))
    manifest.finish(out)
    return EXIT_OK


def _train_qdetect(args, cfg: PipelineConfig, out: Path) -> list[Path]:
    from .qdetect import (
        DetectExample,
        RegexDetector,
        evaluate_detector,
        load_detect_dataset,
        train_detector,
    )

    if args.regex:
        RegexDetector().save(out)
        return []
    d = cfg.data
    train = _load_dataset(d.qdetect_train, load_detect_dataset, "detector training")
    inputs = [Path(d.qdetect_train)]
    if d.qdetect_val:
        val = _load_dataset(d.qdetect_val, load_detect_dataset, "detector validation")
        inputs.append(Path(d.qdetect_val))
    else:
        cut = max(1, len(train) // 10)
        train, val = train[cut:], train[:cut]
    if cfg.distill.alpha > 0 and args.label_with_teacher:
        missing = [i for i, ex in enumerate(train) if ex.teacher is None]
        if missing:
            labels = _teacher(cfg).soft_label_many([train[i].text for i in missing])
            for i, sl in zip(missing, labels):
                train[i] = DetectExample(train[i].text, train[i].label, sl)
    model = train_detector(train, val, cfg.distill, cfg.train_config("qdetect"))
    model.save(out)
    if d.qdetect_test:
        test = _load_dataset(d.qdetect_test, load_detect_dataset, "detector test")
        inputs.append(Path(d.qdetect_test))
        report = evaluate_detector(model, test, cfg.detection_threshold)
        report.write_csv(out / "qdetect_report.csv")
        report.write_confusion_csv(out / CONFUSION_FILE)
    return inputs


def _train_bt_stage1(args, cfg: PipelineConfig, out: Path) -> list[Path]:
    from .btclass import (
        evaluate_bt,
        load_bt_dataset,
        save_bt_dataset,
        score_confidence,
        split_dataset,
        train_bt,
    )

    bt = cfg.bt
    tcfg = cfg.train_config("bt-stage1")
    dataset = _load_dataset(cfg.data.dasqbt, load_bt_dataset, "DASQBT")
    bad = next((ex for ex in dataset if not ex.label.is_bloom), None)
    if bad is not None:
        raise InvalidDatasetError("stage-1 data must use the six Bloom levels", record=bad.to_dict())
    inputs = [Path(cfg.data.dasqbt)]
    trainval, test = split_dataset(dataset, bt.train_fraction, tcfg.seed)
    train, val = split_dataset(trainval, 1.0 - bt.val_fraction, tcfg.seed)
    model = train_bt(train, val, tcfg, 6)
    model.save(out)
    for name, rows in (("train.jsonl", train), ("val.jsonl", val), ("test.jsonl", test)):
        save_bt_dataset(rows, out / name)
    report = evaluate_bt(model, test)
    report.write_csv(out / REPORT_FILE)
    report.write_confusion_csv(out / CONFUSION_FILE)
    logger.info("stage-1 test metrics\n%s", report.format())

    questions_dir = Path(args.questions) if args.questions else _out(cfg, EXTRACTED_DIR)
    if (questions_dir / "questions.jsonl").exists():
        questions = Corpus.load(questions_dir).questions
        _write_confidence(score_confidence(model, questions), out / CONFIDENCE_FILE)
        inputs.append(questions_dir / "questions.jsonl")
    else:
        logger.warning("no extracted questions at %s; confidence scores not written", questions_dir)
    return inputs


def _train_bt_stage2(args, cfg: PipelineConfig, out: Path) -> list[Path]:
    from .btclass import (
        augment_dataset,
        evaluate_bt,
        load_bt_dataset,
        mine_irrelevant,
        save_bt_dataset,
        split_dataset,
        train_stage2,
    )

    bt = cfg.bt
    tcfg = cfg.train_config("bt-stage2")
    stage1 = Path(args.stage1) if args.stage1 else _out(cfg, MODELS_DIR) / "bt-stage1"
    if not (stage1 / "config.json").exists():
        raise MissingModelError(f"no stage-1 model at {stage1}")
    scores_path = stage1 / CONFIDENCE_FILE
    if bt.k_irrelevant and not scores_path.exists():
        raise InvalidDatasetError(f"stage-1 confidence scores missing at {scores_path}")
    train = load_bt_dataset(stage1 / "train.jsonl")
    val = load_bt_dataset(stage1 / "val.jsonl")
    test1 = load_bt_dataset(stage1 / "test.jsonl")
    inputs = [stage1]

    augmented = []
    if cfg.data.augmented:
        augmented = _load_dataset(cfg.data.augmented, load_bt_dataset, "augmented")
        inputs.append(Path(cfg.data.augmented))
    elif bt.augment_target:
        base = train + val + test1
        augmented = augment_dataset(base, _teacher(cfg), bt.augment_target, cfg.seed)[len(base):]
    if augmented:
        save_bt_dataset(augmented, out / "augmented.jsonl")

    mined = []
    if bt.k_irrelevant:
        try:
            mined = mine_irrelevant(_read_confidence(scores_path), bt.k_irrelevant)
        except InvalidInputError as exc:
            raise InvalidDatasetError(str(exc)) from exc
    irr_train, irr_test = split_dataset(mined, bt.train_fraction, tcfg.seed) if mined else ([], [])
    model = train_stage2(train, val, augmented, irr_train, tcfg, bt.val_fraction)
    model.save(out)
    test2 = test1 + irr_test
    save_bt_dataset(test2, out / "test.jsonl")
    save_bt_dataset(mined, out / "mined_irrelevant.jsonl")
    report = evaluate_bt(model, test2)
    report.write_csv(out / REPORT_FILE)
    report.write_confusion_csv(out / CONFUSION_FILE)
    logger.info("stage-2 test metrics\n%s", report.format())
    return inputs


_TRAINERS = {"qdetect": _train_qdetect, "bt-stage1": _train_bt_stage1, "bt-stage2": _train_bt_stage2}


def cmd_train(args, cfg: PipelineConfig) -> int:
    out = _out(cfg, MODELS_DIR) / args.model
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    manifest = RunManifest.start(f"train {args.model}", cfg, [])
    inputs = _TRAINERS[args.model](args, cfg, out)
    manifest.inputs = RunManifest.start("", cfg, inputs).inputs
    manifest.finish(out)
    return EXIT_OK


def cmd_classify(args, cfg: PipelineConfig) -> int:
    from .btclass import BTModel, apply_labels, classify_bt

    src = _in_dir(args, cfg, EXTRACTED_DIR)
    model_dir = Path(args.model) if args.model else _out(cfg, MODELS_DIR) / "bt-stage2"
    out = _out(cfg, CLASSIFIED_DIR)
    model = BTModel.load(model_dir)
    manifest = RunManifest.start("classify", cfg, [src, model_dir])
    corpus = _load_corpus(src)
    labelled = apply_labels(corpus.questions, classify_bt(model, corpus.questions)) if corpus.questions else []
    Corpus(corpus.videos, corpus.comments, labelled).save(out)
    logger.info("classified %d questions with %s", len(labelled), model_dir)
    manifest.finish(out)
    return EXIT_OK


def cmd_analyze(args, cfg: PipelineConfig) -> int:
    from .analysis import engagement as eng
    from .analysis import figures
    from .analysis import pmi

    a = cfg.analysis
    src = _in_dir(args, cfg, CLASSIFIED_DIR)
    out = _out(cfg, ANALYSIS_DIR)
    corpus = _load_corpus(src)
    unlabelled = [q.question_id for q in corpus.questions if q.bt_label is None]
    if unlabelled:
        raise MissingLabelsError(f"{len(unlabelled)} questions have no BT label (e.g. {unlabelled[0]}); run classify first")
    eval_dir = Path(args.eval_dir) if args.eval_dir else _out(cfg, MODELS_DIR) / "bt-stage2"
    inputs = [src] + ([eval_dir / CONFUSION_FILE] if (eval_dir / CONFUSION_FILE).exists() else [])
    manifest = RunManifest.start("analyze", cfg, inputs)
    out.mkdir(parents=True, exist_ok=True)

    questions = corpus.questions
    if not a.include_irrelevant:
        questions = [q for q in questions if q.bt_label is not BTLevel.IRRELEVANT]
    occurrences = pmi.verb_occurrences(questions, presence=a.presence)
    entries = pmi.pmi_table(occurrences, a.min_freq) if occurrences else []
    pmi.write_pmi_csv(entries, out / pmi.PMI_FILE)
    with open(out / "top_verbs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "rank", "lemma"])
        for level, lemmas in pmi.top_verbs(entries, a.top_n).items():
            for rank, lemma in enumerate(lemmas, start=1):
                w.writerow([level.value, rank, lemma])

    dist = eng.bt_distribution(corpus.questions, a.include_irrelevant)
    eng.write_distribution_csv(dist, out / eng.DISTRIBUTION_FILE)
    rates = eng.engagement_rates(corpus.questions, corpus.comments, corpus.videos, a.aggregate, a.include_irrelevant)
    eng.write_engagement_csv(rates, out / eng.ENGAGEMENT_FILE)

    figures.plot_distribution(dist, out / "fig_distribution.png")
    figures.plot_engagement(rates, out / "fig_engagement.png")
    if (eval_dir / CONFUSION_FILE).exists():
        classes, matrix = _read_confusion(eval_dir / CONFUSION_FILE)
        figures.plot_confusion(classes, matrix, out / "fig_confusion.png")
    human = cfg.data.human_annotations
    if human:
        _human_report(corpus, Path(human), out)
    manifest.finish(out)
    return EXIT_OK


def _read_confusion(path: Path) -> tuple[list[str], list[list[int]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0][1:], [[int(x) for x in r[1:]] for r in rows[1:]]


def _human_report(corpus: Corpus, path: Path, out: Path) -> None:
    from .btclass import evaluate_human, load_human_annotations

    samples = _load_dataset(path, load_human_annotations, "human annotation")
    predictions = {q.question_id: q.bt_label for q in corpus.questions}
    result = evaluate_human(predictions, samples)
    result.report.write_csv(out / "human_report.csv")
    result.report.write_confusion_csv(out / "human_confusion.csv")
    logger.info("human evaluation: %d gold labels, %d three-way ties excluded", result.n_gold, result.n_ties)


def cmd_report(args, cfg: PipelineConfig) -> int:
    src = _in_dir(args, cfg, ANALYSIS_DIR)
    out = _out(cfg, REPORT_DIR)
    if not src.is_dir():
        raise InvalidDatasetError(f"no analysis outputs at {src}; run analyze first")
    manifest = RunManifest.start("report", cfg, [src])
    out.mkdir(parents=True, exist_ok=True)
    rel = Path("..") / src.name if src.parent == out.parent else src.resolve()
    lines = ["# Learner question analysis", "", f"Config hash: `{cfg.digest()}`", ""]
    try:
        lines.append(f"Analysis run: `{RunManifest.read(src).config_hash}`")
        lines.append("")
    except FileNotFoundError:
        pass

    def table(path: Path, title: str) -> None:
        lines.extend([f"## {title}", "", f"Source: [{path.name}]({rel / path.name})", ""])
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            return
        lines.append("| " + " | ".join(rows[0]) + " |")
        lines.append("|" + "---|" * len(rows[0]))
        for r in rows[1:]:
            lines.append("| " + " | ".join(r) + " |")
        lines.append("")

    for name, title in (
        ("bt_distribution.csv", "Level distribution by subject"),
        ("engagement.csv", "Engagement by level"),
        ("top_verbs.csv", "Top verbs by level"),
        ("human_report.csv", "Agreement with human labels"),
    ):
        if (src / name).exists():
            table(src / name, title)
    figs = sorted(p.name for p in src.glob("fig_*.png"))
    if figs:
        lines.extend(["## Figures", ""])
        lines.extend(f"![{f}]({rel / f})" for f in figs)
        lines.append("")
    if (src / "pmi_verbs.csv").exists():
        lines.append(f"Full PMI table: [pmi_verbs.csv]({rel / 'pmi_verbs.csv'})")
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.finish(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    d = PipelineConfig()
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="YAML or JSON pipeline config (default: built-in defaults)")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=f"seed for every stochastic step (default: {d.seed})")
    g.add_argument("--output-dir", default=argparse.SUPPRESS, help=f"output root (default: {d.paths.output_dir})")
    g.add_argument("--cache-dir", default=argparse.SUPPRESS, help=f"harvest cache directory (default: {d.paths.cache_dir})")
    g.add_argument("--log-level", default=argparse.SUPPRESS, help="logging level (default: INFO)")

    parser = argparse.ArgumentParser(prog="learnerq", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", parents=[common], help="fetch videos, captions and comments")
    p.add_argument("--max-videos", type=int, help=f"videos per run (default: {d.harvest.max_videos})")
    p.add_argument("--comment-cap", type=int, help=f"comments kept per video (default: {d.harvest.comment_cap})")
    p.add_argument("--subject", help=f"subject tag for harvested videos (default: {d.harvest.subject})")
    p.add_argument("--source", action="append", dest="sources", help="playlist or channel id (repeatable)")
    p.add_argument("--video-id", action="append", dest="video_ids", help="explicit video id (repeatable)")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("build-corpus", parents=[common], help="clean, cap and filter harvested comments")
    p.add_argument("--input", help=f"harvested corpus directory (default: <output-dir>/{HARVEST_DIR})")
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("extract-questions", parents=[common], help="detect and filter questions in comments")
    p.add_argument("--input", help=f"corpus directory (default: <output-dir>/{HARVEST_DIR})")
    p.add_argument("--model", help=f"detector model directory (default: <output-dir>/{MODELS_DIR}/qdetect)")
    p.add_argument("--threshold", type=float, help=f"detection threshold (default: {d.detection_threshold})")
    p.set_defaults(func=cmd_extract_questions)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("model", choices=MODEL_NAMES)
    p.add_argument("--epochs", type=int, help=f"training epochs (default: {d.train['qdetect'].epochs})")
    p.add_argument("--encoder", help=f"encoder checkpoint or 'scratch' (default: {d.train['qdetect'].encoder_checkpoint})")
    p.add_argument("--learning-rate", type=float, help=f"learning rate (default: {d.train['qdetect'].learning_rate})")
    p.add_argument("--tau", type=float, help=f"distillation temperature (default: {d.distill.tau})")
    p.add_argument("--alpha", type=float, help=f"soft-loss weight (default: {d.distill.alpha})")
    p.add_argument("--k", type=int, dest="k_irrelevant", help=f"mined Irrelevant examples (default: {d.bt.k_irrelevant})")
    p.add_argument("--augment-target", type=int, help=f"total size after augmentation, 0 = none (default: {d.bt.augment_target})")
    p.add_argument("--questions", help=f"extracted corpus scored by stage 1 (default: <output-dir>/{EXTRACTED_DIR})")
    p.add_argument("--stage1", help=f"stage-1 model directory (default: <output-dir>/{MODELS_DIR}/bt-stage1)")
    p.add_argument("--regex", action="store_true", help="qdetect only: save the rule-based '?' detector instead of training")
    p.add_argument("--label-with-teacher", action="store_true", help="qdetect only: fill missing soft labels via the LLM teacher")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="assign Bloom levels to extracted questions")
    p.add_argument("--input", help=f"extracted corpus directory (default: <output-dir>/{EXTRACTED_DIR})")
    p.add_argument("--model", help=f"Bloom model directory (default: <output-dir>/{MODELS_DIR}/bt-stage2)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("analyze", parents=[common], help="distribution, engagement, PMI tables and figures")
    p.add_argument("--input", help=f"classified corpus directory (default: <output-dir>/{CLASSIFIED_DIR})")
    p.add_argument("--eval-dir", help=f"model directory holding confusion.csv (default: <output-dir>/{MODELS_DIR}/bt-stage2)")
    p.add_argument("--include-irrelevant", action="store_true", default=None, help=f"keep the Irrelevant class (default: {d.analysis.include_irrelevant})")
    p.add_argument("--min-freq", type=int, help=f"minimum verb frequency for PMI (default: {d.analysis.min_freq})")
    p.add_argument("--top-n", type=int, help=f"verbs listed per level (default: {d.analysis.top_n})")
    p.add_argument("--aggregate", choices=("mean", "median"), help=f"engagement aggregate (default: {d.analysis.aggregate})")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", parents=[common], help="write a markdown summary of the analysis")
    p.add_argument("--input", help=f"analysis directory (default: <output-dir>/{ANALYSIS_DIR})")
    p.set_defaults(func=cmd_report)
    return parser


def resolve_config(args) -> PipelineConfig:
    """Config file first, then command-line overrides."""
    cfg = PipelineConfig.load(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output_dir", None):
        cfg.paths = replace(cfg.paths, output_dir=args.output_dir)
    if getattr(args, "cache_dir", None):
        cfg.paths = replace(cfg.paths, cache_dir=args.cache_dir)

    def pick(section, **names):
        given = {k: v for k, v in names.items() if v is not None}
        return replace(section, **given) if given else section

    cfg.harvest = pick(
        cfg.harvest,
        max_videos=getattr(args, "max_videos", None),
        comment_cap=getattr(args, "comment_cap", None),
        subject=getattr(args, "subject", None),
        sources=getattr(args, "sources", None),
        video_ids=getattr(args, "video_ids", None),
    )
    if getattr(args, "threshold", None) is not None:
        cfg.detection_threshold = args.threshold
    if getattr(args, "command", None) == "train":
        tc = pick(
            cfg.train[args.model],
            epochs=args.epochs,
            encoder_checkpoint=args.encoder,
            learning_rate=args.learning_rate,
        )
        cfg.train = {**cfg.train, args.model: tc}
        cfg.distill = pick(cfg.distill, tau=args.tau, alpha=args.alpha)
        cfg.bt = pick(cfg.bt, k_irrelevant=args.k_irrelevant, augment_target=args.augment_target)
    cfg.analysis = pick(
        cfg.analysis,
        include_irrelevant=getattr(args, "include_irrelevant", None),
        min_freq=getattr(args, "min_freq", None),
        top_n=getattr(args, "top_n", None),
        aggregate=getattr(args, "aggregate", None),
    )
    return cfg


_EXIT_CODES: list[tuple[type[BaseException], int]] = [
    (CredentialError, EXIT_CREDENTIALS),
    (MissingModelError, EXIT_MISSING_MODEL),
    (InvalidDatasetError, EXIT_INVALID_DATASET),
    (MissingLabelsError, EXIT_MISSING_LABELS),
]


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(args, "log_level", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except LearnerQError as exc:
        code = next((c for t, c in _EXIT_CODES if isinstance(exc, t)), EXIT_ERROR)
        record = getattr(exc, "record", None)
        msg = f"error: {exc}" + (f"\noffending record: {json.dumps(record, default=str)[:500]}" if record is not None else "")
        print(msg, file=sys.stderr)
        if isinstance(exc, (RateLimitError, NotFoundError)):
            logger.debug("external service error", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
