from __future__ import annotations

import random
from collections import Counter

import numpy as np
import pytest

from helpers import FakeChat, keyword_bt_set, question_records, tiny_config
from learnerq.btclass import (
    BTExample,
    ConfidenceScore,
    HumanSample,
    apply_labels,
    augment_dataset,
    classify_bt,
    evaluate_bt,
    evaluate_human,
    load_bt_dataset,
    load_human_annotations,
    mine_irrelevant,
    run_two_stage,
    save_bt_dataset,
    score_confidence,
    split_dataset,
    train_bt,
)
from learnerq.errors import InvalidDatasetError, InvalidInputError
from learnerq.taxonomy import ALL_LEVELS, BLOOM_LEVELS, BTLevel
from learnerq.teacher import ReplayCache, Teacher

BT_CFG = dict(batch_size=8, learning_rate=3e-3, epochs=5)


# -- records -----------------------------------------------------------------------


def test_origin_rules():
    with pytest.raises(InvalidDatasetError):
        BTExample("x", "Irrelevant", "augmented")
    with pytest.raises(InvalidDatasetError):
        BTExample("x", "Knowledge", "mined_irrelevant")
    with pytest.raises(InvalidDatasetError):
        BTExample("x", "Knowledge", "scraped")
    with pytest.raises(InvalidDatasetError):
        BTExample.from_dict({"text": "x", "label": "Wisdom"})


def test_bt_dataset_roundtrip(tmp_path):
    data = keyword_bt_set(3)
    save_bt_dataset(data, tmp_path / "bt.jsonl")
    assert load_bt_dataset(tmp_path / "bt.jsonl") == data


def test_fixture_dataset_loads(fixtures_dir):
    data = load_bt_dataset(fixtures_dir / "mini_dasqbt.jsonl")
    assert Counter(ex.label for ex in data) == {lvl: 10 for lvl in BLOOM_LEVELS}


# -- splitting -------------------------------------------------------------------------


def test_split_stratified_and_seeded():
    data = keyword_bt_set(20)
    train, test = split_dataset(data, 0.8, seed=3)
    assert Counter(ex.label for ex in test) == {lvl: 4 for lvl in BLOOM_LEVELS}
    assert split_dataset(data, 0.8, seed=3) == (train, test)
    assert split_dataset(data, 0.8, seed=4) != (train, test)
    assert Counter(train + test) == Counter(data)


def test_split_keeps_augmented_in_train():
    data = keyword_bt_set(10) + keyword_bt_set(5, seed=1, origin="augmented")
    train, test = split_dataset(data, 0.5, seed=0)
    assert all(ex.origin != "augmented" for ex in test)
    assert sum(ex.origin == "augmented" for ex in train) == 30


def test_split_unstratified_fallback(caplog):
    data = keyword_bt_set(5) + [BTExample("one of a kind", BTLevel.IRRELEVANT, "human")]
    train, test = split_dataset(data, 0.8)
    assert len(train) + len(test) == 31
    assert "fewer than 2" in caplog.text


def test_split_errors():
    with pytest.raises(InvalidInputError):
        split_dataset([], 0.8)
    with pytest.raises(InvalidInputError):
        split_dataset(keyword_bt_set(2), 0.0)


# -- augmentation ------------------------------------------------------------------------


def test_augment_tops_up_one_per_level(tmp_path):
    base = keyword_bt_set(6)[:34]
    backend = FakeChat()
    out = augment_dataset(base, Teacher(ReplayCache(tmp_path, backend)), target_total=40, seed=0)
    new = out[34:]
    assert len(out) == 40 and out[:34] == base
    assert [ex.label for ex in new] == list(BLOOM_LEVELS)
    assert all(ex.origin == "augmented" for ex in new)
    replay = augment_dataset(base, Teacher(ReplayCache(tmp_path, None, "replay")), target_total=40, seed=0)
    assert replay == out and backend.calls == 6


def test_augment_noop_when_large_enough(tmp_path):
    base = keyword_bt_set(2)
    assert augment_dataset(base, Teacher(ReplayCache(tmp_path, None, "replay")), target_total=5) == base


def test_augment_skips_failures(tmp_path, caplog):
    backend = FakeChat(refuse_first=3)
    out = augment_dataset([], Teacher(ReplayCache(tmp_path, backend)), target_total=2)
    assert len(out) == 1 and "1 of 2" in caplog.text


# -- mining --------------------------------------------------------------------------------


def brute_force_mine(scores, k):
    """Selection by repeated minimum; equal confidence falls back to the smaller id."""
    pool = list(scores)
    chosen = []
    for _ in range(k):
        best = pool[0]
        for s in pool[1:]:
            if s.max_class_prob < best.max_class_prob or (
                s.max_class_prob == best.max_class_prob and s.question_id < best.question_id
            ):
                best = s
        chosen.append(best)
        pool.remove(best)
    return chosen


def planted_scores(n=2000, seed=0):
    rng = random.Random(seed)
    levels = [1 / 6 + j / 100 for j in range(20)]  # a few values shared by many items
    scores = []
    for i in range(n):
        p = rng.choice(levels) if rng.random() < 0.4 else rng.uniform(1 / 6, 1)
        scores.append(ConfidenceScore(f"q{rng.randrange(10**6):06d}-{i}", p, BTLevel.KNOWLEDGE, f"text {i}"))
    rng.shuffle(scores)
    return scores


def test_mining_matches_brute_force():
    scores = planted_scores()
    got = mine_irrelevant(scores, 500)
    want = brute_force_mine(scores, 500)
    assert [ex.text for ex in got] == [s.text for s in want]
    assert all(ex.label is BTLevel.IRRELEVANT and ex.origin == "mined_irrelevant" for ex in got)


def test_mining_tie_order_independent_of_input_order():
    scores = planted_scores(300, seed=1)
    shuffled = list(scores)
    random.Random(9).shuffle(shuffled)
    assert mine_irrelevant(scores, 120) == mine_irrelevant(shuffled, 120)
    tied = [ConfidenceScore(qid, 0.3, BTLevel.KNOWLEDGE, qid) for qid in ("b", "c", "a")]
    assert [ex.text for ex in mine_irrelevant(tied, 2)] == ["a", "b"]


def test_mining_bounds():
    scores = planted_scores(10)
    assert mine_irrelevant(scores, 0) == []
    with pytest.raises(InvalidInputError):
        mine_irrelevant(scores, 11)
    with pytest.raises(InvalidInputError):
        mine_irrelevant(scores, -1)


# -- training and classification ----------------------------------------------------------


@pytest.fixture(scope="module")
def stage1():
    train = keyword_bt_set(100, seed=0)
    val = keyword_bt_set(10, seed=1)
    return train_bt(train, val, tiny_config(**BT_CFG), 6)


def test_bt_training_smoke(stage1):
    test = keyword_bt_set(20, seed=2)
    report = evaluate_bt(stage1, test)
    assert report.macro.f1 >= 0.9


def test_classify_returns_seven_probs(stage1):
    out = classify_bt(stage1, ["define the entropy for the exam"])
    label, probs = out[0]
    assert len(probs) == len(ALL_LEVELS) and probs[-1] == 0.0
    assert sum(probs) == pytest.approx(1.0, abs=1e-6)
    assert label is ALL_LEVELS[int(np.argmax(probs))]


def test_apply_labels(stage1):
    qs = question_records(6)
    labelled = apply_labels(qs, classify_bt(stage1, qs))
    assert all(q.bt_label is not None for q in labelled)
    with pytest.raises(InvalidInputError):
        apply_labels(qs, [])


def test_score_confidence(stage1):
    qs = question_records(20)
    scores = score_confidence(stage1, qs)
    assert [s.question_id for s in scores] == [q.question_id for q in qs]
    assert all(1 / 6 - 1e-6 <= s.max_class_prob <= 1 for s in scores)


def test_bt_save_load(stage1, tmp_path):
    from learnerq.btclass import BTModel

    stage1.save(tmp_path / "m")
    loaded = BTModel.load(tmp_path / "m")
    texts = ["design the torque step by step", "list the acids"]
    assert loaded.labels == stage1.labels
    assert np.array_equal(loaded.predict_proba(texts), stage1.predict_proba(texts))


def test_train_rejects_foreign_label():
    bad = keyword_bt_set(2) + [BTExample("noise", BTLevel.IRRELEVANT, "mined_irrelevant")]
    with pytest.raises(InvalidDatasetError):
        train_bt(bad, [], tiny_config(epochs=1), 6)


# -- two-stage recipe -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def two_stage():
    data = keyword_bt_set(40, seed=5)
    questions = question_records(200, seed=5)
    augmented = keyword_bt_set(3, seed=6, origin="augmented")
    return run_two_stage(data, questions, tiny_config(**BT_CFG), k=50, augmented=augmented)


def test_two_stage_irrelevant_support(two_stage):
    assert len(two_stage.mined) == 50
    support = Counter(ex.label for ex in two_stage.test2)
    assert support[BTLevel.IRRELEVANT] == 10
    assert two_stage.report2.per_class["Irrelevant"].support == 10
    assert two_stage.stage2.n_classes == 7


def test_two_stage_augmented_only_in_training(two_stage):
    assert not any(ex.origin == "augmented" for ex in two_stage.test1 + two_stage.test2)
    assert len(two_stage.augmented) == 18


def test_degenerate_path_reproduces_stage1():
    data = keyword_bt_set(20, seed=7)
    result = run_two_stage(data, question_records(30), tiny_config(**{**BT_CFG, "epochs": 2}), k=0)
    assert result.mined == [] and result.stage2.n_classes == 6
    assert result.report2.rows() == result.report1.rows()
    assert np.array_equal(result.report2.confusion, result.report1.confusion)
    texts = [ex.text for ex in result.test1]
    assert np.array_equal(result.stage1.predict_proba(texts), result.stage2.predict_proba(texts))


# -- human labels -------------------------------------------------------------------------------


def test_majority_vote():
    K, C, A = BTLevel.KNOWLEDGE, BTLevel.COMPREHENSION, BTLevel.APPLICATION
    assert HumanSample("a", (K, K, K)).gold is K
    assert HumanSample("b", (K, C, C)).gold is C
    assert HumanSample("c", (K, C, A)).gold is None
    with pytest.raises(InvalidInputError):
        HumanSample("d", (K, C))


def test_human_fixture_aggregation(fixtures_dir):
    samples = load_human_annotations(fixtures_dir / "human_annotations.csv")
    assert len(samples) == 300
    golds = [s for s in samples if s.gold is not None]
    assert len(golds) == 288
    ties = [s.question_id for s in samples if s.gold is None]
    assert ties == [f"h{7 + 25 * j:03d}" for j in range(12)]

    predictions = {s.question_id: (s.gold or BTLevel.KNOWLEDGE) for s in samples}
    ev = evaluate_human(predictions, samples)
    assert (ev.n_gold, ev.n_ties) == (288, 12)
    assert ev.report.extra["excluded_ties"] == 12
    assert ev.report.accuracy == 1.0


def test_human_missing_prediction(fixtures_dir):
    samples = load_human_annotations(fixtures_dir / "human_annotations.csv")
    with pytest.raises(InvalidInputError):
        evaluate_human({}, samples)


def test_evaluate_bt_three_class_fixture():
    class Fixed:
        labels = (BTLevel.KNOWLEDGE, BTLevel.COMPREHENSION, BTLevel.APPLICATION)
        n_classes = 3

        def predict_proba(self, texts):
            onehot = {"k": 0, "c": 1, "a": 2}
            return np.eye(3)[[onehot[t[0]] for t in texts]]

    K, C, A = Fixed.labels
    # gold K K K C C A; predicted k k c c a a
    test = [BTExample(t, g) for t, g in [("k1", K), ("k2", K), ("c3", K), ("c4", C), ("a5", C), ("a6", A)]]
    r = evaluate_bt(Fixed(), test)
    # K: p 1, r 2/3; C: p 1/2, r 1/2; A: p 1/2, r 1
    f1 = [0.8, 0.5, 2 / 3]
    assert r.macro.f1 == pytest.approx(sum(f1) / 3)
    assert r.weighted.f1 == pytest.approx((3 * 0.8 + 2 * 0.5 + 1 * 2 / 3) / 6)
    assert r.confusion[0].tolist() == [2, 1, 0]
