from __future__ import annotations

import math
import time

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import separable_detect_set, tiny_config
from learnerq.errors import InvalidConfigError, InvalidDatasetError, InvalidInputError
from learnerq.qdetect import (
    DetectExample,
    DistillConfig,
    RegexDetector,
    cross_entropy,
    distillation_loss,
    distillation_loss_grad,
    distillation_loss_torch,
    distillation_terms,
    evaluate_detector,
    load_detect_dataset,
    load_detector,
    predict_interrogative,
    save_detect_dataset,
    train_detector,
)
from learnerq.teacher import SoftLabel


def random_case(rng, k=None):
    k = k or int(rng.integers(2, 8))
    logits = rng.normal(0, 3, size=k)
    teacher = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3))
    target = int(rng.integers(k))
    return logits, target, teacher


# -- loss values -------------------------------------------------------------------


def test_loss_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(1000):
        logits, target, teacher = random_case(rng)
        cfg = DistillConfig(tau=float(rng.uniform(0.5, 4)), alpha=float(rng.uniform(0, 5)))
        got = distillation_loss(logits, target, teacher, cfg)
        want = oracles.kd_loss(list(logits), target, list(teacher), cfg.tau, cfg.alpha)
        assert abs(got - want) <= 1e-6 * max(abs(want), 1e-12)
    assert time.perf_counter() - start < 10


def test_alpha_zero_is_cross_entropy_bitwise():
    rng = np.random.default_rng(2)
    for _ in range(200):
        logits, target, teacher = random_case(rng)
        assert distillation_loss(logits, target, teacher, DistillConfig(alpha=0.0)) == cross_entropy(logits, target)


def test_weight_when_student_matches_teacher():
    rng = np.random.default_rng(3)
    for _ in range(100):
        logits, target, _ = random_case(rng)
        s = oracles.softmax(list(logits))
        terms = distillation_terms(logits, target, s, DistillConfig())
        if 1e-7 < s[target] < 1 - 1e-7:
            assert terms.weight == pytest.approx(1 - math.exp(-1), abs=1e-9)


def test_weight_sign_tracks_student_lag():
    cfg = DistillConfig()
    teacher = [0.1, 0.9]
    behind = distillation_terms([1.0, 0.0], 1, teacher, cfg).weight
    ahead = distillation_terms([-5.0, 5.0], 1, teacher, cfg).weight
    assert behind > 1 - math.exp(-1) > ahead > 0


def test_certain_teacher_is_finite():
    terms = distillation_terms([0.3, -0.2], 0, [1.0, 0.0], DistillConfig())
    assert all(math.isfinite(v) for v in (terms.loss, terms.weight, terms.soft_ce))


@given(
    st.lists(st.floats(-20, 20), min_size=2, max_size=7),
    st.floats(0.5, 4),
    st.floats(0, 5),
    st.integers(0, 6),
)
@settings(max_examples=200, deadline=None)
def test_loss_nonnegative(logits, tau, alpha, target):
    target %= len(logits)
    k = len(logits)
    teacher = [1.0 / k] * k
    assert distillation_loss(logits, target, teacher, DistillConfig(tau=tau, alpha=alpha)) >= 0


@pytest.mark.parametrize(
    "logits, target, teacher",
    [
        ([0.0], 0, [1.0]),
        ([0.0, math.nan], 0, [0.5, 0.5]),
        ([0.0, 1.0], 0, [0.5, 0.6]),
        ([0.0, 1.0], 0, [0.2, 0.3, 0.5]),
        ([0.0, 1.0], 2, [0.5, 0.5]),
    ],
)
def test_invalid_inputs(logits, target, teacher):
    with pytest.raises(InvalidInputError):
        distillation_loss(logits, target, teacher, DistillConfig())


@pytest.mark.parametrize("kw", [{"tau": 0}, {"alpha": -1}, {"epsilon": 0.7}])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfigError):
        DistillConfig(**kw)


# -- gradients ---------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 7])
def test_gradient_matches_finite_differences(k):
    rng = np.random.default_rng(10 + k)
    h = 1e-4
    for _ in range(50):
        logits, target, teacher = random_case(rng, k)
        cfg = DistillConfig(tau=float(rng.uniform(0.5, 4)), alpha=float(rng.uniform(0, 5)))
        analytic = distillation_loss_grad(logits, target, teacher, cfg)
        numeric = np.zeros(k)
        for j in range(k):
            up, down = logits.copy(), logits.copy()
            up[j] += h
            down[j] -= h
            numeric[j] = (distillation_loss(up, target, teacher, cfg) - distillation_loss(down, target, teacher, cfg)) / (2 * h)
        scale = max(np.abs(numeric).max(), 1.0)
        assert np.abs(analytic - numeric).max() <= 1e-4 * scale


def test_torch_path_matches_numpy_and_autograd():
    rng = np.random.default_rng(5)
    cfg = DistillConfig(tau=1.7, alpha=3.0)
    rows = [random_case(rng, 4) for _ in range(16)]
    logits = torch.tensor(np.stack([r[0] for r in rows]), dtype=torch.float64, requires_grad=True)
    targets = torch.tensor([r[1] for r in rows])
    teacher = torch.tensor(np.stack([r[2] for r in rows]), dtype=torch.float64)
    loss, parts = distillation_loss_torch(logits, targets, teacher, cfg)
    want = np.mean([distillation_loss(*r, cfg) for r in rows])
    assert float(loss.detach()) == pytest.approx(want, rel=1e-9)
    assert set(parts) == {"lce", "lkl", "w_mean"}
    loss.backward()
    grad = np.stack([distillation_loss_grad(*r, cfg) for r in rows]) / len(rows)
    assert np.allclose(logits.grad.numpy(), grad, atol=1e-9)


# -- datasets ------------------------------------------------------------------------


def test_detect_example_validation():
    with pytest.raises(InvalidDatasetError):
        DetectExample("x", 2)
    with pytest.raises(InvalidDatasetError):
        DetectExample.from_dict({"label": 1})


def test_dataset_roundtrip(tmp_path):
    data = separable_detect_set(20)
    save_detect_dataset(data, tmp_path / "d.jsonl")
    assert load_detect_dataset(tmp_path / "d.jsonl") == data


# -- regex detector, inference, evaluation ------------------------------------------------


def test_predict_threshold_inclusive_and_empty():
    class Fixed:
        def predict_proba(self, texts):
            return np.array([0.5, 0.49, 1.2][: len(texts)])

    out = predict_interrogative(Fixed(), ["a", "b", "", "c"], threshold=0.5)
    assert out == [(1, 0.5), (0, 0.49), (0, 0.0), (1, 1.0)]


def test_evaluate_regex_counts():
    # 9 true questions (8 with '?'), 11 statements (2 with '?'): TP 8, FP 2, FN 1, TN 9
    pos = [DetectExample(f"is item {i} ready?", 1) for i in range(8)] + [DetectExample("what is this", 1)]
    neg = [DetectExample(f"note {i}?", 0) for i in range(2)] + [DetectExample(f"plain {i}.", 0) for i in range(9)]
    r = evaluate_detector(RegexDetector(), pos + neg)
    assert r.extra["precision"] == pytest.approx(0.8)
    assert r.extra["recall"] == pytest.approx(8 / 9)
    assert r.extra["f1"] == pytest.approx(2 * 0.8 * (8 / 9) / (0.8 + 8 / 9))
    assert r.accuracy == pytest.approx(17 / 20)


def test_evaluate_empty_raises():
    with pytest.raises(InvalidInputError):
        evaluate_detector(RegexDetector(), [])


def test_regex_detector_roundtrip(tmp_path):
    RegexDetector(r"\?$").save(tmp_path)
    loaded = load_detector(tmp_path)
    assert isinstance(loaded, RegexDetector) and loaded.pattern == r"\?$"


# -- training ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained():
    data = separable_detect_set(400, seed=0)
    val = separable_detect_set(100, seed=1)
    model = train_detector(data, val, DistillConfig(), tiny_config(epochs=3))
    return model, val


def test_training_smoke(trained):
    model, val = trained
    assert evaluate_detector(model, val).extra["f1"] >= 0.95
    assert model.fingerprint["best_epoch"] >= 1
    assert {"lce", "lkl", "w_mean"} <= set(model.training_log[0])


def test_save_load_identical_predictions(trained, tmp_path):
    model, val = trained
    model.save(tmp_path / "m")
    loaded = load_detector(tmp_path / "m")
    texts = [ex.text for ex in val]
    assert np.array_equal(model.predict_proba(texts), loaded.predict_proba(texts))
    assert (tmp_path / "m" / "train_log.csv").read_text().startswith("step,epoch,loss,lce,lkl,w_mean")


def test_training_is_deterministic():
    data = separable_detect_set(64, seed=3)
    cfg = tiny_config(epochs=1)
    a = train_detector(data, [], DistillConfig(), cfg)
    b = train_detector(data, [], DistillConfig(), cfg)
    texts = [ex.text for ex in data]
    assert np.array_equal(a.predict_proba(texts), b.predict_proba(texts))


def test_training_requires_soft_labels():
    data = [DetectExample("why?", 1), DetectExample("fine.", 0)]
    with pytest.raises(InvalidDatasetError):
        train_detector(data, [], DistillConfig(), tiny_config(epochs=1))
    train_detector(data, [], DistillConfig(alpha=0.0), tiny_config(epochs=1))


def test_training_rejects_empty():
    with pytest.raises(InvalidDatasetError):
        train_detector([], [], DistillConfig(), tiny_config())


def test_soft_label_vector_orientation():
    ex = DetectExample("why?", 1, SoftLabel.from_prediction(1, math.log(0.9)))
    assert ex.teacher.as_vector() == pytest.approx([0.1, 0.9])
