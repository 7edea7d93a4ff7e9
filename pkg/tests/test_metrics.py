import numpy as np
import pytest

from crowdcast.engine import Engine
from crowdcast.metrics import EmptyMatrix, LabelOutOfScheme, confusion, format_table, metrics
from crowdcast.prep import P1, P2

from oracles import metrics_oracle


def binary_example():
    # TP=50 FN=10 FP=5 TN=35, Successful is the positive class
    truth = [0] * 60 + [1] * 40
    preds = [0] * 50 + [1] * 10 + [0] * 5 + [1] * 35
    return preds, truth


def test_confusion_definition():
    preds, truth = binary_example()
    assert confusion(preds, truth, P2).counts.tolist() == [[50, 10], [5, 35]]


def test_confusion_accepts_names():
    cm = confusion(["Successful", "NotSuccessful"], ["Successful", "Successful"], P2)
    assert cm.counts.tolist() == [[1, 1], [0, 0]]


def test_perfect_is_diagonal():
    y = [0, 1, 2, 3, 3, 2]
    cm = confusion(y, y, P1)
    assert (cm.counts == np.diag(np.bincount(y, minlength=4))).all()
    rep = metrics(cm)
    assert (rep.accuracy, rep.precision_weighted, rep.recall_weighted, rep.f1_weighted) == (1.0, 1.0, 1.0, 1.0)


def test_empty_input():
    cm = confusion([], [], P1)
    assert cm.counts.shape == (4, 4) and cm.total == 0
    with pytest.raises(EmptyMatrix):
        metrics(cm)


def test_out_of_scheme():
    with pytest.raises(LabelOutOfScheme):
        confusion(["Live"], ["Successful"], P2)
    with pytest.raises(LabelOutOfScheme):
        confusion([2], [0], P2)


def test_worked_example():
    rep = metrics(confusion(*binary_example(), P2))
    assert rep.accuracy == pytest.approx(0.85, abs=1e-15)
    assert rep.recall_weighted == pytest.approx(0.85, abs=1e-15)
    assert rep.precision_weighted == pytest.approx((60 * (50 / 55) + 40 * (35 / 45)) / 100, abs=1e-15)
    assert rep.precision_weighted == pytest.approx(0.856566, abs=1e-6)


def test_never_predicted_flagged():
    rep = metrics(confusion([0, 0, 0], [0, 1, 2], P1))
    assert rep.per_class["Failed"]["precision"] == 0.0
    assert any("Failed: never predicted" in f for f in rep.flags)
    assert rep.per_class["Failed"]["f1"] == 0.0


def test_macro_flag():
    preds, truth = binary_example()
    rep = metrics(confusion(preds, truth, P2), averaging="macro")
    assert rep.recall_weighted == pytest.approx((50 / 60 + 35 / 40) / 2)


def test_random_against_oracle_and_partitions():
    rng = np.random.default_rng(4)
    with Engine(workers=2) as eng:
        for _ in range(30):
            n = int(rng.integers(1, 300))
            truth = rng.integers(0, 4, n)
            preds = np.where(rng.random(n) < 0.6, truth, rng.integers(0, 4, n))
            cm = confusion(preds, truth, P1)
            rep = metrics(cm)
            acc, p, r, f = metrics_oracle(preds.tolist(), truth.tolist(), 4)
            assert abs(rep.accuracy - acc) < 1e-12 and abs(rep.precision_weighted - p) < 1e-12
            assert abs(rep.recall_weighted - r) < 1e-12 and abs(rep.f1_weighted - f) < 1e-12
            assert abs(rep.recall_weighted - rep.accuracy) < 1e-12
            assert (confusion(preds, truth, P1, partitions=5, engine=eng).counts == cm.counts).all()


def test_table_layout():
    rep = metrics(confusion(*binary_example(), P2))
    text = format_table({"gbt": rep, "svm": rep})
    lines = text.splitlines()
    assert lines[0].split() == ["Model", "Accuracy", "Precision", "Recall", "F1"]
    assert lines[2].startswith("GBTs") and "0.8500" in lines[2]
    assert lines[3].startswith("Linear SVM")
