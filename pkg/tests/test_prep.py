import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdcast.engine import Engine
from crowdcast.ingest import State
from crowdcast.prep import (P1, P2, ClassWeights, DegenerateStratum, EmptyClass, Standardizer, apply_standardizer,
                            class_counts, compute_class_weights, fit_standardizer, relabel, sample_weights,
                            stratified_split)

PUBLIC_COUNTS = {"Successful": 133324, "Failed": 196945, "Canceled": 38665, "Suspended": 1841}


def test_relabel():
    assert relabel(State.CANCELED, P2) == "NotSuccessful"
    assert relabel(State.LIVE, P1) is None
    assert relabel(State.LIVE, "P2") is None
    assert relabel(State.SUCCESSFUL, P1) == "Successful"
    assert relabel(State.SUSPENDED, P1) == "Suspended"


def test_equal_counts_give_unit_weights():
    assert compute_class_weights({"a": 7, "b": 7}).weights == {"a": 1.0, "b": 1.0}


def test_public_count_weights():
    p2 = compute_class_weights({"Successful": 133324, "NotSuccessful": 237451}, P2).weights
    assert p2["Successful"] == pytest.approx(1.390504, abs=1e-6)
    assert p2["NotSuccessful"] == pytest.approx(0.780740, abs=1e-6)
    p1 = compute_class_weights(PUBLIC_COUNTS, P1).vector(P1)
    np.testing.assert_allclose(p1, [0.695252, 0.470658, 2.397356, 50.34967], atol=1e-5)


def test_empty_class():
    with pytest.raises(EmptyClass):
        compute_class_weights({"a": 3, "b": 0})


@given(st.lists(st.integers(1, 10**7), min_size=2, max_size=10))
def test_weight_identity(counts):
    cw = compute_class_weights({str(i): c for i, c in enumerate(counts)})
    lhs = sum(c * cw.weights[str(i)] for i, c in enumerate(counts))
    assert lhs == pytest.approx(sum(counts), rel=1e-12)


def test_weights_roundtrip():
    cw = compute_class_weights(PUBLIC_COUNTS, P1)
    assert ClassWeights.from_dict(cw.to_dict()) == cw
    y = np.array([0, 3, 1])
    np.testing.assert_array_equal(sample_weights(y, cw, P1), cw.vector(P1)[y])


def test_exact_stratification():
    labels = ["A"] * 100 + ["B"] * 100
    s = stratified_split(labels, 0.2, seed=3)
    test_labels = [labels[i] for i in s.test]
    assert test_labels.count("A") == 20 and test_labels.count("B") == 20
    assert sorted(np.concatenate([s.train, s.test]).tolist()) == list(range(200))


def test_same_seed_same_split():
    labels = list("ABCABCAABBCC" * 20)
    a, b = stratified_split(labels, seed=11), stratified_split(labels, seed=11)
    np.testing.assert_array_equal(a.test, b.test)
    assert not np.array_equal(a.test, stratified_split(labels, seed=12).test)


def test_split_ignores_row_layout():
    rng = np.random.default_rng(0)
    ids = rng.permutation(1000) + 10
    labels = np.where(rng.random(1000) < 0.3, "A", "B")
    s = stratified_split(labels, 0.2, 5, order_keys=ids)
    perm = rng.permutation(1000)
    t = stratified_split(labels[perm], 0.2, 5, order_keys=ids[perm])
    assert set(ids[s.test]) == set(ids[perm][t.test])


def test_public_count_proportions_p1():
    labels = [c for c, n in PUBLIC_COUNTS.items() for _ in range(n // 100)]
    s = stratified_split(labels, 0.2, seed=1, classes=P1.classes)
    counts = class_counts([labels[i] for i in s.test], P1)
    for c, n in PUBLIC_COUNTS.items():
        assert abs(counts[c] - 0.2 * (n // 100)) <= 1


def test_degenerate_stratum():
    with pytest.raises(DegenerateStratum):
        stratified_split(["A"] * 10 + ["B"], 0.2)


def test_standardizer_examples():
    X = np.array([[0.0, 5.0, 1.0], [2.0, 5.0, 0.0]])
    std = fit_standardizer(X, [0, 1])
    out = apply_standardizer(std, X)
    np.testing.assert_array_equal(out[:, 0], [-1.0, 1.0])
    np.testing.assert_array_equal(out[:, 1], X[:, 1])
    np.testing.assert_array_equal(out[:, 2], X[:, 2])
    assert std.zero_variance == [1]


def test_standardizer_moments_and_partitions():
    x = np.random.default_rng(2).normal(3.0, 7.0, size=(1000, 2))
    std = fit_standardizer(x, np.array([True, True]))
    z = std.transform(x)
    assert np.abs(z.mean(axis=0)).max() < 1e-9
    np.testing.assert_allclose(z.std(axis=0), 1.0, rtol=1e-9)
    with Engine(workers=2) as eng:
        s8 = fit_standardizer(x, [0, 1], partitions=8, engine=eng)
    np.testing.assert_allclose(s8.mean, std.mean, rtol=1e-12)
    np.testing.assert_allclose(s8.std, std.std, rtol=1e-12)
    again = Standardizer.from_dict(std.to_dict())
    np.testing.assert_array_equal(again.transform(x), z)
