import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spl_uda.classifier import ClassifierParams, TrainConfig, evaluate, train_classifier
from spl_uda.dataio import BenchmarkSpec, attach_labels, generate_benchmark
from spl_uda.pseudo_label import (PseudoLabelRecord, assign_pseudo_labels, compute_quotas, quota_naive,
                                  quota_star, read_selection_csv, select_subset, write_selection_csv)
from spl_uda.tensor_core import DenseNet, Layer


def fixed_classifier(b, d=3):
    b = np.asarray(b, dtype=float)
    return ClassifierParams(DenseNet([Layer(np.zeros((d, b.size)), b)]), b.size, d)


def targets(n, d=3):
    from spl_uda.dataio import TARGET, FeatureSample
    return [FeatureSample(i, np.full(d, float(i)), TARGET) for i in range(n)]


def rec(i, c, s):
    return PseudoLabelRecord(i, c, s, 1)


def test_assign_with_margin():
    records = assign_pseudo_labels(fixed_classifier([0, 10, 0]), targets(4))
    assert [r.predicted_class for r in records] == [1] * 4
    assert [r.sample_id for r in records] == [0, 1, 2, 3]


def test_assign_uniform_ties():
    records = assign_pseudo_labels(fixed_classifier([0, 0, 0, 0, 0]), targets(3))
    assert all(r.predicted_class == 0 and r.confidence == pytest.approx(0.2) for r in records)


def test_assign_agrees_with_evaluate():
    src, tgt, truth = generate_benchmark(BenchmarkSpec(classes=3, dim=8, source_per_class=30,
                                                       target_per_class=30, translation=1.0, seed=0))
    clf = train_classifier(src, TrainConfig(epochs=20))
    records = assign_pseudo_labels(clf, tgt)
    agree = np.mean([truth[r.sample_id] == r.predicted_class for r in records])
    assert agree == evaluate(clf, attach_labels(tgt, truth))


@pytest.mark.parametrize("args, expected", [
    ((0, 1, 10, 100, 10, 50), 1),
    ((0, 10, 10, 100, 10, 3), 3),
    ((0, 5, 10, 200, 10, 100), 10),
])
def test_quota_naive_examples(args, expected):
    assert quota_naive(*args) == expected


def test_quota_naive_rescue_and_skip():
    # floor(1*10/(10*10)) = 0 -> raised to 1 when the class was predicted at all
    assert quota_naive(0, 1, 10, 10, 10, 4) == 1
    assert quota_naive(0, 1, 10, 10, 10, 0) == 0


def test_quota_star_examples():
    assert quota_star(5, 10, 40) == 20
    assert quota_star(10, 10, 37) == 37
    assert quota_star(3, 10, 0) == 0


def test_quota_k_out_of_range():
    with pytest.raises(ValueError):
        quota_naive(0, 0, 10, 100, 10, 5)
    with pytest.raises(ValueError):
        quota_star(11, 10, 5)


@given(st.integers(1, 30), st.integers(1, 2000), st.integers(1, 40), st.integers(0, 2000))
def test_quota_naive_monotone_and_clamped(T, n_t, C, n_hat):
    qs = [quota_naive(0, k, T, n_t, C, n_hat) for k in range(1, T + 1)]
    assert all(a <= b for a, b in zip(qs, qs[1:]))
    assert all(0 <= q <= n_hat for q in qs)
    last = min(n_t // C, n_hat)
    assert qs[-1] == (1 if last == 0 and n_hat >= 1 else last)
    exact = [math.floor(min(Fraction(k * n_t, T * C), n_hat)) for k in range(1, T + 1)]
    assert all(q == e or (e == 0 and q == 1) for q, e in zip(qs, exact))


def test_select_top_confidence():
    records = [rec(1, 0, 0.9), rec(2, 0, 0.7), rec(3, 0, 0.8)]
    assert [r.sample_id for r in select_subset(records, {0: 2})] == [1, 3]
    assert select_subset(records, {0: 0}) == []


def test_select_tie_break_by_id():
    records = [rec(7, 1, 0.5), rec(3, 1, 0.5), rec(9, 1, 0.5)]
    assert [r.sample_id for r in select_subset(records, {1: 2})] == [3, 7]


def test_select_requires_quota_for_present_classes():
    with pytest.raises(ValueError):
        select_subset([rec(0, 2, 0.9)], {0: 1})


@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0.2, 1.0)), min_size=1, max_size=60),
       st.integers(0, 10_000))
def test_select_order_invariant(items, shuffle_seed):
    records = [rec(i, c, s) for i, (c, s) in enumerate(items)]
    quotas = {c: 3 for c in range(5)}
    shuffled = records[:]
    random.Random(shuffle_seed).shuffle(shuffled)
    assert select_subset(records, quotas) == select_subset(shuffled, quotas)


def _records_with_counts(counts):
    out, i = [], 0
    for c, n in enumerate(counts):
        for j in range(n):
            out.append(rec(i, c, 0.5 + 0.4 * j / max(n, 1)))
            i += 1
    return out


def test_balanced_selection_property():
    # while k * n_t / (T * C) stays below every predicted count the quotas are equal
    records = _records_with_counts([130, 100, 170, 100, 150])
    n_t, C = len(records), 5
    for k in range(1, 8):
        sel = select_subset(records, compute_quotas(records, "naive", k, 10, C))
        counts = [sum(r.predicted_class == c for r in sel) for c in range(C)]
        assert max(counts) - min(counts) <= 1
        assert sum(counts) <= n_t


def test_proportional_versus_balanced_contrast():
    records = _records_with_counts([900, 100])
    star = select_subset(records, compute_quotas(records, "star", 5, 10, 2))
    naive = select_subset(records, compute_quotas(records, "naive", 5, 10, 2))
    s_counts = [sum(r.predicted_class == c for r in star) for c in range(2)]
    n_counts = [sum(r.predicted_class == c for r in naive) for c in range(2)]
    assert s_counts == [450, 50]
    assert n_counts == [250, 100]  # floor(5*1000/(10*2)) = 250, capped by n_hat = 100 for class 1
    records = _records_with_counts([600, 400])
    naive = select_subset(records, compute_quotas(records, "naive", 5, 10, 2))
    assert [sum(r.predicted_class == c for r in naive) for c in range(2)] == [250, 250]


def test_selection_csv_round_trip(tmp_path):
    sel = [[rec(1, 0, 0.9), rec(4, 2, 0.123456789012345)], [PseudoLabelRecord(3, 1, 0.5, 2)]]
    write_selection_csv(tmp_path / "sel.csv", sel)
    assert read_selection_csv(tmp_path / "sel.csv") == sel[0] + sel[1]
    assert (tmp_path / "sel.csv").read_text().splitlines()[0] == "sample_id,pseudo_class,confidence,iteration"
