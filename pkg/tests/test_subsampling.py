import math

import numpy as np
import pytest

from kgesub.data import count_frequencies, directed_examples, triple_freq
from kgesub.subsampling import (
    SCHEMES,
    SubsamplingConfig,
    SubsamplingWeights,
    compute_weights,
    normalized_inverse_power,
    weight_summary,
)

from conftest import make_dataset, random_dataset


def test_normalized_inverse_power_hand_values():
    # raw weights 1 and 1/2, scaled to mean 1
    w = normalized_inverse_power(np.array([1.0, 4.0]), 0.5)
    np.testing.assert_allclose(w, [4 / 3, 2 / 3], rtol=0, atol=1e-15)


def test_constant_counts_give_unit_weights():
    # a cycle: every (head, rel) and (rel, tail) pair occurs exactly once
    n = 6
    ds = make_dataset([(i, 0, (i + 1) % n) for i in range(n)])
    for kind in SCHEMES:
        w = compute_weights(SubsamplingConfig(kind), ds)
        np.testing.assert_array_equal(w.positive, np.ones(2 * n))
        np.testing.assert_array_equal(w.negative, np.ones(2 * n))


def test_none_scheme_is_exactly_one():
    ds = make_dataset([(0, 0, 1), (0, 0, 2), (1, 0, 2)])
    w = compute_weights(SubsamplingConfig("none"), ds)
    assert np.all(w.positive == 1.0)
    assert np.all(w.negative == 1.0)


def test_freq_scheme_hand_computed():
    # two triples sharing (head, rel): tail queries have count 2, head queries 1
    ds = make_dataset([(0, 0, 1), (0, 0, 2)])
    w = compute_weights(SubsamplingConfig("freq"), ds)
    # triple counts are 3 for both triples -> positive weights all 1
    np.testing.assert_allclose(w.positive, np.ones(4), atol=1e-15)
    raw = np.array([2.0**-0.5, 1.0, 2.0**-0.5, 1.0])
    expected = raw * raw.size / raw.sum()
    np.testing.assert_allclose(w.negative, expected, atol=1e-15)


def test_base_and_uniq_tie_positive_to_negative():
    rng = np.random.default_rng(11)
    ds = random_dataset(rng, n_entities=8, n_relations=2, n_train=30)
    for kind in ("base", "uniq"):
        w = compute_weights(SubsamplingConfig(kind), ds)
        np.testing.assert_array_equal(w.positive, w.negative)


def test_mean_one_normalization_random_datasets():
    rng = np.random.default_rng(5)
    for _ in range(10):
        ds = random_dataset(rng, n_entities=10, n_relations=3, n_train=35)
        for kind in SCHEMES:
            for exponent in (0.25, 0.5, 1.0):
                w = compute_weights(SubsamplingConfig(kind, exponent), ds)
                assert abs(w.positive.mean() - 1.0) < 1e-9
                assert abs(w.negative.mean() - 1.0) < 1e-9


def test_monotone_in_triple_frequency():
    rng = np.random.default_rng(13)
    ds = random_dataset(rng, n_entities=6, n_relations=2, n_train=25)
    table = count_frequencies(ds)
    examples = directed_examples(ds)
    for kind in ("base", "freq"):
        w = compute_weights(SubsamplingConfig(kind), ds, table)
        for a in examples:
            for b in examples:
                fa, fb = triple_freq(table, a.as_triple()), triple_freq(table, b.as_triple())
                if fa < fb:
                    assert w.positive[a.index] > w.positive[b.index]


def test_unique_queries_give_unit_uniq_weights():
    n = 7
    ds = make_dataset([(i, 0, (i + 2) % n) for i in range(n)])
    w = compute_weights(SubsamplingConfig("uniq"), ds)
    np.testing.assert_array_equal(w.positive, np.ones(2 * n))


def test_weight_summary():
    constant = SubsamplingWeights(np.ones(4), np.ones(4))
    s = weight_summary(constant, "none")
    assert s.positive_std == 0.0
    assert s.positive_min == s.positive_max == 1.0

    mixed = SubsamplingWeights(np.array([4 / 3, 2 / 3]), np.array([4 / 3, 2 / 3]))
    s = weight_summary(mixed)
    assert math.isclose(s.positive_mean, 1.0, rel_tol=0, abs_tol=1e-15)
    assert s.count == 2


def test_invalid_configs():
    with pytest.raises(ValueError, match="unknown subsampling kind"):
        SubsamplingConfig("word2vec")
    for exponent in (0.0, -1.0, 1.5):
        with pytest.raises(ValueError, match="exponent"):
            SubsamplingConfig("base", exponent)


def test_empty_dataset_rejected():
    ds = make_dataset([(0, 0, 1)])
    empty = type(ds)(ds.train[:0], ds.valid, ds.test, ds.entities, ds.relations)
    with pytest.raises(ValueError, match="empty"):
        compute_weights(SubsamplingConfig("base"), empty)


def test_weights_validation():
    with pytest.raises(ValueError, match="finite"):
        SubsamplingWeights(np.array([1.0, np.inf]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError, match="finite"):
        SubsamplingWeights(np.array([1.0, 1.0]), np.array([0.0, 2.0]))
