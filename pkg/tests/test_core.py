import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvtree.core import (BinMapper, Histogram, ModelMismatchError, RawDataset, ShapeError, Task,
                         TreeModel, bin_dataset, compute_bin_mapper, construct_histograms,
                         decode_limbs, encode_limbs, predict, tally)

from conftest import make_binned


def raw(values, labels=None, task=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    labels = np.zeros(len(values)) if labels is None else labels
    return RawDataset(values, labels, task or Task.regression())


def test_two_distinct_values_get_two_bins():
    m = compute_bin_mapper(raw([0, 0, 1, 1]), 255)
    assert m.n_bins[0] == 2
    b = bin_dataset(raw([0, 0, 1, 1]), m).bins[:, 0]
    assert b.tolist() == [0, 0, 1, 1]


def test_constant_attribute_has_one_bin():
    m = compute_bin_mapper(raw([5, 5, 5]), 255)
    assert m.n_bins[0] == 1


def test_uniform_quantile_bins_match_sorted_count():
    rng = np.random.default_rng(7)
    v = rng.random(1000)
    m = compute_bin_mapper(raw(v), 10)
    assert m.n_bins[0] == 10
    counts = np.bincount(bin_dataset(raw(v), m).bins[:, 0], minlength=10)
    # brute force: with distinct values, every rank block of 100 is one bin
    order = np.argsort(v)
    expected = np.zeros(1000, dtype=int)
    expected[order] = np.arange(1000) // 100
    assert np.array_equal(bin_dataset(raw(v), m).bins[:, 0], expected)
    assert counts.tolist() == [100] * 10


def test_bin_count_below_two_rejected():
    with pytest.raises(ValueError):
        compute_bin_mapper(raw([1, 2, 3]), 1)


def test_boundary_value_goes_to_lower_bin():
    m = BinMapper((np.array([1.0, 2.0]),), 255)
    b = bin_dataset(raw([1.0, 2.0, 1.5]), m).bins[:, 0]
    assert b.tolist() == [0, 1, 1]


def test_clamping_at_extremes():
    m = BinMapper((np.array([1.0, 2.0]),), 255)
    b = bin_dataset(raw([-1e9, 1e9]), m).bins[:, 0]
    assert b.tolist() == [0, 2]


def test_binning_is_deterministic():
    r = raw(np.random.default_rng(1).random((50, 3)))
    m = compute_bin_mapper(r, 8)
    assert np.array_equal(bin_dataset(r, m).bins, bin_dataset(r, m).bins)


def test_attribute_count_mismatch():
    m = compute_bin_mapper(raw(np.zeros((3, 2))), 4)
    with pytest.raises(ShapeError):
        bin_dataset(raw(np.zeros((3, 3))), m)


def test_missing_values_rejected():
    with pytest.raises(ValueError):
        raw([1.0, np.nan])


def test_classification_labels_checked():
    with pytest.raises(ValueError):
        RawDataset(np.zeros((2, 1)), np.array([0, 3]), Task.classification(3))


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60),
       st.integers(2, 20))
@settings(max_examples=100, deadline=None)
def test_binning_monotone_and_bounded(values, bin_count):
    r = raw(values)
    m = compute_bin_mapper(r, bin_count)
    edges = m.boundaries[0]
    assert np.all(np.diff(edges) > 0)
    assert 1 <= m.n_bins[0] <= bin_count
    b = bin_dataset(r, m).bins[:, 0]
    order = np.argsort(values, kind="stable")
    assert np.all(np.diff(b[order].astype(int)) >= 0)


def test_single_sample_histogram():
    data = bin_dataset(raw([[0.0], [1.0], [2.0]], np.array([0.0, 0.0, 3.0])),
                       BinMapper((np.array([0.5, 1.5]),), 255))
    (h,) = construct_histograms(data, [2])
    assert h.bin_at(2).count == 1
    assert h.bin_at(2).label_sum == 3.0
    assert h.bin_at(2).label_sq_sum == 9.0
    assert h.counts.sum() == 1


def test_histogram_matches_brute_force_tally():
    rng = np.random.default_rng(3)
    bins = rng.integers(0, 4, size=(8, 2))
    labels = rng.normal(size=8)
    mapper = BinMapper((np.arange(3) + 0.5, np.arange(3) + 0.5), 255)
    data = bin_dataset(raw(bins.astype(float), labels), mapper)
    hists = construct_histograms(data, np.arange(8))
    for j, h in enumerate(hists):
        for b in range(4):
            sel = bins[:, j] == b
            hb = h.bin_at(b)
            assert hb.count == sel.sum()
            assert hb.label_sum == pytest.approx(labels[sel].sum(), abs=1e-15)
            assert hb.label_sq_sum == pytest.approx((labels[sel] ** 2).sum(), abs=1e-15)


def test_classification_histogram_counts(small_classification):
    data = small_classification
    hists = construct_histograms(data, np.arange(data.n_samples))
    for h in hists:
        assert h.counts.sum() == data.n_samples
        assert np.array_equal(h.class_counts.sum(axis=1), h.counts)
        assert np.array_equal(h.class_counts.sum(axis=0),
                              np.bincount(data.labels.astype(int), minlength=3))


def test_empty_node_gives_zero_histograms(small_regression):
    hists = construct_histograms(small_regression, [])
    assert all(h.counts.sum() == 0 for h in hists)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_additivity_over_disjoint_sets(seed):
    data = make_binned(n=120, d=3, bins=8, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    mask = rng.random(data.n_samples) < 0.5
    a, b = np.flatnonzero(mask), np.flatnonzero(~mask)
    whole = construct_histograms(data, np.arange(data.n_samples))
    ha = construct_histograms(data, a)
    hb = construct_histograms(data, b)
    for w, x, y in zip(whole, ha, hb):
        # exact, not approximate: limb sums are order independent
        assert np.array_equal(w.stats, x.stats + y.stats)


@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=50))
def test_limb_sums_are_order_independent(values):
    v = np.array(values)
    limbs = encode_limbs(v)
    fwd = limbs.sum(axis=0)
    rev = limbs[::-1].sum(axis=0)
    assert np.array_equal(fwd, rev)
    assert decode_limbs(fwd) == pytest.approx(np.sum(v), abs=1e-9)
    assert np.all(np.abs(decode_limbs(limbs) - v) <= 2.0 ** -62)


def test_tally_chunks_agree_with_single_pass(small_regression, monkeypatch):
    import pvtree.core as core

    full = tally(small_regression, np.arange(small_regression.n_samples))
    monkeypatch.setattr(core, "_TALLY_CELLS", 150)
    chunked = tally(small_regression, np.arange(small_regression.n_samples))
    assert np.array_equal(full, chunked)


def test_predict_single_leaf(small_regression):
    tree = TreeModel.leaf(2.5)
    assert np.all(predict(tree, small_regression) == 2.5)


def test_predict_stump():
    tree = TreeModel(np.array([0, -1, -1]), np.array([0, -1, -1]), np.zeros(3),
                     np.array([1, -1, -1]), np.array([2, -1, -1]), np.array([0.0, -1.0, 1.0]), 2)
    data = bin_dataset(raw([0.0, 1.0]), BinMapper((np.array([0.5]),), 255))
    assert predict(tree, data).tolist() == [-1.0, 1.0]
    assert tree.apply(data.bins).tolist() == [1, 2]


def test_predict_attribute_out_of_range():
    tree = TreeModel(np.array([3, -1, -1]), np.array([0, -1, -1]), np.zeros(3),
                     np.array([1, -1, -1]), np.array([2, -1, -1]), np.zeros(3), 2)
    data = bin_dataset(raw([0.0, 1.0]), BinMapper((np.array([0.5]),), 255))
    with pytest.raises(ModelMismatchError):
        predict(tree, data)


def test_tree_dict_round_trip():
    tree = TreeModel(np.array([0, -1, -1]), np.array([4, -1, -1]), np.array([0.25, 0, 0]),
                     np.array([1, -1, -1]), np.array([2, -1, -1]), np.array([0.1, -1 / 3, 1e-17]), 2)
    assert TreeModel.from_dict(tree.to_dict()).equals(tree)
