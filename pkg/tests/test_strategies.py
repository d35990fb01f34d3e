import math

import numpy as np
import pytest

from pvtree.cluster import partition, partition_attributes
from pvtree.core import (BinMapper, Histogram, RawDataset, SplitCandidate, Task, bin_dataset,
                         construct_histograms, tally)
from pvtree.gain import GainKind, NodeStats
from pvtree.strategies import (AttributeParallelFinder, DataParallelFinder, PVTreeConfig,
                               PVTreeFinder, QuantizeConfig, QuantizedDataParallelFinder,
                               StrategyConfig, VoteTally, global_vote, local_vote, make_finder,
                               quantization_edges, quantize_histogram)
from pvtree.trainer import SequentialFinder, TreeConfig, build_tree

from conftest import make_binned


def cand(a, g=0.1):
    return SplitCandidate(a, 0, g)


def root_node(data):
    tensor = tally(data, np.arange(data.n_samples))
    return tensor, NodeStats(tensor[0].sum(axis=0), 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        PVTreeConfig(k=0)
    with pytest.raises(ValueError):
        PVTreeConfig(global_multiplier=1.0)
    with pytest.raises(ValueError):
        QuantizeConfig(b=1)
    with pytest.raises(ValueError):
        StrategyConfig(name="nope")
    assert PVTreeConfig(k=5).global_size(7) == 7
    assert PVTreeConfig(k=3, global_multiplier=1.5).global_size(100) == 5
    assert PVTreeConfig().majority_threshold(5) == 3


# -- voting -------------------------------------------------------------------

def test_local_vote_sorts_by_gain():
    # attribute 2 carries the signal, 0 a weaker copy, 1 is noise
    rng = np.random.default_rng(0)
    x = rng.random((400, 3))
    y = 3 * (x[:, 2] > 0.5) + 1 * (x[:, 0] > 0.5) + 0.01 * rng.standard_normal(400)
    raw = RawDataset(x, y, Task.regression())
    from pvtree.core import compute_bin_mapper
    data = bin_dataset(raw, compute_bin_mapper(raw, 16))
    tensor, node = root_node(data)
    top = local_vote(tensor, data.mapper.n_bins, node, GainKind.VARIANCE, k=2)
    assert [c.attribute for c in top] == [2, 0]
    assert top[0].gain > top[1].gain
    allc = local_vote(tensor, data.mapper.n_bins, node, GainKind.VARIANCE, k=10)
    assert len(allc) == 3


def test_local_vote_identical_partitions_identical_candidates(small_regression):
    tensor, node = root_node(small_regression)
    nb = small_regression.mapper.n_bins
    a = local_vote(tensor, nb, node, GainKind.VARIANCE, 1)
    b = local_vote(tensor.copy(), nb, node, GainKind.VARIANCE, 1)
    assert a == b


def test_global_vote_counts():
    a, b, c, d = 10, 20, 30, 40
    tops = [[cand(a), cand(b)], [cand(a), cand(c)], [cand(a), cand(d)],
            [cand(a), cand(b)], [cand(b), cand(c)]]
    assert global_vote(tops, 4) == [a, b, c, d]
    t = VoteTally()
    for lst in tops:
        t.add(lst)
    assert t.votes == {a: 4, b: 3, c: 2, d: 1}
    assert t.total_votes == 5 * 2


def test_global_vote_single_worker_and_identical():
    assert global_vote([[cand(3, 0.9), cand(1, 0.5), cand(7, 0.2)]], 2) == [3, 1]
    same = [cand(4, 0.9), cand(2, 0.3)]
    assert global_vote([same] * 3, 4) == [4, 2]


def test_global_vote_tie_breaks():
    tops = [[cand(5, 0.2)], [cand(3, 0.2)], [cand(9, 0.7)]]
    assert global_vote(tops, 3) == [9, 3, 5]


def test_one_vote_per_worker_per_attribute():
    t = VoteTally()
    t.add([cand(1), cand(1, 0.5)])
    assert t.votes == {1: 1}
    assert t.best_gain[1] == 0.1


# -- quantization -------------------------------------------------------------

def _hist(counts, labels_per_bin=None):
    counts = np.asarray(counts)
    bins = np.repeat(np.arange(len(counts)), counts)
    y = np.arange(len(bins), dtype=float) if labels_per_bin is None else labels_per_bin
    raw = RawDataset(bins[:, None].astype(float), y, Task.regression())
    data = bin_dataset(raw, BinMapper((np.arange(len(counts) - 1) + 0.5,), 255))
    return construct_histograms(data, np.arange(len(bins)))[0]


def test_quantize_uniform_counts():
    q = quantize_histogram(_hist([1, 1, 1, 1]), QuantizeConfig(2))
    assert q.counts.tolist() == [2, 2]
    assert quantization_edges(np.array([1, 1, 1, 1]), 2).tolist() == [1, 3]


def test_quantize_identity_at_full_resolution():
    h = _hist([3, 1, 4, 1, 5])
    q = quantize_histogram(h, QuantizeConfig(5))
    assert np.array_equal(q.stats, h.stats)


def test_quantize_conserves_totals():
    rng = np.random.default_rng(1)
    for _ in range(30):
        counts = rng.integers(0, 9, size=12)
        counts[0] += 1
        h = _hist(counts)
        b = int(rng.integers(2, 13))
        q = quantize_histogram(h, QuantizeConfig(b))
        assert q.n_bins == b
        assert np.array_equal(q.total(), h.total())
        assert q.counts.sum() == h.counts.sum()
        edges = quantization_edges(h.counts, b)
        assert np.all(np.diff(edges) > 0) and edges[-1] == 11


def test_quantize_more_groups_than_bins():
    with pytest.raises(ValueError):
        quantize_histogram(_hist([1, 1]), QuantizeConfig(3))


# -- strategy equivalences ----------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 4, 8])
def test_data_parallel_equals_sequential(m):
    data = make_binned(n=1000, d=6, bins=32, seed=m)
    cfg = TreeConfig(max_depth=5)
    seq = build_tree(data, cfg, SequentialFinder())
    for seed in range(3):
        dp = build_tree(data, cfg, DataParallelFinder(partition(data, m, seed)))
        assert dp.equals(seq)


@pytest.mark.parametrize("m", [1, 2, 4])
def test_attribute_parallel_equals_sequential(m):
    data = make_binned(n=600, d=7, bins=16, seed=11)
    cfg = TreeConfig(max_depth=5)
    seq = build_tree(data, cfg, SequentialFinder())
    assert build_tree(data, cfg, AttributeParallelFinder(partition_attributes(7, m))).equals(seq)


def test_attribute_parallel_needs_vertical_cluster():
    with pytest.raises(ValueError):
        AttributeParallelFinder(partition(10, 2, 0))


@pytest.mark.parametrize("m", [1, 3, 8])
def test_pv_tree_with_k_equal_d_is_exact(m):
    data = make_binned(n=900, d=5, bins=32, seed=20 + m, task="classification")
    cfg = TreeConfig(max_depth=5, gain_kind=GainKind.INFORMATION)
    seq = build_tree(data, cfg, SequentialFinder())
    pv = build_tree(data, cfg, PVTreeFinder(partition(data, m, 4), PVTreeConfig(k=5)))
    assert pv.equals(seq)


def test_pv_tree_single_machine_small_k():
    data = make_binned(n=500, d=8, bins=16, seed=5)
    cfg = TreeConfig(max_depth=4)
    seq = build_tree(data, cfg, SequentialFinder())
    # with M=1 the local best is the global best, so k=1 already suffices
    pv = build_tree(data, cfg, PVTreeFinder(partition(data, 1, 0), PVTreeConfig(k=1)))
    assert pv.equals(seq)


def test_quantized_with_full_b_matches_full():
    data = make_binned(n=800, d=5, bins=16, seed=6)
    assert np.all(data.mapper.n_bins == 16)
    cfg = TreeConfig(max_depth=4)
    seq = build_tree(data, cfg, SequentialFinder())
    q = build_tree(data, cfg, QuantizedDataParallelFinder(partition(data, 4, 0), QuantizeConfig(16)))
    assert q.equals(seq)


def test_pv_tree_split_in_shortlist_with_global_gain():
    data = make_binned(n=2000, d=20, bins=32, seed=8)
    finder = PVTreeFinder(partition(data, 4, 0), PVTreeConfig(k=2))
    samples = np.arange(data.n_samples)
    split = finder.find_split(data, samples, 1, TreeConfig())
    rnd = finder.last_round
    assert split.attribute in rnd.shortlist
    assert len(rnd.shortlist) <= 4
    # gain recomputed from merged histograms equals the sequential gain of that attribute
    tensor, node = root_node(data)
    from pvtree.gain import best_per_attribute
    exact = best_per_attribute(tensor, data.mapper.n_bins, [split.attribute], node,
                               GainKind.VARIANCE, 1)[0]
    assert split == exact
    votes = VoteTally()
    for lst in rnd.local_tops:
        votes.add(lst)
    assert max(votes.votes.values()) <= 4


# -- byte accounting ----------------------------------------------------------

def _one_node_bytes(finder, data):
    finder.find_split(data, np.arange(data.n_samples), 1, TreeConfig())
    return finder.cluster.meter.by_phase()


def test_pv_tree_node_bytes_formula():
    data = make_binned(n=2000, d=30, bins=64, seed=1)
    m, k = 4, 3
    by = _one_node_bytes(PVTreeFinder(partition(data, m, 0), PVTreeConfig(k=k)), data)
    assert by["local-vote"] == (m - 1) * m * k * 16
    assert by["histograms"] == (m - 1) * 6 * 64 * 20
    assert by["split-broadcast"] == (m - 1) * 16


def test_data_parallel_bytes_linear_in_d():
    small = make_binned(n=1000, d=10, bins=32, seed=2)
    big = make_binned(n=1000, d=20, bins=32, seed=2)
    bs = _one_node_bytes(DataParallelFinder(partition(small, 4, 0)), small)["histograms"]
    bb = _one_node_bytes(DataParallelFinder(partition(big, 4, 0)), big)["histograms"]
    assert bb == 2 * bs
    other = make_binned(n=3000, d=10, bins=32, seed=3)
    assert _one_node_bytes(DataParallelFinder(partition(other, 4, 0)), other)["histograms"] == bs


def test_quantized_bytes_scale_with_b():
    data = make_binned(n=2000, d=10, bins=64, seed=4)
    full = _one_node_bytes(DataParallelFinder(partition(data, 4, 0)), data)["histograms"]
    q = _one_node_bytes(QuantizedDataParallelFinder(partition(data, 4, 0), QuantizeConfig(16)),
                        data)
    assert q["histograms"] == full * 16 / 64
    assert q["quantize-counts"] == 3 * 10 * 64 * 4


def test_attribute_parallel_bytes_independent_of_d():
    a = make_binned(n=1000, d=8, bins=16, seed=5)
    b = make_binned(n=1000, d=16, bins=16, seed=5)
    ba = _one_node_bytes(AttributeParallelFinder(partition_attributes(8, 4)), a)
    bb = _one_node_bytes(AttributeParallelFinder(partition_attributes(16, 4)), b)
    assert ba == bb
    assert ba["partition-flags"] == 3 * 1000 / 8


def test_make_finder_names(small_regression):
    for name in StrategyConfig.NAMES:
        f = make_finder(StrategyConfig(name=name, machines=2), small_regression)
        assert f.find_split(small_regression, np.arange(small_regression.n_samples), 1,
                            TreeConfig()) is not None
