"""Parallel split finders: PV-Tree voting, data-parallel (full and quantized
histograms) and attribute-parallel.

Worker 0 acts as coordinator wherever a single merged view is needed and
broadcasts the chosen split back to the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import SimulatedCluster, partition, partition_attributes
from .core import BinnedDataset, Histogram, SplitCandidate, tally
from .gain import (GainKind, NodeStats, best_from_gains, best_per_attribute, find_best_split,
                   scan_gains)
from .trainer import SequentialFinder, TreeConfig


@dataclass(frozen=True)
class PVTreeConfig:
    k: int = 5
    global_multiplier: float = 2.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.global_multiplier > 1:
            raise ValueError("global_multiplier must exceed 1")

    def global_size(self, n_attributes: int) -> int:
        return min(math.ceil(self.global_multiplier * self.k), n_attributes)

    def majority_threshold(self, n_machines: int) -> int:
        """Votes that guarantee survival of global voting: floor(M / beta) + 1."""
        return math.floor(n_machines / self.global_multiplier) + 1


@dataclass(frozen=True)
class QuantizeConfig:
    b: int = 16

    def __post_init__(self):
        if self.b < 2:
            raise ValueError("quantized histograms need b >= 2")


@dataclass
class VoteTally:
    votes: dict = field(default_factory=dict)
    best_gain: dict = field(default_factory=dict)

    def add(self, candidates: Sequence[SplitCandidate]) -> None:
        seen = set()
        for c in candidates:
            if c.attribute in seen:
                continue
            seen.add(c.attribute)
            self.votes[c.attribute] = self.votes.get(c.attribute, 0) + 1
            self.best_gain[c.attribute] = max(self.best_gain.get(c.attribute, -math.inf), c.gain)

    @property
    def total_votes(self) -> int:
        return sum(self.votes.values())

    def ranking(self) -> list[int]:
        return sorted(self.votes, key=lambda a: (-self.votes[a], -self.best_gain[a], a))


def _node_stats(tensor: np.ndarray, n_samples: int, root_count: int) -> NodeStats:
    return NodeStats(tensor[0].sum(axis=0), n_samples / root_count)


def local_vote(tensor: np.ndarray, n_bins: np.ndarray, node: NodeStats, kind: GainKind,
               k: int, min_leaf: int = 1,
               attributes: Sequence[int] | None = None) -> list[SplitCandidate]:
    """Top-k attribute-best local candidates, by gain descending then attribute id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    attrs = np.arange(len(tensor)) if attributes is None else attributes
    best = best_per_attribute(tensor, n_bins, attrs, node, kind, min_leaf)
    best.sort(key=lambda c: (-c.gain, c.attribute))
    return best[:k]


def global_vote(candidates: Sequence[Sequence[SplitCandidate]], global_size: int) -> list[int]:
    """Rank attributes by how many workers voted for them.

    Ties go to the larger best local gain, then the lower attribute id.
    """
    tally_ = VoteTally()
    for lst in candidates:
        tally_.add(lst)
    return tally_.ranking()[:global_size]


class _ClusterFinder:
    def __init__(self, cluster: SimulatedCluster):
        self.cluster = cluster

    def _local_tensors(self, data: BinnedDataset, samples: np.ndarray):
        """Each worker tallies histograms of all attributes over its share of the node."""
        attrs = np.arange(data.n_attributes)

        def step(rank):
            local = self.cluster.local_samples(rank, samples)
            tensor = tally(data, local)
            self.cluster.hold_histograms(rank, tensor, attrs, data)
            return local, tensor

        return self.cluster.run(step)

    def _finish(self, split: SplitCandidate | None) -> SplitCandidate | None:
        return self.cluster.broadcast_split(split, phase="split-broadcast")


class DataParallelFinder(_ClusterFinder):
    """Merge full-grained histograms of every attribute, then search exactly."""

    name = "data-parallel"

    def find_split(self, data, samples, depth, config):
        self.cluster.depth = depth
        self._local_tensors(data, samples)
        merged = self.cluster.gather_histograms(range(data.n_attributes), phase="histograms")
        node = NodeStats(merged[0].total(), len(samples) / data.n_samples)
        return self._finish(find_best_split(merged, node, config.gain_kind, config.min_leaf))


def quantization_edges(counts: np.ndarray, b: int) -> np.ndarray:
    """Upper fine-bin index of each of ``min(b, len(counts))`` groups.

    Adjacent bins are merged so groups carry near-equal total count: group g
    ends at the first bin whose cumulative count reaches g/b of the total,
    pushed apart so that every group keeps at least one bin.
    """
    counts = np.asarray(counts, dtype=np.float64)
    n = len(counts)
    b = min(b, n)
    cum = np.cumsum(counts)
    total = cum[-1] if n else 0.0
    edges = np.empty(b, dtype=np.int64)
    edges[-1] = n - 1
    prev = -1
    for g in range(1, b):
        if total > 0:
            # integer counts: compare cum * b >= g * total exactly
            e = int(np.searchsorted(cum * b, g * total, side="left"))
        else:
            e = (g * n) // b - 1
        e = max(e, prev + 1)
        e = min(e, n - 1 - (b - g))
        edges[g - 1] = e
        prev = e
    return edges


def quantize_stats(stats: np.ndarray, edges: np.ndarray) -> np.ndarray:
    starts = np.concatenate([[0], edges[:-1] + 1])
    return np.add.reduceat(stats, starts, axis=0)


def quantize_histogram(hist: Histogram, config: QuantizeConfig,
                       edges: np.ndarray | None = None) -> Histogram:
    """Merge adjacent bins into ``config.b`` groups of near-equal count."""
    if config.b > hist.n_bins:
        raise ValueError(f"cannot quantize {hist.n_bins} bins into {config.b}")
    if edges is None:
        edges = quantization_edges(hist.counts, config.b)
    return Histogram(hist.attribute, quantize_stats(hist.stats, edges), hist.task)


class QuantizedDataParallelFinder(_ClusterFinder):
    """Data-parallel search over b-bin quantized histograms.

    Group edges come from the merged per-bin counts (one count allreduce
    per node), so every worker quantizes identically. Only coarse group
    boundaries are searched; the returned threshold is the last fine bin of
    the chosen group.
    """

    name = "data-parallel-quantized"

    def __init__(self, cluster: SimulatedCluster, qconfig: QuantizeConfig):
        super().__init__(cluster)
        self.qconfig = qconfig

    def find_split(self, data, samples, depth, config):
        self.cluster.depth = depth
        d = data.n_attributes
        nb = data.mapper.n_bins
        locals_ = self._local_tensors(data, samples)
        counts = self.cluster.allreduce_counts(
            [np.concatenate([t[j, :nb[j], 0] for j in range(d)]) for _, t in locals_],
            phase="quantize-counts")
        offsets = np.concatenate([[0], np.cumsum(nb)])
        edges = [quantization_edges(counts[offsets[j]:offsets[j + 1]], self.qconfig.b)
                 for j in range(d)]
        qbins = np.array([len(e) for e in edges], dtype=np.int64)
        width = int(qbins.max())

        def quantize(tensor):
            out = np.zeros((d, width, tensor.shape[2]))
            for j in range(d):
                out[j, :qbins[j]] = quantize_stats(tensor[j, :nb[j]], edges[j])
            return out

        qtensors = self.cluster.run(lambda rank: quantize(locals_[rank][1]))
        merged = self.cluster.gather_histograms(range(d), phase="histograms",
                                                tensors=qtensors, bins_per_attribute=qbins)
        node = NodeStats(merged[0].total(), len(samples) / data.n_samples)
        coarse = find_best_split(merged, node, config.gain_kind, config.min_leaf)
        split = None
        if coarse is not None:
            split = SplitCandidate(coarse.attribute,
                                   int(edges[coarse.attribute][coarse.threshold_bin]),
                                   coarse.gain)
        return self._finish(split)


@dataclass
class VotingRound:
    local_tops: list
    shortlist: list
    split: SplitCandidate | None


class PVTreeFinder(_ClusterFinder):
    """Local top-k voting, global majority voting, then an exact search over
    the merged histograms of the shortlisted attributes."""

    name = "pv-tree"

    def __init__(self, cluster: SimulatedCluster, pvconfig: PVTreeConfig):
        super().__init__(cluster)
        self.pvconfig = pvconfig
        self.last_round: VotingRound | None = None

    def find_split(self, data, samples, depth, config):
        self.cluster.depth = depth
        cl = self.cluster
        k = self.pvconfig.k
        nb = data.mapper.n_bins
        locals_ = self._local_tensors(data, samples)

        def vote(rank):
            local, tensor = locals_[rank]
            if len(local) == 0:
                return []
            node = _node_stats(tensor, len(local), cl.local_root_count(rank))
            return local_vote(tensor, nb, node, config.gain_kind, k, config.min_leaf)

        tops = cl.run(vote)
        gathered = cl.allgather(tops, lambda c: cl.wire.candidate, phase="local-vote")
        shortlist = global_vote(gathered, self.pvconfig.global_size(data.n_attributes))
        split = None
        if shortlist:
            merged = cl.gather_histograms(shortlist, phase="histograms")
            node = NodeStats(merged[0].total(), len(samples) / data.n_samples)
            split = find_best_split(merged, node, config.gain_kind, config.min_leaf)
        self.last_round = VotingRound(gathered, shortlist, split)
        return self._finish(split)


class AttributeParallelFinder:
    """Each worker owns a block of attributes over all samples.

    Workers search their own attributes, the per-worker winners are
    all-gathered, and the owner of the global winner ships one bit per
    node sample so every worker can re-partition.
    """

    name = "attribute-parallel"

    def __init__(self, cluster: SimulatedCluster):
        if cluster.layout != "vertical":
            raise ValueError("attribute-parallel training needs a vertical cluster")
        self.cluster = cluster

    def find_split(self, data, samples, depth, config):
        cl = self.cluster
        cl.depth = depth
        nb = data.mapper.n_bins

        def step(rank):
            block = cl.attribute_blocks[rank]
            if len(block) == 0:
                return []
            tensor = tally(data, samples, block)
            node = NodeStats(tensor[0].sum(axis=0), len(samples) / data.n_samples)
            gains = scan_gains(tensor, nb[block], node, config.gain_kind, config.min_leaf)
            best = best_from_gains(gains, block)
            return [] if best is None else [best]

        gathered = cl.allgather(cl.run(step), lambda c: cl.wire.candidate, phase="candidates")
        flat = [c for lst in gathered for c in lst]
        if not flat:
            return None
        best = min(flat, key=lambda c: (-c.gain, c.attribute, c.threshold_bin))
        if best.gain >= config.min_gain:
            cl.exchange_partition_flags(len(samples), phase="partition-flags")
        return best


@dataclass(frozen=True)
class StrategyConfig:
    name: str = "sequential"
    machines: int = 1
    seed: int = 0
    k: int = 5
    beta: float = 2.0
    b: int = 16
    parallel: bool = False

    NAMES = ("sequential", "data-parallel", "data-parallel-quantized",
             "attribute-parallel", "pv-tree")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown strategy {self.name!r}; choose from {self.NAMES}")
        if self.machines < 1:
            raise ValueError("machines must be >= 1")

    def to_dict(self) -> dict:
        return {"name": self.name, "machines": self.machines, "seed": self.seed,
                "k": self.k, "beta": self.beta, "b": self.b}


def make_finder(strategy: StrategyConfig, data: BinnedDataset, wire=None):
    if strategy.name == "sequential":
        return SequentialFinder()
    if strategy.name == "attribute-parallel":
        return AttributeParallelFinder(partition_attributes(
            data.n_attributes, strategy.machines, wire, strategy.parallel))
    cluster = partition(data, strategy.machines, strategy.seed, wire, strategy.parallel)
    if strategy.name == "data-parallel":
        return DataParallelFinder(cluster)
    if strategy.name == "data-parallel-quantized":
        return QuantizedDataParallelFinder(cluster, QuantizeConfig(strategy.b))
    return PVTreeFinder(cluster, PVTreeConfig(strategy.k, strategy.beta))
