"""Depth-first tree growth driven by a pluggable split finder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import BinnedDataset, SplitCandidate, TreeModel, tally
from .gain import GainKind, NodeStats, best_from_gains, scan_gains


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 6
    min_leaf: int = 1
    min_gain: float = 1e-12
    gain_kind: GainKind = GainKind.VARIANCE

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be >= 0")

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "min_gain": self.min_gain, "gain_kind": self.gain_kind.value}


class SplitFinder(Protocol):
    def find_split(self, data: BinnedDataset, samples: np.ndarray, depth: int,
                   config: TreeConfig) -> SplitCandidate | None: ...


class SequentialFinder:
    """Single-machine exact search over every attribute."""

    name = "sequential"

    def find_split(self, data, samples, depth, config):
        tensor = tally(data, samples)
        node = NodeStats(tensor[0].sum(axis=0), len(samples) / data.n_samples)
        gains = scan_gains(tensor, data.mapper.n_bins, node, config.gain_kind,
                           config.min_leaf)
        return best_from_gains(gains, np.arange(data.n_attributes))


def leaf_output(data: BinnedDataset, samples: np.ndarray) -> float:
    y = data.labels[samples]
    if data.task.is_classification:
        # argmax picks the lower class id on ties
        return float(np.argmax(np.bincount(y.astype(np.int64),
                                           minlength=data.task.n_classes)))
    return float(np.mean(y))


def build_tree(data: BinnedDataset, config: TreeConfig, finder: SplitFinder) -> TreeModel:
    if data.n_samples < 1:
        raise ValueError("cannot grow a tree on an empty dataset")
    config.gain_kind.check(data.task)
    attribute, threshold, gain, left, right, value = [], [], [], [], [], []

    def new_node():
        for arr in (attribute, threshold, left, right):
            arr.append(-1)
        gain.append(0.0)
        value.append(0.0)
        return len(attribute) - 1

    def grow(node_id, samples, depth):
        value[node_id] = leaf_output(data, samples)
        if depth >= config.max_depth or len(samples) < 2 * config.min_leaf:
            return
        split = finder.find_split(data, samples, depth, config)
        if split is None or split.gain < config.min_gain:
            return
        goes_left = data.bins[samples, split.attribute] <= split.threshold_bin
        attribute[node_id] = split.attribute
        threshold[node_id] = split.threshold_bin
        gain[node_id] = split.gain
        lid = new_node()
        left[node_id] = lid
        grow(lid, samples[goes_left], depth + 1)
        rid = new_node()
        right[node_id] = rid
        grow(rid, samples[~goes_left], depth + 1)

    grow(new_node(), np.arange(data.n_samples), 1)
    return TreeModel(np.array(attribute, dtype=np.int64), np.array(threshold, dtype=np.int64),
                     np.array(gain), np.array(left, dtype=np.int64),
                     np.array(right, dtype=np.int64), np.array(value), config.max_depth)
