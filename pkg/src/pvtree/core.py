"""Datasets, quantile binning, node histograms and the tree model.

Histogram label statistics are accumulated exactly. Every label is split
into three integer limbs on a fixed binary grid, and limbs are summed as
integers held in float64 (exact while partial sums stay below 2**53).
Sums are therefore independent of accumulation order, which is what lets
histograms built on different workers merge into bit-identical copies of
the single-machine histogram.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

DEFAULT_BIN_COUNT = 255

# limb grid: v ~= q0 + q1 * 2**-31 + q2 * 2**-62
_LIMB_SHIFT = 31
_LIMB_SCALE = float(2**_LIMB_SHIFT)
_MAX_EXACT = float(2**53)
_MAX_SAMPLES = 2**22


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    """Learning task: regression, or classification with ``n_classes`` labels."""

    kind: str
    n_classes: int = 0

    @classmethod
    def regression(cls) -> "Task":
        return cls("regression")

    @classmethod
    def classification(cls, n_classes: int) -> "Task":
        if n_classes < 2:
            raise ValueError("classification needs at least 2 classes")
        return cls("classification", int(n_classes))

    @property
    def is_classification(self) -> bool:
        return self.kind == "classification"

    @property
    def n_stat_columns(self) -> int:
        return 1 + self.n_classes if self.is_classification else 7

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        if d["kind"] == "regression":
            return cls.regression()
        return cls.classification(d["n_classes"])


@dataclass(frozen=True, eq=False)
class RawDataset:
    values: np.ndarray
    labels: np.ndarray
    task: Task
    query_ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError("values must be a 2-d matrix")
        if values.shape[0] < 1:
            raise ShapeError("dataset must hold at least one sample")
        if labels.shape != (values.shape[0],):
            raise ShapeError(
                f"expected {values.shape[0]} labels, got shape {labels.shape}")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(labels)):
            raise ValueError("missing or non-finite values are not supported")
        if self.task.is_classification:
            k = self.task.n_classes
            if np.any(labels != np.floor(labels)) or labels.min() < 0 or labels.max() >= k:
                raise ValueError(f"classification labels must be integers in [0, {k})")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class BinMapper:
    """Per-attribute inclusive upper bin edges (the last bin is open)."""

    boundaries: tuple
    bin_count: int = DEFAULT_BIN_COUNT

    @property
    def n_attributes(self) -> int:
        return len(self.boundaries)

    @cached_property
    def n_bins(self) -> np.ndarray:
        return np.array([len(b) + 1 for b in self.boundaries], dtype=np.int64)

    def transform_column(self, j: int, column: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.boundaries[j], column, side="left")

    def to_dict(self) -> dict:
        return {"bin_count": self.bin_count,
                "boundaries": [b.tolist() for b in self.boundaries]}

    @classmethod
    def from_dict(cls, d: dict) -> "BinMapper":
        return cls(tuple(np.asarray(b, dtype=np.float64) for b in d["boundaries"]),
                   int(d["bin_count"]))


def _attribute_edges(column: np.ndarray, bin_count: int) -> np.ndarray:
    distinct = np.unique(column)
    if len(distinct) <= bin_count:
        uppers = distinct[:-1]
    else:
        srt = np.sort(column)
        n = len(srt)
        ranks = np.ceil(np.arange(1, bin_count) * n / bin_count).astype(np.int64) - 1
        uppers = np.unique(srt[ranks])
        uppers = uppers[uppers < distinct[-1]]
    nexts = distinct[np.searchsorted(distinct, uppers, side="right")]
    edges = uppers + (nexts - uppers) / 2.0
    # a midpoint that rounds up onto the next value would swallow it
    edges = np.where(edges >= nexts, uppers, edges)
    return edges.astype(np.float64)


def compute_bin_mapper(data: RawDataset, bin_count: int = DEFAULT_BIN_COUNT) -> BinMapper:
    """Quantile bin edges per attribute, computed once on the full dataset."""
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    edges = tuple(_attribute_edges(data.values[:, j], bin_count)
                  for j in range(data.n_attributes))
    return BinMapper(edges, bin_count)


def encode_limbs(values: np.ndarray) -> np.ndarray:
    """Split reals into three integer limbs, shape (n, 3), exactly summable."""
    v = np.asarray(values, dtype=np.float64)
    q0 = np.round(v)
    r = v - q0
    q1 = np.round(r * _LIMB_SCALE)
    r = r - q1 / _LIMB_SCALE
    q2 = np.round(r * _LIMB_SCALE * _LIMB_SCALE)
    if len(v) and np.abs(q0).max() * len(v) >= _MAX_EXACT:
        raise OverflowError("label magnitudes too large for exact histogram sums")
    return np.stack([q0, q1, q2], axis=-1)


def decode_limbs(limbs: np.ndarray) -> np.ndarray:
    limbs = np.asarray(limbs, dtype=np.float64)
    return limbs[..., 0] + (limbs[..., 1] + limbs[..., 2] / _LIMB_SCALE) / _LIMB_SCALE


def stat_rows(labels: np.ndarray, task: Task) -> np.ndarray:
    """Per-sample statistic rows in the histogram column layout.

    Regression: [count, sum limbs (3), squared-sum limbs (3)].
    Classification: [count, one-hot class indicator (K)].
    """
    n = len(labels)
    if n > _MAX_SAMPLES:
        raise OverflowError(f"at most {_MAX_SAMPLES} samples are supported")
    rows = np.zeros((n, task.n_stat_columns), dtype=np.float64)
    rows[:, 0] = 1.0
    if task.is_classification:
        rows[np.arange(n), 1 + labels.astype(np.int64)] = 1.0
    else:
        rows[:, 1:4] = encode_limbs(labels)
        rows[:, 4:7] = encode_limbs(labels * labels)
    return rows


@dataclass(frozen=True, eq=False)
class BinnedDataset:
    bins: np.ndarray
    labels: np.ndarray
    task: Task
    mapper: BinMapper
    query_ids: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.bins.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.bins.shape[1]

    @cached_property
    def stats(self) -> np.ndarray:
        return stat_rows(self.labels, self.task)

    @cached_property
    def columns(self) -> np.ndarray:
        # attribute-major copy for per-attribute tallies
        return np.ascontiguousarray(self.bins.T)

    def with_labels(self, labels: np.ndarray, task: Task | None = None) -> "BinnedDataset":
        return BinnedDataset(self.bins, np.asarray(labels, dtype=np.float64),
                             task or self.task, self.mapper, self.query_ids)

    def subset(self, rows: np.ndarray) -> "BinnedDataset":
        qid = None if self.query_ids is None else self.query_ids[rows]
        return BinnedDataset(self.bins[rows], self.labels[rows], self.task, self.mapper, qid)


def bin_dataset(data: RawDataset, mapper: BinMapper) -> BinnedDataset:
    if mapper.n_attributes != data.n_attributes:
        raise ShapeError(
            f"mapper covers {mapper.n_attributes} attributes, data has {data.n_attributes}")
    dtype = np.uint8 if mapper.n_bins.max() <= 256 else np.uint16
    bins = np.empty(data.values.shape, dtype=dtype)
    for j in range(data.n_attributes):
        bins[:, j] = mapper.transform_column(j, data.values[:, j])
    return BinnedDataset(bins, data.labels.copy(), data.task, mapper, data.query_ids)


@dataclass(frozen=True)
class HistogramBin:
    count: int
    label_sum: float = 0.0
    label_sq_sum: float = 0.0
    class_counts: tuple = ()


@dataclass(frozen=True, eq=False)
class Histogram:
    """Per-bin statistics of one attribute at one node.

    ``stats`` has shape (n_bins, n_stat_columns); see :func:`stat_rows`.
    """

    attribute: int
    stats: np.ndarray
    task: Task

    @property
    def n_bins(self) -> int:
        return self.stats.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return self.stats[:, 0]

    @property
    def label_sum(self) -> np.ndarray:
        return decode_limbs(self.stats[:, 1:4])

    @property
    def label_sq_sum(self) -> np.ndarray:
        return decode_limbs(self.stats[:, 4:7])

    @property
    def class_counts(self) -> np.ndarray:
        return self.stats[:, 1:]

    def total(self) -> np.ndarray:
        return self.stats.sum(axis=0)

    def bin_at(self, i: int) -> HistogramBin:
        row = self.stats[i]
        if self.task.is_classification:
            return HistogramBin(int(row[0]), class_counts=tuple(int(c) for c in row[1:]))
        return HistogramBin(int(row[0]), float(decode_limbs(row[1:4])),
                            float(decode_limbs(row[4:7])))

    def __add__(self, other: "Histogram") -> "Histogram":
        if other.attribute != self.attribute or other.stats.shape != self.stats.shape:
            raise ShapeError("histograms are not bin-aligned")
        return Histogram(self.attribute, self.stats + other.stats, self.task)

    def equals(self, other: "Histogram") -> bool:
        return (self.attribute == other.attribute
                and np.array_equal(self.stats, other.stats))


# keeps n_node * chunk below this many cells per bincount call
_TALLY_CELLS = 1 << 21


def tally(data: BinnedDataset, samples: np.ndarray,
          attributes: Sequence[int] | None = None) -> np.ndarray:
    """Histogram tensor of shape (n_attrs, max_bins, n_stat_columns).

    Bins past an attribute's own bin count stay zero.
    """
    attrs = np.arange(data.n_attributes) if attributes is None else np.asarray(attributes)
    samples = np.asarray(samples, dtype=np.int64)
    n_bins = data.mapper.n_bins[attrs] if len(attrs) else np.zeros(0, np.int64)
    width = int(n_bins.max()) if len(attrs) else 1
    cols = data.task.n_stat_columns
    out = np.zeros((len(attrs), width, cols), dtype=np.float64)
    if len(samples) == 0 or len(attrs) == 0:
        return out
    rows = data.stats[samples]
    chunk = max(1, _TALLY_CELLS // len(samples))
    offsets = np.arange(chunk, dtype=np.int64) * width
    for start in range(0, len(attrs), chunk):
        block = attrs[start:start + chunk]
        keys = (data.columns[block][:, samples].astype(np.int64)
                + offsets[:len(block), None]).ravel()
        size = len(block) * width
        for c in range(cols):
            weights = np.tile(rows[:, c], len(block))
            out[start:start + len(block), :, c] = np.bincount(
                keys, weights=weights, minlength=size).reshape(len(block), width)
    return out


def histograms_from_tensor(tensor: np.ndarray, attributes: Sequence[int],
                           data: BinnedDataset) -> list[Histogram]:
    nb = data.mapper.n_bins
    return [Histogram(int(a), tensor[i, :nb[a]], data.task)
            for i, a in enumerate(attributes)]


def construct_histograms(data: BinnedDataset, node_samples) -> list[Histogram]:
    """One histogram per attribute over exactly ``node_samples``."""
    samples = np.asarray(node_samples, dtype=np.int64)
    if len(samples) and (samples.min() < 0 or samples.max() >= data.n_samples):
        raise IndexError("node sample index out of range")
    attrs = np.arange(data.n_attributes)
    return histograms_from_tensor(tally(data, samples), attrs, data)


@dataclass(frozen=True)
class SplitCandidate:
    attribute: int
    threshold_bin: int
    gain: float

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "threshold_bin": self.threshold_bin,
                "gain": self.gain}


class ModelMismatchError(ValueError):
    pass


@dataclass(eq=False)
class TreeModel:
    """Binary tree stored as parallel arrays in depth-first preorder.

    Leaves have ``attribute == -1``; internal nodes send ``bin <= threshold``
    to ``left``.
    """

    attribute: np.ndarray
    threshold: np.ndarray
    gain: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.attribute)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.attribute < 0))

    def depth(self) -> int:
        def rec(i):
            if self.attribute[i] < 0:
                return 1
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def apply(self, bins: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``bins``."""
        used = self.attribute[self.attribute >= 0]
        if len(used) and used.max() >= bins.shape[1]:
            raise ModelMismatchError(
                f"tree splits on attribute {used.max()}, data has {bins.shape[1]}")
        node = np.zeros(bins.shape[0], dtype=np.int64)
        rows = np.arange(bins.shape[0])
        while True:
            attr = self.attribute[node]
            active = attr >= 0
            if not active.any():
                return node
            go_left = bins[rows[active], attr[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def predict(self, data: BinnedDataset) -> np.ndarray:
        return self.value[self.apply(data.bins)]

    def equals(self, other: "TreeModel") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("attribute", "threshold", "left", "right", "value", "gain"))

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth,
                "attribute": self.attribute.tolist(),
                "threshold": self.threshold.tolist(),
                "gain": self.gain.tolist(),
                "left": self.left.tolist(),
                "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        ints = {k: np.asarray(d[k], dtype=np.int64)
                for k in ("attribute", "threshold", "left", "right")}
        return cls(gain=np.asarray(d["gain"], dtype=np.float64),
                   value=np.asarray(d["value"], dtype=np.float64),
                   max_depth=int(d["max_depth"]), **ints)

    @classmethod
    def leaf(cls, value: float, max_depth: int = 1) -> "TreeModel":
        return cls(np.array([-1]), np.array([-1]), np.array([0.0]), np.array([-1]),
                   np.array([-1]), np.array([float(value)]), max_depth)


def predict(model: TreeModel, data: BinnedDataset) -> np.ndarray:
    return model.predict(data)
