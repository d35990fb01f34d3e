"""Split informativeness (information gain / variance gain) and split search."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Histogram, SplitCandidate, Task, decode_limbs

GAIN_TOLERANCE = 1e-12


class GainKind(enum.Enum):
    INFORMATION = "information"
    VARIANCE = "variance"

    @classmethod
    def for_task(cls, task: Task) -> "GainKind":
        return cls.INFORMATION if task.is_classification else cls.VARIANCE

    def check(self, task: Task) -> None:
        if (self is GainKind.INFORMATION) != task.is_classification:
            raise ValueError(f"{self.value} gain does not apply to a {task.kind} task")


@dataclass(frozen=True, eq=False)
class NodeStats:
    """Aggregate statistics of a node plus its empirical mass relative to the root."""

    total: np.ndarray
    node_weight: float

    @property
    def count(self) -> int:
        return int(self.total[0])

    @classmethod
    def from_histogram(cls, hist: Histogram, root_count: int) -> "NodeStats":
        total = hist.total()
        return cls(total, float(total[0]) / root_count)


def _xlogx(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def _side_term(side: np.ndarray, total: np.ndarray, classification: bool) -> np.ndarray:
    """One child's share of ``n * gain / node_weight``.

    Entropy: sum_c c log c - n log n. Variance: (s - n * mean)^2 / n with the
    node mean. Class terms are summed in sorted order, so a split and its
    mirror image (children swapped, or classes relabelled) tie exactly.
    """
    n = side[..., 0]
    safe = np.where(n > 0, n, 1.0)
    if classification:
        return np.sort(_xlogx(side[..., 1:]), axis=-1).sum(axis=-1) - _xlogx(n)
    mean = decode_limbs(total[1:4]) / total[0]
    dev = decode_limbs(side[..., 1:4]) - n * mean
    return np.where(n > 0, dev * dev / safe, 0.0)


def _gain(left: np.ndarray, right: np.ndarray, total: np.ndarray, node_weight: float,
          classification: bool) -> np.ndarray:
    n = total[0]
    both = _side_term(left, total, classification) + _side_term(right, total, classification)
    if classification:
        both = both + (_xlogx(np.asarray(n)) - np.sort(_xlogx(total[1:])).sum())
    gain = node_weight / n * both
    return np.where(gain < GAIN_TOLERANCE, np.maximum(gain, 0.0), gain)


def split_gain(kind: GainKind, left: np.ndarray, right: np.ndarray,
               node_weight: float) -> np.ndarray | float:
    """Weighted impurity reduction of splitting a node into ``left``/``right``.

    ``left`` and ``right`` are statistic rows (see ``core.stat_rows``);
    leading axes broadcast. Child weights are ``node_weight * n_child / n_node``.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if kind is GainKind.VARIANCE and left.shape[-1] != 7:
        raise ValueError("variance gain needs regression statistics")
    if kind is GainKind.INFORMATION and left.shape[-1] < 3:
        raise ValueError("information gain needs class-count statistics")
    left, right = np.broadcast_arrays(left, right)
    totals = left + right
    if np.any(totals[..., 0] < 1):
        raise ValueError("a split needs at least one sample")
    cls = kind is GainKind.INFORMATION
    flat_l = left.reshape(-1, left.shape[-1])
    flat_r = right.reshape(-1, right.shape[-1])
    gain = np.array([_gain(l, r, l + r, node_weight, cls) for l, r in zip(flat_l, flat_r)])
    gain = gain.reshape(left.shape[:-1])
    return float(gain) if np.ndim(gain) == 0 else gain


def _stack(hists: Sequence[Histogram]) -> tuple[np.ndarray, np.ndarray]:
    width = max(h.n_bins for h in hists)
    cols = hists[0].stats.shape[1]
    tensor = np.zeros((len(hists), width, cols))
    for i, h in enumerate(hists):
        tensor[i, :h.n_bins] = h.stats
    return tensor, np.array([h.n_bins for h in hists])


def scan_gains(tensor: np.ndarray, n_bins: np.ndarray, node: NodeStats,
               kind: GainKind, min_leaf: int = 1) -> np.ndarray:
    """Gain of every threshold of every attribute, shape (n_attrs, width - 1).

    Invalid thresholds (a child below ``min_leaf`` or past the attribute's
    last real bin) are -inf.
    """
    cls = kind is GainKind.INFORMATION
    if tensor.shape[1] < 2:
        return np.full((tensor.shape[0], 0), -np.inf)
    left = np.cumsum(tensor, axis=1)[:, :-1, :]
    right = node.total[None, None, :] - left
    valid = ((left[..., 0] >= min_leaf) & (right[..., 0] >= min_leaf)
             & (np.arange(tensor.shape[1] - 1)[None, :] < (n_bins - 1)[:, None]))
    gain = _gain(left, right, node.total, node.node_weight, cls)
    return np.where(valid, gain, -np.inf)


def best_from_gains(gains: np.ndarray, attributes: Sequence[int]) -> SplitCandidate | None:
    """Max-gain candidate; ties go to the lower attribute id, then lower threshold."""
    if gains.size == 0:
        return None
    order = np.argsort(np.asarray(attributes), kind="stable")
    g = gains[order]
    flat = int(np.argmax(g))
    row, thr = divmod(flat, g.shape[1])
    best = float(g[row, thr])
    if not best > 0.0:
        return None
    return SplitCandidate(int(np.asarray(attributes)[order[row]]), int(thr), best)


def find_best_split_for_attribute(hist: Histogram, node: NodeStats, kind: GainKind,
                                  min_leaf: int = 1) -> SplitCandidate | None:
    kind.check(hist.task)
    gains = scan_gains(hist.stats[None], np.array([hist.n_bins]), node, kind, min_leaf)
    return best_from_gains(gains, [hist.attribute])


def find_best_split(hists: Sequence[Histogram], node: NodeStats, kind: GainKind,
                    min_leaf: int = 1) -> SplitCandidate | None:
    if not hists:
        return None
    kind.check(hists[0].task)
    tensor, n_bins = _stack(hists)
    gains = scan_gains(tensor, n_bins, node, kind, min_leaf)
    return best_from_gains(gains, [h.attribute for h in hists])


def best_per_attribute(tensor: np.ndarray, n_bins: np.ndarray, attributes: Sequence[int],
                       node: NodeStats, kind: GainKind,
                       min_leaf: int = 1) -> list[SplitCandidate]:
    """The best valid split of each attribute (attributes without one are skipped)."""
    gains = scan_gains(tensor, n_bins, node, kind, min_leaf)
    out = []
    if gains.shape[1] == 0:
        return out
    thr = np.argmax(gains, axis=1)
    best = gains[np.arange(len(gains)), thr]
    for a, t, g in zip(attributes, thr, best):
        if g > 0.0:
            out.append(SplitCandidate(int(a), int(t), float(g)))
    return out
