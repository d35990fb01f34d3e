"""First-order gradient boosting on top of the parallel tree learners."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .core import BinMapper, BinnedDataset, Task, TreeModel
from .gain import GainKind
from .metrics import auc, mse, ndcg
from .strategies import StrategyConfig, make_finder
from .trainer import TreeConfig, build_tree

MODEL_FORMAT = "pvtree-gbdt"
MODEL_VERSION = 1
REPORT_SCHEMA_VERSION = 1


class Loss(enum.Enum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC = "logistic"

    def value_of(self, labels: np.ndarray, raw: np.ndarray) -> float:
        if self is Loss.SQUARED_ERROR:
            return float(np.mean((labels - raw) ** 2))
        # log(1 + e^f) - y f, evaluated stably
        return float(np.mean(np.logaddexp(0.0, raw) - labels * raw))

    def negative_gradient(self, labels: np.ndarray, raw: np.ndarray) -> np.ndarray:
        if self is Loss.SQUARED_ERROR:
            return labels - raw
        return labels - sigmoid(raw)

    def base_score(self, labels: np.ndarray) -> float:
        if self is Loss.SQUARED_ERROR:
            return float(np.mean(labels))
        p = float(np.clip(np.mean(labels), 1e-6, 1 - 1e-6))
        return float(np.log(p / (1 - p)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(frozen=True)
class BoostConfig:
    n_trees: int = 50
    learning_rate: float = 0.1
    loss: Loss = Loss.SQUARED_ERROR
    tree: TreeConfig = field(default_factory=TreeConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    valid_metric: str | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.tree.gain_kind is not GainKind.VARIANCE:
            raise ValueError("boosted trees fit gradients with variance gain")

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "learning_rate": self.learning_rate,
                "loss": self.loss.value, "tree": self.tree.to_dict(),
                "strategy": self.strategy.to_dict(), "valid_metric": self.valid_metric}


@dataclass(eq=False)
class Ensemble:
    trees: list
    learning_rate: float
    base_score: float
    loss: Loss
    mapper: BinMapper

    def predict_raw(self, data: BinnedDataset) -> np.ndarray:
        out = np.full(data.n_samples, self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(data)
        return out

    def predict(self, data: BinnedDataset) -> np.ndarray:
        raw = self.predict_raw(data)
        return sigmoid(raw) if self.loss is Loss.LOGISTIC else raw

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "loss": self.loss.value, "learning_rate": self.learning_rate,
                "base_score": self.base_score, "mapper": self.mapper.to_dict(),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 pvtree model document")
        return cls([TreeModel.from_dict(t) for t in d["trees"]], d["learning_rate"],
                   d["base_score"], Loss(d["loss"]), BinMapper.from_dict(d["mapper"]))


@dataclass
class IterationRecord:
    iteration: int
    train_loss: float
    valid_metric: float | None
    bytes_by_phase: dict
    bytes_by_depth: dict
    seconds: float

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "train_loss": self.train_loss,
                "valid_metric": self.valid_metric,
                "bytes_by_phase": self.bytes_by_phase,
                "bytes_by_depth": {str(k): v for k, v in self.bytes_by_depth.items()}}


@dataclass(eq=False)
class TrainReport:
    config: BoostConfig
    iterations: list
    model: Ensemble
    byte_table: list

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.iterations]

    def to_dict(self) -> dict:
        """Deterministic part of the report; wall-clock lives in :meth:`timing`."""
        return {"schema_version": REPORT_SCHEMA_VERSION, "config": self.config.to_dict(),
                "iterations": [r.to_dict() for r in self.iterations],
                "bytes": self.byte_table}

    def timing(self) -> dict:
        return {"seconds_per_iteration": [r.seconds for r in self.iterations]}


def _valid_score(metric: str, model: Ensemble, valid: BinnedDataset) -> float:
    pred = model.predict(valid)
    if metric == "mse":
        return mse(pred, valid.labels)
    if metric == "auc":
        return auc(pred, valid.labels)
    if metric.startswith("ndcg"):
        t = int(metric.split("@", 1)[1]) if "@" in metric else 10
        return ndcg(pred, valid.labels, valid.query_ids, t)
    raise ValueError(f"unknown validation metric {metric!r}")


def train_gbdt(data: BinnedDataset, valid: BinnedDataset | None = None,
               config: BoostConfig | None = None, finder=None) -> TrainReport:
    """Grow ``config.n_trees`` regression trees on negative gradients.

    ``finder`` defaults to one built from ``config.strategy``; the same
    finder (and its cluster partition) serves every iteration.
    """
    config = config or BoostConfig()
    labels = data.labels
    if config.loss is Loss.LOGISTIC and not np.all((labels == 0) | (labels == 1)):
        raise ValueError("logistic loss needs labels in {0, 1}")
    if config.loss is Loss.SQUARED_ERROR and data.task.is_classification:
        raise ValueError("squared error needs a regression task")
    finder = finder or make_finder(config.strategy, data)
    meter_owner = getattr(finder, "cluster", None)

    base = config.loss.base_score(labels)
    model = Ensemble([], config.learning_rate, base, config.loss, data.mapper)
    raw = np.full(data.n_samples, base)
    records = []
    for it in range(config.n_trees):
        start = time.perf_counter()
        grad = config.loss.negative_gradient(labels, raw)
        gdata = data.with_labels(grad, Task.regression())
        tree = build_tree(gdata, config.tree, finder)
        model.trees.append(tree)
        raw = raw + config.learning_rate * tree.predict(gdata)
        vm = None
        if valid is not None and config.valid_metric:
            vm = _valid_score(config.valid_metric, model, valid)
        by_phase, by_depth = {}, {}
        if meter_owner is not None:
            by_phase = meter_owner.meter.by_phase()
            for e in meter_owner.trace:
                by_depth[e.depth] = by_depth.get(e.depth, 0.0) + e.bytes
        records.append(IterationRecord(it, config.loss.value_of(labels, raw), vm,
                                       by_phase, dict(sorted(by_depth.items())),
                                       time.perf_counter() - start))
    table = meter_owner.meter.table() if meter_owner is not None else []
    return TrainReport(config, records, model, table)
