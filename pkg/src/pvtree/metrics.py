"""Evaluation metrics: MSE, AUC and NDCG@T."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

NDCG_TRUNCATION = 10
MAX_RELEVANCE = 31


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalResult:
    metric: str
    value: float
    count: int

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value, "count": self.count}


def mse(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y > 0
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def dcg(relevance_in_rank_order, t: int) -> float:
    rel = np.minimum(np.asarray(relevance_in_rank_order, dtype=np.float64)[:t], MAX_RELEVANCE)
    return float(np.sum((2.0 ** rel - 1.0) / np.log2(np.arange(2, len(rel) + 2))))


def ndcg(scores, relevance, query_ids, t: int = NDCG_TRUNCATION) -> float:
    """Mean NDCG@t over queries; a query with no relevant document scores 1."""
    s = np.asarray(scores, dtype=np.float64)
    rel = np.asarray(relevance, dtype=np.float64)
    q = np.asarray(query_ids)
    if np.any(rel < 0) or np.any(rel != np.floor(rel)):
        raise ValueError("NDCG needs non-negative integer relevance labels")
    values = []
    for qid in np.unique(q):
        idx = np.flatnonzero(q == qid)
        order = idx[np.argsort(-s[idx], kind="stable")]
        ideal = dcg(np.sort(rel[idx])[::-1], t)
        values.append(1.0 if ideal == 0 else dcg(rel[order], t) / ideal)
    return float(np.mean(values))


def evaluate(predictions, labels, metric: str, query_ids=None,
             t: int = NDCG_TRUNCATION) -> EvalResult:
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    metric = metric.lower()
    if metric == "mse":
        return EvalResult("mse", mse(predictions, labels), len(labels))
    if metric == "auc":
        return EvalResult("auc", auc(predictions, labels), len(labels))
    if metric.startswith("ndcg"):
        if query_ids is None:
            raise ValueError("NDCG needs query ids")
        if "@" in metric:
            t = int(metric.split("@", 1)[1])
        return EvalResult(f"ndcg@{t}", ndcg(predictions, labels, query_ids, t),
                          len(np.unique(query_ids)))
    raise ValueError(f"unknown metric {metric!r}")
