"""Dataset files (CSV, LibSVM) and synthetic data generation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import StepGenerator
from .core import RawDataset, Task


class FormatError(ValueError):
    pass


def _parse_float(token: str, path, lineno: int) -> float:
    if token.strip() == "":
        raise FormatError(f"{path}:{lineno}: missing value")
    try:
        v = float(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: cannot parse {token!r} as a number") from None
    if not np.isfinite(v):
        raise FormatError(f"{path}:{lineno}: missing or non-finite value {token!r}")
    return v


def _make_task(labels: np.ndarray, task: str) -> Task:
    if task == "regression":
        return Task.regression()
    if task == "classification":
        return Task.classification(max(2, int(labels.max()) + 1 if len(labels) else 2))
    raise ValueError(f"unknown task {task!r}")


def load_csv(path, task: str = "regression") -> RawDataset:
    """Header row with a ``label`` column; an optional ``qid`` column holds
    query ids; every other column is a numeric attribute."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if "label" not in header:
        raise FormatError(f"{path}:1: no 'label' column")
    li = header.index("label")
    qi = header.index("qid") if "qid" in header else None
    attr_cols = [i for i in range(len(header)) if i not in (li, qi)]
    values, labels, qids = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        labels.append(_parse_float(cells[li], path, lineno))
        values.append([_parse_float(cells[i], path, lineno) for i in attr_cols])
        if qi is not None:
            qids.append(cells[qi].strip())
    if not labels:
        raise FormatError(f"{path}: no data rows")
    y = np.array(labels)
    x = np.array(values, dtype=np.float64).reshape(len(labels), len(attr_cols))
    return RawDataset(x, y, _make_task(y, task), np.array(qids) if qi is not None else None)


def load_libsvm(path, task: str = "regression") -> RawDataset:
    """``label [qid:q] idx:val ...`` with 1-based indices; absent indices are 0."""
    rows, labels, qids = [], [], []
    max_index = 0
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_float(tokens[0], path, lineno))
        entries = {}
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise FormatError(f"{path}:{lineno}: malformed entry {tok!r}")
            if key == "qid":
                qids.append(val)
                continue
            try:
                idx = int(key)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad index {key!r}") from None
            if idx < 1:
                raise FormatError(f"{path}:{lineno}: indices are 1-based, got {idx}")
            entries[idx] = _parse_float(val, path, lineno)
            max_index = max(max_index, idx)
        rows.append(entries)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    if qids and len(qids) != len(rows):
        raise FormatError(f"{path}: qid given on some lines only")
    x = np.zeros((len(rows), max_index))
    for i, entries in enumerate(rows):
        for idx, v in entries.items():
            x[i, idx - 1] = v
    y = np.array(labels)
    return RawDataset(x, y, _make_task(y, task), np.array(qids) if qids else None)


def load_dataset(path, fmt: str | None = None, task: str = "regression") -> RawDataset:
    if fmt is None:
        fmt = "libsvm" if Path(path).suffix.lower() in (".svm", ".libsvm", ".txt") else "csv"
    if fmt == "csv":
        return load_csv(path, task)
    if fmt == "libsvm":
        return load_libsvm(path, task)
    raise ValueError(f"unknown data format {fmt!r}")


def save_csv(data: RawDataset, path) -> None:
    d = data.n_attributes
    header = ["label"] + (["qid"] if data.query_ids is not None else []) + [f"f{j}" for j in range(d)]
    out = [",".join(header)]
    for i in range(data.n_samples):
        cells = [repr(float(data.labels[i]))]
        if data.query_ids is not None:
            cells.append(str(data.query_ids[i]))
        cells.extend(repr(float(v)) for v in data.values[i])
        out.append(",".join(cells))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    task: str = "regression"
    signal: float = 1.0
    other: float = 0.0
    noise: float = 1.0
    weights: tuple | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.weights is not None and len(self.weights) != self.d:
            raise ValueError("weights must have one entry per attribute")

    def generator(self) -> StepGenerator:
        if self.weights is not None:
            return StepGenerator(tuple(self.weights), noise=self.noise, task=self.task)
        return StepGenerator.single_signal(self.d, self.signal, self.other, self.noise, self.task)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[RawDataset, dict]:
    """Draw ``spec.n`` samples; the sidecar records the population gains."""
    gen = spec.generator()
    data = gen.sample(spec.n, np.random.default_rng(seed))
    sidecar = {"generator": gen.to_dict(), "seed": seed, "n": spec.n,
               "population_gains": [float(g) for g in gen.population_gains()]}
    return data, sidecar


def write_sidecar(sidecar: dict, path) -> None:
    Path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
