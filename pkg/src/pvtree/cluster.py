"""In-process simulation of M workers with metered collectives.

Bytes are metered as total payload crossing machine boundaries: a value
that M - 1 peers must receive is counted M - 1 times. Workers only see
each other's state through the collectives below.
"""
from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import BinnedDataset, Histogram, SplitCandidate, histograms_from_tensor


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class WireSize:
    attribute_index: int = 4
    bin_index: int = 4
    histogram_bin: int = 20
    sample_flag: float = 0.125
    gain: int = 8
    count: int = 4

    def __post_init__(self):
        for name, v in self.to_dict().items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def candidate(self) -> int:
        return self.attribute_index + self.bin_index + self.gain

    def to_dict(self) -> dict:
        return dict(attribute_index=self.attribute_index, bin_index=self.bin_index,
                    histogram_bin=self.histogram_bin, sample_flag=self.sample_flag,
                    gain=self.gain, count=self.count)


@dataclass(frozen=True)
class TraceEntry:
    op: str
    phase: str
    depth: int
    bytes: float


class ByteMeter:
    def __init__(self):
        self._rows: dict[tuple[str, str], list] = defaultdict(lambda: [0.0, 0])

    def add(self, phase: str, kind: str, nbytes: float) -> None:
        if nbytes < 0:
            raise ValueError("negative byte count")
        row = self._rows[(phase, kind)]
        row[0] += nbytes
        row[1] += 1

    def total(self, phase: str | None = None, kind: str | None = None) -> float:
        return sum(b for (p, k), (b, _) in self._rows.items()
                   if (phase is None or p == phase) and (kind is None or k == kind))

    def by_phase(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for (p, _), (b, _) in sorted(self._rows.items()):
            out[p] = out.get(p, 0.0) + b
        return out

    def table(self) -> list[dict]:
        return [{"phase": p, "kind": k, "bytes": b, "calls": c}
                for (p, k), (b, c) in sorted(self._rows.items())]

    def to_json(self) -> str:
        return json.dumps(self.table(), sort_keys=True)


class SimulatedCluster:
    """M workers over one dataset, laid out horizontally (sample blocks)
    or vertically (attribute blocks).

    ``parallel=True`` runs worker steps on a thread pool; results are
    collected in rank order, so traces match the sequential mode.
    """

    def __init__(self, partitions: Sequence[np.ndarray] | None = None, *,
                 attribute_blocks: Sequence[np.ndarray] | None = None,
                 n_samples: int | None = None, wire: WireSize | None = None,
                 parallel: bool = False):
        if (partitions is None) == (attribute_blocks is None):
            raise ValueError("give exactly one of partitions / attribute_blocks")
        self.wire = wire or WireSize()
        self.meter = ByteMeter()
        self.trace: list[TraceEntry] = []
        self.depth = 0
        self.parallel = parallel
        self.layout = "horizontal" if partitions is not None else "vertical"
        if partitions is not None:
            self.partitions = [np.sort(np.asarray(p, dtype=np.int64)) for p in partitions]
            allidx = np.concatenate(self.partitions)
            n = len(allidx) if n_samples is None else n_samples
            if len(allidx) != n or len(np.unique(allidx)) != n or (
                    n and (allidx.min() != 0 or allidx.max() != n - 1)):
                raise ValueError("partitions must be disjoint and cover every sample")
            self.owner = np.empty(n, dtype=np.int64)
            for rank, p in enumerate(self.partitions):
                self.owner[p] = rank
            self.attribute_blocks = None
        else:
            self.attribute_blocks = [np.asarray(b, dtype=np.int64) for b in attribute_blocks]
            self.partitions = None
            self.owner = None
        self.n_machines = len(self.partitions if partitions is not None else self.attribute_blocks)
        if self.n_machines < 1:
            raise ValueError("a cluster needs at least one worker")
        self._local: list[dict] = [dict() for _ in range(self.n_machines)]

    # -- worker execution -------------------------------------------------
    def run(self, step: Callable[[int], object]) -> list:
        """Run ``step(rank)`` on every worker; results in rank order."""
        ranks = range(self.n_machines)
        if self.parallel and self.n_machines > 1:
            with ThreadPoolExecutor(max_workers=self.n_machines) as pool:
                return list(pool.map(step, ranks))
        return [step(r) for r in ranks]

    def local_samples(self, rank: int, node_samples: np.ndarray) -> np.ndarray:
        if self.layout != "horizontal":
            return node_samples
        return node_samples[self.owner[node_samples] == rank]

    def local_root_count(self, rank: int) -> int:
        return len(self.partitions[rank])

    def hold_histograms(self, rank: int, tensor: np.ndarray, attributes: Sequence[int],
                        data: BinnedDataset) -> None:
        """Store a worker's local histograms for the current node."""
        self._local[rank] = {"tensor": tensor, "index": {int(a): i for i, a in enumerate(attributes)},
                             "data": data}

    # -- collectives ------------------------------------------------------
    def _record(self, op: str, phase: str, nbytes: float) -> None:
        self.meter.add(phase, op, nbytes)
        self.trace.append(TraceEntry(op, phase, self.depth, nbytes))

    def allgather(self, items: Sequence[Sequence], size_of: Callable[[object], float],
                  phase: str = "allgather") -> list[list]:
        if len(items) != self.n_machines:
            raise ProtocolError("allgather needs one list per worker")
        payload = sum(size_of(x) for lst in items for x in lst)
        self._record("allgather", phase, (self.n_machines - 1) * payload)
        return [list(lst) for lst in items]

    def allreduce_counts(self, counts: Sequence[np.ndarray], phase: str = "allreduce") -> np.ndarray:
        """Sum per-worker count arrays; each entry costs ``wire.count`` bytes."""
        if len(counts) != self.n_machines:
            raise ProtocolError("allreduce needs one array per worker")
        total = np.sum(np.stack(counts), axis=0)
        self._record("allreduce", phase, (self.n_machines - 1) * total.size * self.wire.count)
        return total

    def gather_histograms(self, attributes: Sequence[int], phase: str = "gather",
                          tensors: Sequence[np.ndarray] | None = None,
                          bins_per_attribute: Sequence[int] | None = None) -> list[Histogram]:
        """Bin-wise sum of the workers' held histograms for ``attributes``.

        ``tensors`` overrides the held histograms with per-worker arrays
        aligned to ``attributes`` (used for quantized histograms, whose bin
        counts are given by ``bins_per_attribute``).
        """
        attributes = [int(a) for a in attributes]
        if tensors is None:
            parts = []
            for rank, held in enumerate(self._local):
                if not held:
                    raise ProtocolError(f"worker {rank} holds no histograms")
                try:
                    rows = [held["index"][a] for a in attributes]
                except KeyError as e:
                    raise ProtocolError(f"worker {rank} lacks attribute {e.args[0]}") from None
                parts.append(held["tensor"][rows])
            data = self._local[0]["data"]
            nb = data.mapper.n_bins[attributes] if attributes else np.zeros(0, np.int64)
        else:
            parts = list(tensors)
            data = self._local[0]["data"]
            nb = np.asarray(bins_per_attribute, dtype=np.int64)
        merged = parts[0].copy()
        for p in parts[1:]:
            merged += p
        self._record("gather", phase,
                     (self.n_machines - 1) * float(nb.sum()) * self.wire.histogram_bin)
        return [Histogram(a, merged[i, :nb[i]], data.task) for i, a in enumerate(attributes)]

    def broadcast_split(self, split: SplitCandidate | None, phase: str = "broadcast"):
        nbytes = self.wire.candidate if split is not None else self.wire.attribute_index
        self._record("broadcast", phase, (self.n_machines - 1) * nbytes)
        return split

    def exchange_partition_flags(self, n_node_samples: int, phase: str = "flags") -> None:
        self._record("flags", phase,
                     (self.n_machines - 1) * n_node_samples * self.wire.sample_flag)

    def reset_meter(self) -> None:
        self.meter = ByteMeter()
        self.trace = []


def partition(data: BinnedDataset | int, n_machines: int, seed: int,
              wire: WireSize | None = None, parallel: bool = False) -> SimulatedCluster:
    """Shuffle samples by ``seed`` and cut them into near-equal blocks."""
    n = data if isinstance(data, int) else data.n_samples
    if n_machines < 1:
        raise ValueError("need at least one machine")
    if n_machines > n:
        raise ValueError(f"{n_machines} machines for {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return SimulatedCluster(np.array_split(perm, n_machines), n_samples=n, wire=wire,
                            parallel=parallel)


def partition_attributes(n_attributes: int, n_machines: int,
                         wire: WireSize | None = None, parallel: bool = False) -> SimulatedCluster:
    """Contiguous near-equal attribute blocks, one per worker."""
    if n_machines < 1 or n_machines > n_attributes:
        raise ValueError(f"cannot spread {n_attributes} attributes over {n_machines} machines")
    blocks = np.array_split(np.arange(n_attributes), n_machines)
    return SimulatedCluster(attribute_blocks=blocks, wire=wire, parallel=parallel)
