"""Voting-accuracy bound, Monte-Carlo voting experiments, communication cost
model and the quantized-histogram bias demonstration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binomtest, norm

from .cluster import WireSize, partition
from .core import RawDataset, Task, bin_dataset, compute_bin_mapper
from .gain import GainKind
from .strategies import (DataParallelFinder, PVTreeConfig, PVTreeFinder, QuantizeConfig,
                         QuantizedDataParallelFinder)
from .trainer import TreeConfig


# ---------------------------------------------------------------------------
# selection-probability lower bound

@dataclass(frozen=True)
class TheoremParams:
    """Either per-attribute failure masses ``deltas`` (for the attributes
    ranked k+1..d) or a per-worker success probability ``p``."""

    n_machines: int
    k: int = 1
    d: int = 1
    deltas: tuple | None = None
    p: float | None = None
    beta: float = 2.0

    def success_probability(self) -> float:
        if (self.deltas is None) == (self.p is None):
            raise ValueError("give exactly one of deltas / p")
        if self.deltas is not None:
            if any(x < 0 for x in self.deltas):
                raise ValueError("failure masses must be non-negative")
            p = 1.0 - math.fsum(self.deltas)
        else:
            p = self.p
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"success probability {p} outside [0, 1]")
        return p


def vote_threshold(n_machines: int, beta: float = 2.0) -> int:
    return math.floor(n_machines / beta) + 1


def _log_binomial_terms(p: float, n: int, m: np.ndarray) -> np.ndarray:
    return (gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1)
            + m * math.log(p) + (n - m) * math.log1p(-p))


def log_binomial_upper_tail(p: float, n: int, m0: int) -> float:
    """log P[Binomial(n, p) >= m0]; stays finite where the tail underflows."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p = {p} outside [0, 1]")
    m0 = max(m0, 0)
    if m0 > n:
        return -math.inf
    if m0 == 0 or p == 1.0:
        return 0.0
    if p == 0.0:
        return -math.inf
    return float(min(0.0, logsumexp(_log_binomial_terms(p, n, np.arange(m0, n + 1)))))


def binomial_upper_tail(p: float, n: int, m0: int) -> float:
    """P[Binomial(n, p) >= m0]. Tails above 1/2 are taken as one minus the
    lower tail, which keeps the result accurate (and monotone in p) near 1."""
    log_upper = log_binomial_upper_tail(p, n, m0)
    if log_upper < -math.log(2) or m0 <= 0 or p in (0.0, 1.0):
        return math.exp(log_upper)
    log_lower = float(logsumexp(_log_binomial_terms(p, n, np.arange(0, m0))))
    return float(-math.expm1(log_lower))


def theorem1_bound(params: TheoremParams | float, n_machines: int | None = None,
                   beta: float = 2.0) -> float:
    """Lower bound on the probability that voting keeps the best attribute.

    Sum over m >= floor(M / beta) + 1 of C(M, m) p^m (1 - p)^(M - m), where p
    is the chance a single worker ranks the best attribute in its local top-k.
    Accepts ``TheoremParams`` or a bare ``p`` with ``n_machines``.
    """
    if not isinstance(params, TheoremParams):
        params = TheoremParams(n_machines, p=float(params), beta=beta)
    p = params.success_probability()
    m = params.n_machines
    if m < 1:
        raise ValueError("n_machines must be >= 1")
    return binomial_upper_tail(p, m, vote_threshold(m, params.beta))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


# ---------------------------------------------------------------------------
# synthetic generators

@dataclass(frozen=True)
class StepGenerator:
    """Attributes iid uniform on [0, 1]; the label is a weighted sum of steps
    ``1[x_j > t_j]`` plus gaussian noise (regression) or that score passed
    through a noisy threshold (binary classification).

    Attributes are independent, so the population gain of attribute j at its
    step is known in closed form.
    """

    weights: tuple
    thresholds: tuple | None = None
    noise: float = 1.0
    task: str = "regression"

    def __post_init__(self):
        if self.thresholds is not None and len(self.thresholds) != len(self.weights):
            raise ValueError("one threshold per attribute")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")

    @classmethod
    def single_signal(cls, d: int, signal: float = 1.0, other: float = 0.0,
                      noise: float = 1.0, task: str = "regression") -> "StepGenerator":
        """Attribute 0 carries ``signal``; the rest carry ``other``."""
        return cls((signal,) + (other,) * (d - 1), noise=noise, task=task)

    @property
    def d(self) -> int:
        return len(self.weights)

    @property
    def steps(self) -> np.ndarray:
        if self.thresholds is None:
            return np.full(self.d, 0.5)
        return np.asarray(self.thresholds, dtype=np.float64)

    def _cut(self) -> float:
        return 0.5 * float(np.sum(np.asarray(self.weights) * (1 - self.steps)))

    def sample(self, n: int, rng: np.random.Generator) -> RawDataset:
        x = rng.random((n, self.d))
        score = (x > self.steps).astype(np.float64) @ np.asarray(self.weights, dtype=np.float64)
        eps = rng.standard_normal(n) if self.noise > 0 else np.zeros(n)
        if self.task == "regression":
            return RawDataset(x, score + self.noise * eps, Task.regression())
        y = (score + self.noise * eps > self._cut()).astype(np.float64)
        return RawDataset(x, y, Task.classification(2))

    def population_gains(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=np.float64)
        t = self.steps
        if self.task == "regression":
            return w * w * t * (1 - t)
        return self._population_information_gains()

    def _population_information_gains(self) -> np.ndarray:
        signal = np.flatnonzero(np.asarray(self.weights) != 0)
        if len(signal) > 16:
            raise ValueError("closed-form gains enumerate at most 16 signal attributes")
        w = np.asarray(self.weights, dtype=np.float64)[signal]
        up = 1 - self.steps[signal]
        combos = ((np.arange(2 ** len(signal))[:, None] >> np.arange(len(signal))) & 1)
        prob = np.prod(np.where(combos == 1, up, 1 - up), axis=1)
        margin = combos @ w - self._cut()
        if self.noise > 0:
            p1 = norm.cdf(margin / self.noise)
        else:
            p1 = (margin > 0).astype(np.float64)

        def h(p):
            p = np.clip(p, 0, 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                return -np.nan_to_num(p * np.log(p)) - np.nan_to_num((1 - p) * np.log(1 - p))

        h_root = h(np.sum(prob * p1))
        gains = np.zeros(self.d)
        for i, j in enumerate(signal):
            cond = 0.0
            for side in (0, 1):
                mask = combos[:, i] == side
                mass = prob[mask].sum()
                if mass > 0:
                    cond += mass * h(np.sum(prob[mask] * p1[mask]) / mass)
            gains[j] = h_root - cond
        return gains

    def best_attribute(self) -> int:
        gains = self.population_gains()
        best = np.flatnonzero(gains == gains.max())
        if len(best) != 1 or gains.max() <= 0:
            raise ValueError("generator has no unique most informative attribute")
        return int(best[0])

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "thresholds": self.steps.tolist(),
                "noise": self.noise, "task": self.task}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


# ---------------------------------------------------------------------------
# Monte-Carlo voting experiments

@dataclass
class VotingResult:
    n_per_worker: int
    n_machines: int
    k: int
    trials: int
    successes: int
    frequency: float
    ci: tuple
    local_hit_rate: float
    bound: float
    shortlist_frequency: float

    def to_dict(self) -> dict:
        return {"n_per_worker": self.n_per_worker, "machines": self.n_machines, "k": self.k,
                "trials": self.trials, "successes": self.successes,
                "frequency": self.frequency, "ci_low": self.ci[0], "ci_high": self.ci[1],
                "local_hit_rate": self.local_hit_rate, "bound": self.bound,
                "shortlist_frequency": self.shortlist_frequency}


def voting_probability_experiment(generator: StepGenerator, n_per_worker: int, n_machines: int,
                                  k: int, trials: int = 200, seed: int = 0, beta: float = 2.0,
                                  bin_count: int = 32, min_trials: int = 100) -> VotingResult:
    """Frequency with which one PV-Tree root split picks the population-best attribute.

    Every trial draws fresh data from its own substream of ``seed``. Also
    returns the rate at which single workers rank the best attribute in their
    local top-k, the bound evaluated at that plug-in rate, and how often the
    best attribute survived global voting (the event the bound covers).
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    best = generator.best_attribute()
    kind = GainKind.INFORMATION if generator.task == "classification" else GainKind.VARIANCE
    config = TreeConfig(max_depth=2, gain_kind=kind)
    pv = PVTreeConfig(k, beta)
    successes = hits = survived = 0
    for trial in range(trials):
        rng = trial_rng(seed, trial)
        raw = generator.sample(n_machines * n_per_worker, rng)
        data = bin_dataset(raw, compute_bin_mapper(raw, bin_count))
        cluster = partition(data, n_machines, int(rng.integers(2**31)))
        finder = PVTreeFinder(cluster, pv)
        split = finder.find_split(data, np.arange(data.n_samples), 1, config)
        successes += int(split is not None and split.attribute == best)
        survived += int(best in finder.last_round.shortlist)
        hits += sum(any(c.attribute == best for c in top) for top in finder.last_round.local_tops)
    p_hat = hits / (trials * n_machines)
    return VotingResult(n_per_worker, n_machines, k, trials, successes, successes / trials,
                        wilson_interval(successes, trials), p_hat,
                        theorem1_bound(p_hat, n_machines, beta), survived / trials)


def machines_tradeoff_experiment(generator: StepGenerator, total_samples: int,
                                 machines: Sequence[int], k: int, trials: int = 200,
                                 seed: int = 0, **kwargs) -> list[VotingResult]:
    """One voting experiment per machine count with n = floor(N / M) per worker."""
    return [voting_probability_experiment(generator, total_samples // m, m, k, trials,
                                          seed, **kwargs)
            for m in machines]


# ---------------------------------------------------------------------------
# quantized-histogram bias

class ConstructionError(ValueError):
    pass


def step_variance_gain(split: float, step: float, height: float) -> float:
    """Population variance gain of splitting U(0, 1) at ``split`` when the
    label jumps by ``height`` at ``step``."""
    if not 0 < split < 1:
        return 0.0
    mean_left = height * max(0.0, split - step) / split
    mean_right = height * (1 - max(split, step)) / (1 - split)
    return split * (1 - split) * (mean_right - mean_left) ** 2


@dataclass(frozen=True)
class QuantizationBiasInstance:
    """Two uniform attributes with label steps at ``step_a`` and ``step_b``.

    With ``b`` equal-count groups the coarse edges sit at g / b. Attribute A
    (index 0) steps strictly inside a group, attribute B (index 1) on a
    group edge, and the heights are chosen so A wins on full histograms but
    loses once quantized.
    """

    b: int = 4
    fine_bins: int = 64
    step_a: float = 0.375
    step_b: float = 0.5
    height_a: float = 1.0
    height_b: float = math.sqrt(0.75)
    noise: float = 1.0

    def coarse_edges(self) -> np.ndarray:
        return np.arange(1, self.b) / self.b

    def population_gains(self, grid: int = 20001) -> dict:
        fine = np.linspace(0, 1, grid)[1:-1]
        vg_a = max(step_variance_gain(s, self.step_a, self.height_a) for s in fine)
        vg_b = max(step_variance_gain(s, self.step_b, self.height_b) for s in fine)
        coarse = self.coarse_edges()
        vg_a_q = max(step_variance_gain(s, self.step_a, self.height_a) for s in coarse)
        vg_b_q = max(step_variance_gain(s, self.step_b, self.height_b) for s in coarse)
        out = {"vg_a": vg_a, "vg_b": vg_b, "vg_a_quantized": vg_a_q,
               "vg_b_quantized": vg_b_q, "f_a": abs(vg_a - vg_a_q), "f_b": abs(vg_b - vg_b_q)}
        return {k: float(v) for k, v in out.items()}

    def validate(self) -> dict:
        g = self.population_gains()
        if not g["vg_a"] > g["vg_b"] > g["vg_a_quantized"]:
            raise ConstructionError(f"need VG_A > VG_B > VG_A^b, got {g}")
        if not g["f_a"] > 0 or g["f_b"] > 1e-6:
            raise ConstructionError(f"step placement does not straddle the coarse edges: {g}")
        return g

    def sample(self, n: int, rng: np.random.Generator) -> RawDataset:
        x = rng.random((n, 2))
        y = (self.height_a * (x[:, 0] > self.step_a) + self.height_b * (x[:, 1] > self.step_b)
             + self.noise * rng.standard_normal(n))
        return RawDataset(x, y, Task.regression())

    def to_dict(self) -> dict:
        return {"b": self.b, "fine_bins": self.fine_bins, "step_a": self.step_a,
                "step_b": self.step_b, "height_a": self.height_a,
                "height_b": self.height_b, "noise": self.noise}


@dataclass
class BiasRow:
    n: int
    trials: int
    quantized_misselection: float
    quantized_ci: tuple
    full_misselection: float
    full_ci: tuple

    def to_dict(self) -> dict:
        return {"n": self.n, "trials": self.trials,
                "quantized_misselection": self.quantized_misselection,
                "quantized_ci_low": self.quantized_ci[0], "quantized_ci_high": self.quantized_ci[1],
                "full_misselection": self.full_misselection,
                "full_ci_low": self.full_ci[0], "full_ci_high": self.full_ci[1]}


def quantization_bias_experiment(instance: QuantizationBiasInstance, ns: Sequence[int],
                                 trials: int = 200, seed: int = 0,
                                 n_machines: int = 2) -> list[BiasRow]:
    """Per n, how often the root split lands on attribute B (the wrong one)
    under quantized histograms, with full histograms as the control."""
    instance.validate()
    config = TreeConfig(max_depth=2)
    rows = []
    for n in ns:
        wrong_q = wrong_f = 0
        for trial in range(trials):
            rng = trial_rng(seed, trial + 1_000_003 * int(n))
            raw = instance.sample(int(n), rng)
            data = bin_dataset(raw, compute_bin_mapper(raw, instance.fine_bins))
            pseed = int(rng.integers(2**31))
            root = np.arange(data.n_samples)
            q = QuantizedDataParallelFinder(partition(data, n_machines, pseed),
                                            QuantizeConfig(instance.b))
            f = DataParallelFinder(partition(data, n_machines, pseed))
            sq = q.find_split(data, root, 1, config)
            sf = f.find_split(data, root, 1, config)
            wrong_q += int(sq is None or sq.attribute != 0)
            wrong_f += int(sf is None or sf.attribute != 0)
        rows.append(BiasRow(int(n), trials, wrong_q / trials, wilson_interval(wrong_q, trials),
                            wrong_f / trials, wilson_interval(wrong_f, trials)))
    return rows


# ---------------------------------------------------------------------------
# communication cost model

@dataclass(frozen=True)
class CostModelInput:
    """``depth`` counts split levels, so a complete tree has 2**depth - 1
    split searches and every sample is re-partitioned ``depth`` times."""

    n_samples: int
    d: int
    n_machines: int = 8
    depth: int = 6
    bins: int = 255
    k: int = 15
    beta: float = 2.0
    b: int = 26
    wire: WireSize = field(default_factory=WireSize)

    def __post_init__(self):
        for name in ("n_samples", "d", "n_machines", "depth", "bins", "k", "b"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostEstimate:
    strategy: str
    total_bytes: float
    per_peer_bytes: float
    terms: dict

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "total_bytes": self.total_bytes,
                "per_peer_bytes": self.per_peer_bytes, "terms": self.terms}


def communication_cost_model(inp: CostModelInput, strategy: str) -> CostEstimate:
    """Closed-form bytes per complete tree.

    ``total_bytes`` follows the simulated cluster's metering (every payload
    counted once per receiving peer). ``per_peer_bytes`` divides out the
    M - 1 factor and is the figure comparable to a single-receiver table.
    """
    w = inp.wire
    nodes = 2 ** inp.depth - 1
    m = inp.n_machines
    if strategy == "sequential":
        terms = {}
    elif strategy == "attribute-parallel":
        terms = {"candidates": nodes * m * w.candidate,
                 "partition-flags": inp.depth * inp.n_samples * w.sample_flag}
    elif strategy == "data-parallel":
        terms = {"histograms": nodes * inp.d * inp.bins * w.histogram_bin,
                 "split-broadcast": nodes * w.candidate}
    elif strategy == "data-parallel-quantized":
        terms = {"quantize-counts": nodes * inp.d * inp.bins * w.count,
                 "histograms": nodes * inp.d * min(inp.b, inp.bins) * w.histogram_bin,
                 "split-broadcast": nodes * w.candidate}
    elif strategy == "pv-tree":
        g = PVTreeConfig(inp.k, inp.beta).global_size(inp.d)
        terms = {"local-vote": nodes * m * min(inp.k, inp.d) * w.candidate,
                 "histograms": nodes * g * inp.bins * w.histogram_bin,
                 "split-broadcast": nodes * w.candidate}
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    per_peer = float(sum(terms.values()))
    return CostEstimate(strategy, (m - 1) * per_peer, per_peer,
                        {k: float(v) for k, v in terms.items()})
