"""Command line entry point: ``pvtree <subcommand> [flags]``.

Configs are JSON files; flags override individual fields. Reports are
JSON with a ``schema_version``; wall-clock timings go to a separate
``<report>.timing.json`` so the report itself is reproducible byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .boosting import BoostConfig, Ensemble, Loss, REPORT_SCHEMA_VERSION, train_gbdt
from .cluster import WireSize
from .core import DEFAULT_BIN_COUNT, bin_dataset, compute_bin_mapper
from .data import SyntheticSpec, generate_synthetic, load_dataset, save_csv, write_sidecar
from .gain import GainKind
from .metrics import evaluate
from .strategies import StrategyConfig
from .trainer import TreeConfig


class UsageError(ValueError):
    pass


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(obj, output: str | None) -> None:
    text = dumps(obj)
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


@dataclass
class RunConfig:
    task: str = "regression"
    train_path: str | None = None
    valid_path: str | None = None
    data_format: str | None = None
    generator: dict | None = None
    bins: int = DEFAULT_BIN_COUNT
    seed: int = 0
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    tree: TreeConfig = field(default_factory=TreeConfig)
    n_trees: int = 50
    learning_rate: float = 0.1
    loss: str = "squared_error"
    metric: str | None = None
    report_path: str | None = None
    model_path: str | None = None

    def __post_init__(self):
        if (self.train_path is None) == (self.generator is None):
            raise UsageError("give exactly one of a training data path or a generator spec")
        if self.bins < 2:
            raise UsageError("bins must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        s = dict(d.pop("strategy", {}))
        t = dict(d.pop("tree", {}))
        if "gain_kind" in t:
            t["gain_kind"] = GainKind(t["gain_kind"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(strategy=StrategyConfig(**s), tree=TreeConfig(**t), **d)

    def boost_config(self) -> BoostConfig:
        return BoostConfig(self.n_trees, self.learning_rate, Loss(self.loss), self.tree,
                           self.strategy, self.metric)


_STRATEGY_FLAGS = {"strategy": "name", "machines": "machines", "k": "k", "beta": "beta", "b": "b"}
_TREE_FLAGS = {"max_depth": "max_depth", "min_leaf": "min_leaf", "min_gain": "min_gain"}
_RUN_FLAGS = ("task", "train_path", "valid_path", "data_format", "bins", "seed", "n_trees",
              "learning_rate", "loss", "metric", "report_path", "model_path")


def _run_config(args) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
    base.setdefault("strategy", {})
    base.setdefault("tree", {})
    for flag, key in _STRATEGY_FLAGS.items():
        if getattr(args, flag) is not None:
            base["strategy"][key] = getattr(args, flag)
    for flag, key in _TREE_FLAGS.items():
        if getattr(args, flag) is not None:
            base["tree"][key] = getattr(args, flag)
    for key in _RUN_FLAGS:
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    if args.seed is not None:
        base["strategy"]["seed"] = args.seed
    if args.n is not None or args.d is not None:
        gen = dict(base.get("generator") or {})
        if args.n is not None:
            gen["n"] = args.n
        if args.d is not None:
            gen["d"] = args.d
        base["generator"] = gen
    try:
        return RunConfig.from_dict(base)
    except TypeError as e:
        raise UsageError(str(e)) from None


def _load_training(cfg: RunConfig):
    if cfg.train_path:
        raw = load_dataset(cfg.train_path, cfg.data_format, cfg.task)
    else:
        gen = dict(cfg.generator)
        gen.setdefault("task", cfg.task)
        try:
            spec = SyntheticSpec(**gen)
        except (TypeError, ValueError) as e:
            raise UsageError(f"invalid generator spec: {e}") from None
        raw, _ = generate_synthetic(spec, cfg.seed)
    mapper = compute_bin_mapper(raw, cfg.bins)
    train = bin_dataset(raw, mapper)
    valid = None
    if cfg.valid_path:
        valid = bin_dataset(load_dataset(cfg.valid_path, cfg.data_format, cfg.task), mapper)
    return train, valid


def cmd_train(args) -> int:
    cfg = _run_config(args)
    boost = cfg.boost_config()
    train, valid = _load_training(cfg)
    report = train_gbdt(train, valid, boost)
    doc = report.to_dict()
    _emit(doc, cfg.report_path)
    if cfg.report_path:
        Path(cfg.report_path + ".timing.json").write_text(dumps(report.timing()), encoding="utf-8")
    if cfg.model_path:
        Path(cfg.model_path).write_text(dumps(report.model.to_dict()), encoding="utf-8")
    return 0


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(args.n, args.d, args.task, args.signal, args.other, args.noise)
    data, sidecar = generate_synthetic(spec, args.seed)
    save_csv(data, args.output)
    write_sidecar(sidecar, args.output + ".gains.json")
    return 0


def _wire(args) -> WireSize:
    return WireSize(histogram_bin=args.bin_bytes, sample_flag=args.flag_bytes)


def cmd_cost_model(args) -> int:
    inp = analysis.CostModelInput(args.n, args.d, args.machines, args.depth, args.bins,
                                  args.k, args.beta, args.b, _wire(args))
    names = ([args.strategy] if args.strategy != "all" else
             ["attribute-parallel", "data-parallel", "data-parallel-quantized", "pv-tree"])
    rows = [analysis.communication_cost_model(inp, s).to_dict() for s in names]
    _emit({"schema_version": REPORT_SCHEMA_VERSION,
           "input": {"n": args.n, "d": args.d, "machines": args.machines, "depth": args.depth,
                     "bins": args.bins, "k": args.k, "beta": args.beta, "b": args.b,
                     "wire": inp.wire.to_dict()},
           "estimates": rows}, args.output)
    return 0


def _generator(args) -> analysis.StepGenerator:
    return analysis.StepGenerator.single_signal(args.d, args.signal, args.other, args.noise)


def cmd_vote_prob(args) -> int:
    gen = _generator(args)
    r = analysis.voting_probability_experiment(gen, args.n, args.machines, args.k, args.trials,
                                               args.seed, args.beta, args.bins)
    _emit({"schema_version": REPORT_SCHEMA_VERSION, "generator": gen.to_dict(),
           "seed": args.seed, "result": r.to_dict()}, args.output)
    return 0


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def cmd_machines_sweep(args) -> int:
    gen = _generator(args)
    rows = analysis.machines_tradeoff_experiment(gen, args.total, args.machines_list, args.k,
                                                 args.trials, args.seed, beta=args.beta,
                                                 bin_count=args.bins)
    _emit({"schema_version": REPORT_SCHEMA_VERSION, "generator": gen.to_dict(),
           "total": args.total, "seed": args.seed, "rows": [r.to_dict() for r in rows]},
          args.output)
    return 0


def cmd_quantize_bias(args) -> int:
    inst = analysis.QuantizationBiasInstance(b=args.b, fine_bins=args.fine_bins)
    gains = inst.validate()
    rows = analysis.quantization_bias_experiment(inst, args.ns, args.trials, args.seed,
                                                 args.machines)
    _emit({"schema_version": REPORT_SCHEMA_VERSION, "instance": inst.to_dict(),
           "population_gains": gains, "seed": args.seed,
           "rows": [r.to_dict() for r in rows]}, args.output)
    return 0


def cmd_evaluate(args) -> int:
    try:
        model = Ensemble.from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise UsageError(f"cannot read model {args.model}: {e}") from None
    raw = load_dataset(args.data, args.format, args.task)
    data = bin_dataset(raw, model.mapper)
    result = evaluate(model.predict(data), raw.labels, args.metric, raw.query_ids)
    _emit({"schema_version": REPORT_SCHEMA_VERSION, **result.to_dict()}, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvtree", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a GBDT model with a chosen split strategy")
    t.add_argument("--config")
    t.add_argument("--data", dest="train_path")
    t.add_argument("--valid", dest="valid_path")
    t.add_argument("--format", dest="data_format", choices=["csv", "libsvm"])
    t.add_argument("--task", choices=["regression", "classification"])
    t.add_argument("--n", type=int, help="generator sample count when no --data is given")
    t.add_argument("--d", type=int, help="generator attribute count")
    t.add_argument("--strategy", choices=StrategyConfig.NAMES)
    t.add_argument("--machines", type=int)
    t.add_argument("--k", type=int)
    t.add_argument("--beta", type=float)
    t.add_argument("--b", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--bins", type=int)
    t.add_argument("--trees", dest="n_trees", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--loss", choices=[l.value for l in Loss])
    t.add_argument("--max-depth", type=int)
    t.add_argument("--min-leaf", type=int)
    t.add_argument("--min-gain", type=float)
    t.add_argument("--metric")
    t.add_argument("--output", dest="report_path")
    t.add_argument("--model", dest="model_path")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gen-data", help="write a synthetic step-function dataset as CSV")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--task", choices=["regression", "classification"], default="regression")
    g.add_argument("--signal", type=float, default=1.0)
    g.add_argument("--other", type=float, default=0.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("cost-model", help="predicted communication bytes per tree")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--machines", type=int, default=8)
    c.add_argument("--depth", type=int, default=6)
    c.add_argument("--bins", type=int, default=DEFAULT_BIN_COUNT)
    c.add_argument("--k", type=int, default=15)
    c.add_argument("--beta", type=float, default=2.0)
    c.add_argument("--b", type=int, default=26)
    c.add_argument("--bin-bytes", type=int, default=20)
    c.add_argument("--flag-bytes", type=float, default=0.125)
    c.add_argument("--strategy", default="all",
                   choices=["all", "attribute-parallel", "data-parallel",
                            "data-parallel-quantized", "pv-tree"])
    c.add_argument("--output")
    c.set_defaults(func=cmd_cost_model)

    def experiment_flags(sp):
        sp.add_argument("--d", type=int, default=10)
        sp.add_argument("--signal", type=float, default=1.0)
        sp.add_argument("--other", type=float, default=0.5)
        sp.add_argument("--noise", type=float, default=1.0)
        sp.add_argument("--k", type=int, default=1)
        sp.add_argument("--beta", type=float, default=2.0)
        sp.add_argument("--bins", type=int, default=32)
        sp.add_argument("--trials", type=int, default=200)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output")

    v = sub.add_parser("vote-prob", help="Monte-Carlo PV-Tree best-attribute selection rate")
    v.add_argument("--n", type=int, required=True, help="samples per worker")
    v.add_argument("--machines", type=int, default=4)
    experiment_flags(v)
    v.set_defaults(func=cmd_vote_prob)

    m = sub.add_parser("machines-sweep", help="selection rate versus machine count at fixed N")
    m.add_argument("--total", type=int, required=True)
    m.add_argument("--machines-list", type=_int_list, default=[2, 8, 32])
    experiment_flags(m)
    m.set_defaults(func=cmd_machines_sweep)

    q = sub.add_parser("quantize-bias", help="misselection of quantized vs full histograms")
    q.add_argument("--b", type=int, default=4)
    q.add_argument("--fine-bins", type=int, default=64)
    q.add_argument("--ns", type=_int_list, default=[1000, 10000, 100000])
    q.add_argument("--trials", type=int, default=200)
    q.add_argument("--machines", type=int, default=2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--output")
    q.set_defaults(func=cmd_quantize_bias)

    e = sub.add_parser("evaluate", help="score a saved model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--format", choices=["csv", "libsvm"])
    e.add_argument("--task", choices=["regression", "classification"], default="regression")
    e.add_argument("--metric", default="mse")
    e.add_argument("--output")
    e.set_defaults(func=cmd_evaluate)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (UsageError, analysis.ConstructionError) as e:
        print(f"pvtree {args.command}: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to exit 1
        print(f"pvtree {args.command}: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
