"""Train the same GBDT with every split strategy and compare training loss
and communication per tree."""
import argparse

from pvtree.boosting import BoostConfig, train_gbdt
from pvtree.core import bin_dataset, compute_bin_mapper
from pvtree.data import SyntheticSpec, generate_synthetic
from pvtree.strategies import StrategyConfig
from pvtree.trainer import TreeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--d", type=int, default=50)
    ap.add_argument("--machines", type=int, default=8)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--b", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    weights = tuple(1.0 / (1 + j) for j in range(args.d))
    raw, _ = generate_synthetic(SyntheticSpec(args.n, args.d, weights=weights), args.seed)
    data = bin_dataset(raw, compute_bin_mapper(raw, 64))
    strategies = [StrategyConfig("sequential")] + [
        StrategyConfig(name, args.machines, args.seed, k=args.k, b=args.b)
        for name in ("data-parallel", "data-parallel-quantized", "attribute-parallel", "pv-tree")]
    print(f"{'strategy':<26}{'final loss':>12}{'KB per tree':>14}")
    for s in strategies:
        rep = train_gbdt(data, config=BoostConfig(n_trees=args.trees, tree=TreeConfig(max_depth=6),
                                                  strategy=s))
        total = sum(row["bytes"] for row in rep.byte_table)
        print(f"{s.name:<26}{rep.train_losses[-1]:>12.5f}{total / args.trees / 1e3:>14.1f}")


if __name__ == "__main__":
    main()
