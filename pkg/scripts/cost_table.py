"""Predicted bytes per depth-6 tree for the four (N, d) workloads, plus a
small simulated run checking the closed form against the byte meter."""
import argparse

import numpy as np

from pvtree.analysis import CostModelInput, communication_cost_model
from pvtree.cluster import partition, partition_attributes
from pvtree.core import RawDataset, Task, bin_dataset, compute_bin_mapper
from pvtree.strategies import (AttributeParallelFinder, DataParallelFinder, PVTreeConfig,
                               PVTreeFinder)
from pvtree.trainer import TreeConfig, build_tree

ROWS = [(10**9, 1200), (10**8, 1200), (10**9, 200), (10**8, 200)]
STRATEGIES = ["attribute-parallel", "data-parallel", "pv-tree"]


def predicted_table(machines, k):
    print(f"{'workload':<18}" + "".join(f"{s:>22}" for s in STRATEGIES))
    for n, d in ROWS:
        cells = [communication_cost_model(CostModelInput(n, d, machines, 6, k=k), s).per_peer_bytes
                 for s in STRATEGIES]
        print(f"N={n:.0e}, d={d:<5}" + "".join(f"{c / 1e6:>19.1f} MB" for c in cells))


def measured_check(n, d, machines, k, bins=64, depth=6):
    rng = np.random.default_rng(0)
    x = rng.random((n, d))
    raw = RawDataset(x, x.sum(axis=1) + 0.5 * rng.standard_normal(n), Task.regression())
    data = bin_dataset(raw, compute_bin_mapper(raw, bins))
    finders = {"attribute-parallel": AttributeParallelFinder(partition_attributes(d, machines)),
               "data-parallel": DataParallelFinder(partition(data, machines, 0)),
               "pv-tree": PVTreeFinder(partition(data, machines, 0), PVTreeConfig(k))}
    print(f"\nsimulated n={n}, d={d}, M={machines}, k={k}, bins={bins}")
    for name, f in finders.items():
        build_tree(data, TreeConfig(max_depth=depth + 1), f)
        est = communication_cost_model(CostModelInput(n, d, machines, depth, bins, k), name)
        measured = f.cluster.meter.total()
        print(f"  {name:<20} meter {measured:>12.0f}  model {est.total_bytes:>12.0f}"
              f"  ratio {measured / est.total_bytes:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--machines", type=int, default=8)
    ap.add_argument("--k", type=int, default=15)
    args = ap.parse_args()
    predicted_table(args.machines, args.k)
    measured_check(20_000, 40, 4, 3)


if __name__ == "__main__":
    main()
