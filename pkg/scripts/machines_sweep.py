"""Selection probability versus machine count with the total sample count fixed.

More machines add votes but leave each worker less data; on a small-gap
generator the second effect wins and the curve falls.
"""
import argparse
import json

from pvtree.analysis import StepGenerator, machines_tradeoff_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--total", type=int, default=512)
    ap.add_argument("--machines", default="1,2,4,8,16,32")
    ap.add_argument("--d", type=int, default=30)
    ap.add_argument("--other", type=float, default=0.5)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    gen = StepGenerator.single_signal(args.d, 1.0, args.other, 1.0)
    machines = [int(m) for m in args.machines.split(",")]
    rows = machines_tradeoff_experiment(gen, args.total, machines, args.k, args.trials, args.seed)
    for r in rows:
        print(f"M={r.n_machines:>3} n/worker={r.n_per_worker:>5}  freq {r.frequency:.3f}"
              f"  CI [{r.ci[0]:.3f}, {r.ci[1]:.3f}]  bound {r.bound:.3f}")
    print(json.dumps({"generator": gen.to_dict(), "total": args.total,
                      "rows": [r.to_dict() for r in rows]}, indent=2))


if __name__ == "__main__":
    main()
