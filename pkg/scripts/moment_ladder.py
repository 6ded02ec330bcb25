"""Moment ladder of the bimodal mixture from output snapshots, over several seeds."""

import argparse

from ensemble_scope.experiments import moment_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--count", type=int, default=100_000)
    ap.add_argument("--pmax", type=int, default=3)
    args = ap.parse_args()

    base = moment_experiment(seed=None, p_max=args.pmax)
    print("noiseless relative error per order:",
          {p: f"{e:.1e}" for p, e in base.noiseless_errors.items()})
    print("seed  " + "  ".join(f"order {p}" for p in range(1, args.pmax + 1)))
    for seed in args.seeds:
        exp = moment_experiment(seed=seed, count=args.count, p_max=args.pmax)
        print(f"{seed:4d}  " + "  ".join(f"{exp.sampled_errors[p]:7.2%}" for p in range(1, args.pmax + 1)))


if __name__ == "__main__":
    main()
