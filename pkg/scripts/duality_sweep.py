"""Moment-reconstruction ambiguity space versus lifted unobservable subspace on random systems.

Prints every mismatch together with the condition number of the stacked
moment map, and a tally by (n, p).
"""

import argparse
import logging
from collections import Counter

import numpy as np

from ensemble_scope.experiments import duality_case, random_modal_system


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--systems", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--angle", type=float, default=1e-6)
    args = ap.parse_args()
    logging.disable(logging.WARNING)

    rng = np.random.default_rng(args.seed)
    total, bad = Counter(), Counter()
    for _ in range(args.systems):
        sys = random_modal_system(rng, int(rng.integers(2, 5)))
        for p in (2, 3):
            case = duality_case(sys, p)
            total[(case.n, case.p)] += 1
            if case.angle >= args.angle:
                bad[(case.n, case.p)] += 1
                print(f"mismatch n={case.n} p={case.p}: unobservable dim {case.unobservable_dim}, "
                      f"ambiguity dim {case.ambiguity_dim}, kept condition {case.condition_number:.2e}")
    for key in sorted(total):
        print(f"n={key[0]} p={key[1]}: {bad[key]}/{total[key]} mismatches")


if __name__ == "__main__":
    main()
