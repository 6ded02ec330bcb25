"""Pre-normalization mass of the ART iterate versus sweeps, relaxation and data noise.

Compares sampled snapshots with noiseless analytic bin masses and with the
unconstrained iteration (no nonnegativity projection), which conserves mass.
"""

import argparse

import numpy as np

from ensemble_scope.ensemble import snapshots
from ensemble_scope.experiments import ART_SEED
from ensemble_scope.systems import bimodal_example, drift_pair
from ensemble_scope.tomo import PixelGrid, analytic_projections, projections_from_snapshots, solve_projections


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweeps", type=int, default=30)
    ap.add_argument("--count", type=int, default=100_000)
    args = ap.parse_args()

    sys, mix = drift_pair("observable"), bimodal_example()
    times = np.linspace(0.0, 3.0, 20)
    grid = PixelGrid(0.0, 3.0, 0.0, 3.0, 64, 64)
    sources = {
        "sampled": projections_from_snapshots(sys, snapshots(sys, mix, times, args.count, ART_SEED), 40, grid),
        "noiseless": analytic_projections(sys, mix, times, grid, 40),
    }
    marks = sorted({k for k in (1, 3, 5, 7, 10, 13, 20) if k < args.sweeps} | {args.sweeps})
    print("data       nonneg relax  " + "  ".join(f"k={k:<3d}" for k in marks))
    for name, projs in sources.items():
        for nonneg in (True, False):
            for relax in (1.0, 0.5):
                rec = solve_projections(projs, grid, sweeps=args.sweeps, relaxation=relax, nonneg=nonneg)
                masses = [h.sum() * grid.pixel_area for h in rec.history]
                print(f"{name:10s} {str(nonneg):6s} {relax:4.1f}   "
                      + "  ".join(f"{masses[k - 1]:.3f}" for k in marks))


if __name__ == "__main__":
    main()
