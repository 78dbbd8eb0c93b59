"""Fit the surrogate link to an effective-SNR grid.

Without --grid a synthetic grid is generated from known parameters (optionally
with uniform measurement noise) so the recovered values can be compared.
"""

import argparse
from pathlib import Path

from mtomgcs.fit import FIT_PARAMS, cmaes_fit, predicted_snr, read_grid_csv, synthetic_grid

TRUE = {"amp_nf": 6.17, "snr_trx": 20.78, "alpha": 0.183, "gamma": 0.986}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=Path, help="measured grid CSV (distance_km, power_dbm, snr_db)")
    ap.add_argument("--noise", type=float, default=0.0, help="uniform noise half-width (dB) for the synthetic grid")
    ap.add_argument("--method", choices=["cmaes", "nelder-mead"], default="cmaes")
    ap.add_argument("--budget", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    grid = read_grid_csv(args.grid) if args.grid else synthetic_grid(TRUE, noise_db=args.noise, seed=args.seed + 100)
    res = cmaes_fit(grid, seed=args.seed, budget=args.budget, method=args.method)
    print(f"{len(grid)} grid points, {res.n_evals} evaluations, max |error| {res.max_abs_error:.4f} dB")
    for name in FIT_PARAMS:
        truth = "" if args.grid else f"  (true {TRUE[name]})"
        print(f"  {name:8s} {getattr(res, name):8.3f}{truth}")
    worst = abs(predicted_snr(res.params, grid) - grid.snr).argmax()
    print(f"worst point: {grid.distance[worst]:g} km at {grid.launch_power[worst]:g} dBm")


if __name__ == "__main__":
    main()
