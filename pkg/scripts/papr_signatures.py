"""Optimize 256QAM at the four AWGN operating points and report PAPR and merging."""

import argparse
import logging
import time
from pathlib import Path

from mtomgcs.channel import AwgnChannel
from mtomgcs.constellation import brgc_qam, expand_quadrant, merged_fraction, moments, reduce_to_quadrant, write_constellation
from mtomgcs.optimizer import OptimizerConfig, optimize_restarts

POINTS = [(13.0, 3.0, 2.05), (15.0, 2.0, 2.24), (17.0, 1.0, 2.63), (19.0, 0.0, 3.03)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("results/papr"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out_dir.mkdir(parents=True, exist_ok=True)

    print("snr  n_d   PAPR  ref   merged  AIR     time")
    for snr, n_d, ref in POINTS:
        t0 = time.time()
        cfg = OptimizerConfig(n_d_target=n_d, seed=args.seed)
        q, _, trace = optimize_restarts(reduce_to_quadrant(brgc_qam(8)), AwgnChannel(snr), cfg, args.restarts)
        c = expand_quadrant(q)
        write_constellation(c, args.out_dir / f"qam256_snr{snr:g}_nd{n_d:g}.const")
        merged = merged_fraction(c, trace.data_positions) if n_d >= 1 else float("nan")
        print(f"{snr:4g} {n_d:4g}  {moments(c)[3]:5.3f}  {ref:4.2f}  {merged:6.2f}  "
              f"{max(trace.restart_scores):.4f}  {time.time() - t0:5.0f}s")


if __name__ == "__main__":
    main()
