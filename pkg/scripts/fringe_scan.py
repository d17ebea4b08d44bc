"""Fringe displacement versus flux on the reference double-slit geometry.

Writes one CSV row per alpha: alpha, displacement, unwrapped, displacement / period.
"""

import argparse
import csv
import sys

import numpy as np

from abnonlocal.observables import fringe_shift_scan, reference_geometry


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=9, help="alphas evenly spaced on [0, 1]")
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    args = ap.parse_args(argv)

    alphas = np.linspace(0.0, 1.0, args.points)
    scan = fringe_shift_scan(reference_geometry(0.0, args.size), alphas)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["alpha", "displacement", "unwrapped", "displacement_over_period"])
    for a, d, u in zip(scan.alphas, scan.displacements, scan.unwrapped):
        w.writerow([f"{a:.6f}", f"{d:.6f}", f"{u:.6f}", f"{d / scan.period:.6f}"])
    print(f"# period {scan.period:.4f} columns, slope {scan.slope_periods:.4f} periods per flux quantum",
          file=sys.stderr)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
