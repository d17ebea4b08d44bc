"""Sliced-gaussian kernel against the continuum free kernel as the slice count grows.

Prints the relative error of one kernel entry for each slice count and the
fitted order in 1/slices.  Useful for seeing how the lattice spacing limits
the slicing refinement.
"""

import argparse

import numpy as np

from abnonlocal.kernels import ActionConfig, build_kernel, free_kernel_analytic, kernel_power
from abnonlocal.lattice import make_lattice


def study(size: int, spacing: float, total_time: float, slices, offset=(2, 1), backend="sliced-gaussian"):
    lat = make_lattice(size, size, spacing=spacing)
    act = ActionConfig.free(lat)
    c = size // 2
    a, b = lat.index(c, c), lat.index(c + offset[0], c + offset[1])
    exact = free_kernel_analytic(lat.position(a), lat.position(b), total_time)
    errors = []
    for n in slices:
        K = kernel_power(build_kernel(lat, act, total_time / n, backend), int(n))
        errors.append(abs(K[b, a] / spacing**2 - exact) / abs(exact))
    return np.array(errors)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=31)
    ap.add_argument("--spacing", type=float, default=0.25)
    ap.add_argument("--time", type=float, default=4.0)
    ap.add_argument("--slices", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--backend", default="sliced-gaussian")
    args = ap.parse_args(argv)

    slices = np.array(args.slices)
    errors = study(args.size, args.spacing, args.time, slices, backend=args.backend)
    print("slices,relative_error")
    for n, e in zip(slices, errors):
        print(f"{n},{e:.6e}")
    if np.all(np.isfinite(errors)) and np.all(errors > 0):
        order = -np.polyfit(np.log(slices), np.log(errors), 1)[0]
        print(f"# fitted order {order:.3f}")


if __name__ == "__main__":
    main()
