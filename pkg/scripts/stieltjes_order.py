"""Observed order of the Riemann-Stieltjes boundary conversion.

Compares the multipoint image of int Phi y' dt with the integral itself on
dyadic meshes for a smooth kernel, a Lipschitz kernel with a kink and a kernel
with a jump, and prints the gaps with their log-log slopes.

    python3 scripts/stieltjes_order.py --max-level 12
"""

import argparse

import numpy as np

from genbvp import boundary as bd
from genbvp import funcspace as fs
from genbvp.paramlab import loglog_slope

UNIT = fs.Interval(0.0, 1.0)
KINK = 1 / 3


def kernels():
    return {
        "smooth cos(t)": fs.from_callable(np.cos, UNIT),
        "kink |t - 1/3|": fs.piecewise_from_callable(lambda t: np.abs(t - KINK), [0, KINK, 1], 1),
        "jump 1[t >= 1/3]": fs.StepFunction([0, KINK, 1], [[[0.0]], [[1.0]]]),
    }


def gaps(phi, levels):
    index = fs.SobolevIndex(0, 1, 1, 2.0)
    B = bd.CanonicalBoundaryOperator(0.0, ([[1.0]],), phi, index)
    y = fs.from_callable(lambda t: np.exp(t) + np.sin(5 * t), UNIT)
    derivs = [y, y.derivative(1)]
    exact = B.apply(derivs)[0, 0]
    cells = [2**j for j in levels]
    return cells, [abs(bd.multipoint_from_canonical(B, bd.dyadic_partition(UNIT, n)).apply(derivs)[0, 0] - exact) for n in cells]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--min-level", type=int, default=3)
    parser.add_argument("--max-level", type=int, default=9)
    args = parser.parse_args()
    levels = range(args.min_level, args.max_level + 1)
    for name, phi in kernels().items():
        cells, g = gaps(phi, levels)
        print(f"{name}: slope {loglog_slope([1 / n for n in cells], g):.3f}")
        for n, v in zip(cells, g):
            print(f"  cells={n:6d}  gap={v:.3e}")


if __name__ == "__main__":
    main()
