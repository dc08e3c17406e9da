"""Two-sided estimate for y' + mu y = 1, y(0) = 0 as mu -> 0.

    python3 scripts/two_sided.py --mus 1e-1 1e-2 1e-3 1e-4
"""

import argparse

import numpy as np

from genbvp import boundary as bd
from genbvp import funcspace as fs
from genbvp import odecore
from genbvp.bvpsolve import BvProblem
from genbvp.paramlab import ParameterFamily, loglog_slope, two_sided_estimate

UNIT = fs.Interval(0.0, 1.0)


def problem(mu, p):
    index = fs.SobolevIndex(0, 1, 1, p)
    system = odecore.OdeSystem(index, (fs.constant(mu, UNIT),))
    B = bd.point_conditions(index, UNIT, [[(0, 0.0, [1.0])]])
    return BvProblem(system, fs.constant(1.0, UNIT), B, np.zeros(1))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mus", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4])
    parser.add_argument("--p", type=float, default=2.0)
    args = parser.parse_args()
    points = [("0", 0.0)] + [(repr(mu), abs(mu)) for mu in args.mus]
    problems = {"0": problem(0.0, args.p), **{repr(mu): problem(mu, args.p) for mu in args.mus}}
    rep = two_sided_estimate(ParameterFamily(points, problems, "0"))
    print(f"{'mu':>10} {'d_tilde':>12} {'error':>12} {'ratio':>8}")
    for row in rep.rows:
        print(f"{row.label:>10} {row.d_tilde:12.4e} {row.solution_error:12.4e} {row.ratio:8.4f}")
    d = [r.distance for r in rep.rows]
    print(f"band [{rep.gamma_lo:.4f}, {rep.gamma_hi:.4f}], width ratio {rep.band_ratio:.4f}")
    print(f"slopes: error {loglog_slope(d, [r.solution_error for r in rep.rows]):.3f}, "
          f"discrepancy {loglog_slope(d, [r.d_tilde for r in rep.rows]):.3f}")
    print("verdict:", rep.verdict)


if __name__ == "__main__":
    main()
