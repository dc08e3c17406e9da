"""Strong versus uniform convergence at p = 1.

Target: y'' = e^t on [0, 1] with y(0) = 1 and y'(0) + int Phi0 y'' dt = 0.
The kernel Phi0(t) = t is approximated by midpoint step functions; a second
run uses a sign pattern on 3^9 cells declared rough.  Prints conditions
(a)-(d) for the step kernels and both convergence tables.

    python3 scripts/dichotomy_p1.py
"""

import argparse

import numpy as np

from genbvp import boundary as bd
from genbvp import funcspace as fs
from genbvp.approx import ApproximationPlan, convergence_study, regulated_check
from genbvp.bvpsolve import BvProblem
from genbvp.odecore import OdeSystem
from genbvp.paramlab import ParameterFamily, check_B_asymptotics

UNIT = fs.Interval(0.0, 1.0)
INDEX = fs.SobolevIndex(0, 2, 1, 1.0)


def target(phi0):
    system = OdeSystem(INDEX, (fs.zeros((1, 1), UNIT), fs.zeros((1, 1), UNIT)))
    alphas = (np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
    B = bd.CanonicalBoundaryOperator(0.0, alphas, fs.stack_rows([fs.zeros((1, 1), UNIT), phi0]), INDEX)
    return BvProblem(system, fs.from_callable(np.exp, UNIT), B, np.array([1.0, 0.0]))


def table(title, rows):
    print(title)
    print(f"{'k':>3} {'cells':>6} {'boundary_gap':>13} {'solution_error':>15} {'inverse_gap':>12}")
    for r in rows:
        print(f"{r.k:3d} {r.cells:6d} {r.boundary_gap:13.4e} {r.solution_error:15.4e} {r.inverse_gap:12.4e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, default=7)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    cells = tuple(2 ** (j + 2) for j in range(args.levels))
    degrees = tuple(range(1, args.levels + 1))

    phi0 = fs.polynomial([0, 1], UNIT)
    base = target(phi0)
    points = [("0", 0.0)] + [(str(n), 1.0 / n) for n in cells]
    problems = {"0": base, **{str(n): target(bd.stieltjes_kernel(phi0, bd.dyadic_partition(UNIT, n))) for n in cells}}
    asym = check_B_asymptotics(ParameterFamily(points, problems, "0"))
    print(f"(a) {asym.a}  (b) {asym.b}  (c) {asym.c}  (d) {asym.d}  strong {asym.strong}  uniform {asym.uniform}")
    print("sup |Phi_k - Phi_0|:", " ".join(f"{g:.3e}" for g in asym.phi_gaps))
    table("regulated kernel Phi0(t) = t", convergence_study(ApproximationPlan(base, degrees, cells), probes=2))

    signs = np.random.default_rng(args.seed).choice([-1.0, 1.0], size=(3**9, 1, 1))
    rough = fs.StepFunction(bd.dyadic_partition(UNIT, 3**9), signs, rough=True)
    print(f"rough kernel regulated_check: {regulated_check(rough)}")
    table("rough kernel", convergence_study(ApproximationPlan(target(rough), degrees, cells), probes=2))


if __name__ == "__main__":
    main()
