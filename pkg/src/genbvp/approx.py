"""Approximation of a problem by problems with polynomial data and multipoint conditions.

For a target (L0, B0) with B0 in canonical form, the k-th approximant keeps the
point terms alpha_s, replaces every coefficient and the right-hand side by its
degree-k Chebyshev projection, and replaces the integral term by the
Riemann-Stieltjes sum of `boundary.stieltjes_multipoint` over a dyadic
partition.  `convergence_study` solves the sequence and tabulates the errors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import boundary as bd
from . import funcspace as fs
from .bvpsolve import DEFAULT_TOL, BvProblem, PreparedOperator, operator_gap
from .errors import NeverWellPosed
from .odecore import OdeSystem
from .paramlab import loglog_slope, tends_to_zero


def default_cells(k: int) -> int:
    """Smallest power of two >= max(k, 1)^2."""
    return 1 << max(0, math.ceil(math.log2(max(k, 1) ** 2)))


@dataclass(frozen=True)
class ApproximationPlan:
    """Degrees k with the number of partition cells N(k) used at each.

    Partitions are uniform, so with power-of-two cell counts every point is a
    dyadic rational of [a, b].
    """

    target: BvProblem
    degrees: tuple
    cells: Optional[tuple] = None

    def __post_init__(self):
        degrees = tuple(int(k) for k in self.degrees)
        if not degrees or any(k < 0 for k in degrees) or any(b <= a for a, b in zip(degrees, degrees[1:])):
            raise ValueError("degrees must be non-negative and strictly increasing")
        cells = tuple(default_cells(k) for k in degrees) if self.cells is None else tuple(int(c) for c in self.cells)
        if len(cells) != len(degrees) or any(c < 1 for c in cells):
            raise ValueError("need one positive cell count per degree")
        if any(b <= a for a, b in zip(cells, cells[1:])):
            raise ValueError("partition meshes must strictly decrease")
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "cells", cells)

    def partition(self, i: int) -> np.ndarray:
        return bd.dyadic_partition(self.target.interval, self.cells[i])


@dataclass
class ConvergenceRow:
    k: int
    cells: int
    coeff_error: float
    rhs_error: float
    boundary_gap: float
    solution_error: float
    inverse_gap: float
    well_posed: bool


def regulated_check(Phi: fs.FunctionRep) -> bool:
    """Whether Phi is regulated (finite one-sided limits everywhere).

    Chebyshev series, piecewise polynomials and step functions all are;
    only kernels declared rough (sampled stand-ins for non-regulated
    functions) are not.
    """
    return not Phi.rough


def build_approximant(target: BvProblem, k: int, partition) -> BvProblem:
    """k-th approximant: projected coefficients and rhs, multipoint boundary operator, same c."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    system = target.system
    coeffs = tuple(fs.project_polynomial(A, k) for A in system.coeffs)
    rhs = fs.project_polynomial(target.rhs, k)
    B = bd.multipoint_from_canonical(bd.to_canonical(target.boundary), partition)
    return BvProblem(OdeSystem(system.index, coeffs), rhs, B, target.target)


def _sobolev_distance(F: fs.FunctionRep, G: fs.FunctionRep, n: int, p: float) -> float:
    diff = F - G
    return fs.sobolev_norm([diff.derivative(s) for s in range(n + 1)], n, p)


def convergence_study(
    plan: ApproximationPlan,
    probes: int = 4,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
    spikes: Optional[int] = None,
) -> list:
    """Solve every approximant of the plan and tabulate its distance to the target.

    Singular approximants are kept as rows with `well_posed = False` and NaN
    errors.  The probe seed is shared by all k so that inverse gaps are
    comparable across the table.

    Raises:
        SingularProblem: if the target itself is singular.
        NeverWellPosed: if every approximant is singular.
    """
    target = plan.target
    index = target.index
    n, N, p = index.n, index.order, index.p
    prep0 = PreparedOperator(target.system, target.boundary, tol)
    y0 = prep0.solve(target.rhs, target.target)

    def one(i: int) -> ConvergenceRow:
        k = plan.degrees[i]
        approx = build_approximant(target, k, plan.partition(i))
        coeff_err = max(
            _sobolev_distance(Ak, A0, n, p) for Ak, A0 in zip(approx.system.coeffs, target.system.coeffs)
        )
        rhs_err = _sobolev_distance(approx.rhs, target.rhs, n, p)
        gap_b = float(np.linalg.norm(approx.boundary.apply(y0.derivs) - target.boundary.apply(y0.derivs)))
        prep = PreparedOperator(approx.system, approx.boundary, tol)
        if not prep.well_posed:
            nan = float("nan")
            return ConvergenceRow(k, plan.cells[i], coeff_err, rhs_err, gap_b, nan, nan, False)
        yk = prep.solve(approx.rhs, approx.target)
        sol_err = fs.sobolev_norm([u - v for u, v in zip(yk.derivs, y0.derivs)], N, p)
        inv = operator_gap(approx, target, probes, seed, spikes=spikes, tol=tol, prepared=(prep, prep0))
        return ConvergenceRow(k, plan.cells[i], coeff_err, rhs_err, gap_b, sol_err, inv, True)

    idx = range(len(plan.degrees))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, idx))
    else:
        rows = [one(i) for i in idx]
    if not any(row.well_posed for row in rows):
        raise NeverWellPosed("no approximant in the plan is well posed")
    return rows


def study_summary(rows: Sequence[ConvergenceRow], p: float, atol: float = 1e-12) -> dict:
    """Observed log-log slopes against the mesh width and the convergence verdicts."""
    good = [row for row in rows if row.well_posed]
    h = [1.0 / row.cells for row in good]
    ks = [row.k for row in good]
    summary = {
        "slopes_vs_mesh": {
            name: loglog_slope(h, [getattr(row, name) for row in good])
            for name in ("boundary_gap", "solution_error", "inverse_gap")
        },
        "slopes_vs_degree": {
            name: loglog_slope(ks, [getattr(row, name) for row in good])
            for name in ("coeff_error", "rhs_error")
        },
        "singular_degrees": [row.k for row in rows if not row.well_posed],
        "solution_converges": tends_to_zero(h, [row.solution_error for row in good], atol),
        "inverse_converges": tends_to_zero(h, [row.inverse_gap for row in good], atol),
    }
    summary["uniform_expected"] = bool(1 < p < math.inf) or None
    return summary
