"""Parameter dependence of boundary-value problems.

A family is a finite sample {mu} of a metric space with a distinguished
point mu0 and the distances d(mu, mu0).  The checks below are finite
surrogates for the convergence conditions on such families: quantifiers over
all functions are replaced by fixed probe sets and limits by trends over the
sampled distances.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import boundary as bd
from . import funcspace as fs
from . import odecore
from .bvpsolve import DEFAULT_TOL, BvProblem, BvpSolution, PreparedOperator, characteristic_matrix
from .errors import DimensionMismatch, SingularProblem, UnsupportedExponent

ZERO_TOL = 1e-9
MIN_SLOPE = 0.25
BOUND_FACTOR = 10.0
PROBE_DEGREE = 12


@dataclass
class ParameterFamily:
    """Problems indexed by labels with distances to the base label mu0.

    Attributes:
        parameter_points: (label, distance) pairs; the base point has distance 0.
        problems: label -> problem.
        mu0: base label.
    """

    parameter_points: list
    problems: dict
    mu0: str

    def __post_init__(self):
        self.parameter_points = [(str(lab), float(dist)) for lab, dist in self.parameter_points]
        self.problems = {str(k): v for k, v in self.problems.items()}
        self.mu0 = str(self.mu0)
        labels = [lab for lab, _ in self.parameter_points]
        if len(set(labels)) != len(labels):
            raise ValueError("parameter labels must be distinct")
        if set(labels) != set(self.problems):
            raise ValueError("every parameter point needs exactly one problem")
        dist = dict(self.parameter_points)
        if self.mu0 not in dist or dist[self.mu0] != 0.0:
            raise ValueError("mu0 must be a parameter point at distance 0")
        if any(d < 0 for d in dist.values()):
            raise ValueError("distances must be non-negative")
        base = self.problems[self.mu0]
        for lab, prob in self.problems.items():
            if prob.index != base.index:
                raise DimensionMismatch(f"problem {lab!r} has index {prob.index}, expected {base.index}")
            if not prob.interval.same_as(base.interval):
                raise DimensionMismatch(f"problem {lab!r} lives on a different interval")

    @classmethod
    def from_sequence(cls, base: BvProblem, sequence: Sequence[tuple]) -> "ParameterFamily":
        """Family {0} u {k} with d(0, k) = 1/k from (k, problem) pairs."""
        points = [("0", 0.0)] + [(str(k), 1.0 / k) for k, _ in sequence]
        problems = {"0": base, **{str(k): p for k, p in sequence}}
        return cls(points, problems, "0")

    @property
    def base(self) -> BvProblem:
        return self.problems[self.mu0]

    @property
    def index(self) -> fs.SobolevIndex:
        return self.base.index

    def distance(self, label: str) -> float:
        return dict(self.parameter_points)[label]

    def others(self) -> list:
        """Non-base labels ordered by decreasing distance (approach to mu0)."""
        pts = [(lab, d) for lab, d in self.parameter_points if lab != self.mu0]
        return [lab for lab, _ in sorted(pts, key=lambda x: (-x[1], x[0]))]


def tends_to_zero(distances, values, atol: float = ZERO_TOL) -> bool:
    """Heuristic limit test as distance -> 0.

    True if the value at the smallest distance is below `atol`, or if the
    values decrease overall with a log-log slope above MIN_SLOPE.
    """
    d = np.asarray(distances, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return True
    order = np.argsort(-d)
    d, v = d[order], v[order]
    if not np.all(np.isfinite(v)):
        return False
    if v[-1] <= atol:
        return True
    if len(v) < 2 or v[-1] >= v[0]:
        return False
    keep = (v > 0) & (d > 0)
    if keep.sum() < 2:
        return False
    slope = np.polyfit(np.log(d[keep]), np.log(v[keep]), 1)[0]
    return bool(slope > MIN_SLOPE)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


# ---------------------------------------------------------------------------
# Condition (0) and the limit conditions


@dataclass
class Condition0Result:
    holds: bool
    dim_ker: int
    dim_coker: int
    condition: float
    near_threshold: bool


def check_condition0(
    family: ParameterFamily, tol: float = DEFAULT_TOL, rank_tol: Optional[float] = None
) -> Condition0Result:
    """The base homogeneous problem has only the trivial solution iff M(L(mu0), B(mu0)) is nonsingular."""
    base = family.base
    cm = characteristic_matrix(base.system, base.boundary, tol, rank_tol)
    return Condition0Result(cm.well_posed, cm.dim_ker, cm.dim_coker, cm.condition, cm.near_threshold)


@dataclass
class LimitReport:
    labels: list
    distances: list
    values: list  # per label; for limit I a list over l = 1..r
    converges: bool


def check_limit_condition_I(family: ParameterFamily, atol: float = ZERO_TOL) -> LimitReport:
    """||A_{r-l}(mu) - A_{r-l}(mu0)||_{n,p} for l = 1..r and every mu."""
    index = family.index
    n, r, p = index.n, index.r, index.p
    base = family.base.system.coeffs
    labels = family.others()
    table = []
    for lab in labels:
        coeffs = family.problems[lab].system.coeffs
        row = []
        for ell in range(1, r + 1):
            diff = coeffs[r - ell] - base[r - ell]
            row.append(fs.sobolev_norm([diff.derivative(s) for s in range(n + 1)], n, p))
        table.append(row)
    dists = [family.distance(lab) for lab in labels]
    conv = all(tends_to_zero(dists, [row[i] for row in table], atol) for i in range(r)) if table else True
    return LimitReport(labels, dists, table, conv)


def chebyshev_probes(index: fs.SobolevIndex, interval: fs.Interval, degree: int = PROBE_DEGREE) -> list:
    """Derivative list of the m x m(degree+1) probe matrix with columns T_d(t) e_k."""
    m, N = index.m, index.order
    coeffs = np.zeros((degree + 1, m, m * (degree + 1)))
    for k in range(m):
        for d in range(degree + 1):
            coeffs[d, k, k * (degree + 1) + d] = 1.0
    Y = fs.ChebyshevSeries(coeffs, interval)
    return [Y.derivative(s) for s in range(N + 1)]


def check_limit_condition_II(
    family: ParameterFamily,
    probe_functions: Optional[list] = None,
    degree: int = PROBE_DEGREE,
    atol: float = ZERO_TOL,
) -> LimitReport:
    """max over probes of |B(mu) y - B(mu0) y| for every mu.

    Args:
        probe_functions: derivative list [y, ..., y^(n+r)] of an m x q matrix
            whose columns are the probes; defaults to Chebyshev polynomials up
            to `degree` in each component.
    """
    probes = probe_functions or chebyshev_probes(family.index, family.base.interval, degree)
    ref = family.base.boundary.apply(probes)
    labels = family.others()
    vals = []
    for lab in labels:
        dev = family.problems[lab].boundary.apply(probes) - ref
        vals.append(float(np.max(np.linalg.norm(dev, axis=0))))
    dists = [family.distance(lab) for lab in labels]
    return LimitReport(labels, dists, vals, tends_to_zero(dists, vals, atol) if vals else True)


@dataclass
class BAsymptotics:
    """Conditions (a)-(d) on canonical boundary data and the resulting verdicts."""

    a: bool
    b: bool
    c: bool
    d: bool
    strong: bool
    uniform: bool
    distances: list
    alpha_gaps: list
    phi_norms: list
    primitive_gaps: list
    phi_gaps: list


def check_B_asymptotics(family: ParameterFamily, atol: float = ZERO_TOL) -> BAsymptotics:
    """Conditions (a)-(d) for the canonical forms of B(mu) as mu -> mu0.

    (a) alpha_s(mu) -> alpha_s(mu0); (b) ||Phi(mu)||_{p'} bounded;
    (c) int_a^t Phi(mu) -> int_a^t Phi(mu0) uniformly in t;
    (d) ||Phi(mu) - Phi(mu0)||_{p'} -> 0.  Strong convergence of B(mu) follows
    from (a), (b), (c); uniform convergence from (a), (d).
    """
    index = family.index
    if math.isinf(index.p):
        raise UnsupportedExponent("conditions (a)-(d) characterise convergence only for 1 <= p < inf")
    q = index.p_conj
    base = bd.to_canonical(family.base.boundary)
    base_prim = base.phi.primitive()
    labels = family.others()
    dists, ag, pn, cg, dg = [], [], [], [], []
    for lab in labels:
        Bm = bd.to_canonical(family.problems[lab].boundary)
        if Bm.t0 != base.t0:
            raise ValueError("canonical forms must share t0 to compare alpha coefficients")
        dists.append(family.distance(lab))
        ag.append(max(float(np.max(np.abs(x - y))) for x, y in zip(Bm.alphas, base.alphas)))
        pn.append(fs.lp_norm(Bm.phi, q))
        cg.append(fs.lp_norm(Bm.phi.primitive() - base_prim, np.inf))
        dg.append(fs.lp_norm(Bm.phi - base.phi, q))
    a = tends_to_zero(dists, ag, atol)
    ref = max(fs.lp_norm(base.phi, q), pn[0] if pn else 0.0, 1e-300)
    b = bool(all(np.isfinite(pn)) and max(pn, default=0.0) <= BOUND_FACTOR * ref)
    c = tends_to_zero(dists, cg, atol)
    d = tends_to_zero(dists, dg, atol)
    return BAsymptotics(a, b, c, d, a and b and c, a and d, dists, ag, pn, cg, dg)


# ---------------------------------------------------------------------------
# Discrepancy and the two-sided estimate


def discrepancy(problem: BvProblem, y0: BvpSolution) -> float:
    """||L(mu) y0 - f(mu)||_{n,p} + |B(mu) y0 - c(mu)| for the base solution y0."""
    index = problem.index
    n, p = index.n, index.p
    residual = odecore.apply_operator_derivs(problem.system, y0.derivs, problem.rhs, n)
    ode_part = fs.sobolev_norm(residual, n, p)
    bc_part = float(np.linalg.norm(problem.boundary.apply(y0.derivs).ravel() - problem.target))
    return ode_part + bc_part


@dataclass
class DiscrepancyRow:
    label: str
    distance: float
    d_tilde: float
    solution_error: float
    ratio: float
    solvable: bool


@dataclass
class DiscrepancyReport:
    rows: list
    gamma_lo: float
    gamma_hi: float
    trust_radius: float
    condition0_holds: bool
    limitI_norms: list
    limitII_probe_errors: list
    verdict: dict = field(default_factory=dict)

    @property
    def band_ratio(self) -> float:
        if not (self.gamma_lo > 0 and np.isfinite(self.gamma_hi)):
            return float("nan")
        return self.gamma_hi / self.gamma_lo


def _solve_one(problem: BvProblem, tol: float):
    try:
        return PreparedOperator(problem.system, problem.boundary, tol).solve(problem.rhs, problem.target)
    except SingularProblem:
        return None


def two_sided_estimate(
    family: ParameterFamily,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
    probe_degree: int = PROBE_DEGREE,
    solver: Optional[Callable] = None,
) -> DiscrepancyReport:
    """Solution errors against discrepancies over the family, with the empirical band.

    For each mu the mu-problem is solved and compared with the base solution:
    solution_error = ||y(mu0) - y(mu)||_{n+r,p} and d_tilde = discrepancy.
    The band [gamma_lo, gamma_hi] is the range of solution_error / d_tilde over
    labels inside the trust radius, the largest distance below which every
    sampled problem is solvable.

    Raises:
        SingularProblem: if the base problem is singular.
    """
    index = family.index
    N, p = index.order, index.p
    solve = solver or (lambda prob: _solve_one(prob, tol))
    cond0 = check_condition0(family, tol)
    base = family.base
    y0 = PreparedOperator(base.system, base.boundary, tol).solve(base.rhs, base.target)
    labels = family.others()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sols = list(pool.map(lambda lab: solve(family.problems[lab]), labels))
    else:
        sols = [solve(family.problems[lab]) for lab in labels]
    rows = []
    for lab, sol in zip(labels, sols):
        dist = family.distance(lab)
        dt = discrepancy(family.problems[lab], y0)
        if sol is None:
            rows.append(DiscrepancyRow(lab, dist, dt, float("nan"), float("nan"), False))
            continue
        err = fs.sobolev_norm([u - v for u, v in zip(y0.derivs, sol.derivs)], N, p)
        ratio = err / dt if dt > 0 else float("nan")
        rows.append(DiscrepancyRow(lab, dist, dt, err, ratio, True))
    bad = [row.distance for row in rows if not row.solvable]
    trust = min(bad) if bad else max((row.distance for row in rows), default=0.0)
    inside = [
        row for row in rows
        if row.solvable and (row.distance <= trust if not bad else row.distance < trust) and row.d_tilde > 0
    ]
    ratios = [row.ratio for row in inside if np.isfinite(row.ratio)]
    g_lo = min(ratios) if ratios else float("nan")
    g_hi = max(ratios) if ratios else float("nan")
    lim1 = check_limit_condition_I(family)
    lim2 = check_limit_condition_II(family, degree=probe_degree)
    verdict = {"condition0": cond0.holds, "limitI": lim1.converges, "limitII": lim2.converges}
    if math.isinf(p):
        verdict.update(a=None, b=None, c=None, d=None, strong=None, uniform=None)
    else:
        asym = check_B_asymptotics(family)
        verdict.update(a=asym.a, b=asym.b, c=asym.c, d=asym.d, strong=asym.strong, uniform=asym.uniform)
    return DiscrepancyReport(rows, g_lo, g_hi, trust, cond0.holds, lim1.values, lim2.values, verdict)
