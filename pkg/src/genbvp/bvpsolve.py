"""Characteristic matrix, d-characteristics and solution of boundary-value problems.

A problem is L y = f on (a, b), B y = c with L y = y^(r) + sum_j A_j y^(j).
Every solution of L y = f has the form y = sum_i Y_i d_i + y_p, so the
boundary condition reduces to the rm x rm linear system M d = c - B y_p with
the characteristic matrix M = [B Y_1 | ... | B Y_r].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from . import boundary as bd
from . import funcspace as fs
from . import odecore
from .errors import DimensionMismatch, SingularProblem
from .funcspace import FunctionRep, SobolevIndex
from .odecore import FundamentalSystem, OdeSystem

DEFAULT_TOL = 1e-10
RANK_TOL_FACTOR = 1e-10
MAX_CONDITION = 1e12
MARGIN = 100.0


@dataclass(frozen=True)
class BvProblem:
    """L y = f, B y = c.

    Attributes:
        system: coefficients of L.
        rhs: f, an m x 1 function.
        boundary: canonical, multipoint or fractional operator.
        target: c, a vector of length rm.
    """

    system: OdeSystem
    rhs: FunctionRep
    boundary: bd.BoundaryOperator
    target: np.ndarray

    def __post_init__(self):
        rm, m = self.system.r * self.system.m, self.system.m
        target = np.asarray(self.target).reshape(-1)
        if target.shape != (rm,):
            raise DimensionMismatch(f"target has {target.size} entries, expected rm={rm}")
        if self.rhs.shape != (m, 1):
            raise DimensionMismatch(f"rhs has shape {self.rhs.shape}, expected {(m, 1)}")
        if not self.rhs.interval.same_as(self.system.interval):
            raise DimensionMismatch("rhs lives on a different interval")
        if self.boundary.output_dim != rm or self.boundary.index.m != m:
            raise DimensionMismatch("boundary operator does not match the system")
        if self.boundary.index.r != self.system.r:
            raise DimensionMismatch("boundary operator built for a different order r")
        object.__setattr__(self, "target", target)

    @property
    def index(self) -> SobolevIndex:
        return self.system.index

    @property
    def interval(self) -> fs.Interval:
        return self.system.interval

    def replace(self, **changes) -> "BvProblem":
        fields = dict(system=self.system, rhs=self.rhs, boundary=self.boundary, target=self.target)
        fields.update(changes)
        return BvProblem(**fields)


@dataclass(frozen=True)
class CharMatrix:
    """Characteristic matrix with its numerical rank data.

    `near_threshold` marks rank decisions with a singular value within a
    factor MARGIN of `rank_tol`; such d-characteristics are fragile.
    """

    matrix: np.ndarray
    rank: int
    dim_ker: int
    dim_coker: int
    singular_values: np.ndarray
    rank_tol: float
    condition: float
    near_threshold: bool

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def well_posed(self) -> bool:
        return self.dim_ker == 0 and self.condition <= MAX_CONDITION

    @classmethod
    def from_matrix(cls, matrix, rank_tol: Optional[float] = None) -> "CharMatrix":
        M = np.atleast_2d(np.asarray(matrix))
        if M.shape[0] != M.shape[1]:
            raise DimensionMismatch(f"characteristic matrix must be square, got {M.shape}")
        k = M.shape[0]
        sv = sla.svdvals(M)
        if rank_tol is None:
            rank_tol = k * (sv[0] if len(sv) else 0.0) * RANK_TOL_FACTOR
        rank_tol = max(float(rank_tol), np.finfo(float).tiny)
        rank = int(np.sum(sv > rank_tol))
        # co-kernel: null space of the adjoint, computed on its own
        sv_adj = sla.svdvals(M.conj().T)
        dim_coker = int(np.sum(sv_adj <= rank_tol))
        condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        near = bool(np.any((sv > rank_tol / MARGIN) & (sv < rank_tol * MARGIN)))
        return cls(M, rank, k - rank, dim_coker, sv, rank_tol, condition, near)

    def to_dict(self) -> dict:
        return {
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix.astype(complex)],
            "rank": self.rank,
            "dim_ker": self.dim_ker,
            "dim_coker": self.dim_coker,
            "singular_values": [float(s) for s in self.singular_values],
            "rank_tol": self.rank_tol,
            "condition": self.condition,
            "near_threshold": self.near_threshold,
        }


@dataclass
class BvpSolution:
    """y with its derivatives up to n+r, the constants d and the residuals."""

    y: FunctionRep
    derivs: list
    constants: np.ndarray
    residual_ode: float
    residual_boundary: float
    char_matrix: Optional[CharMatrix] = field(default=None, repr=False)


def boundary_orders(B: bd.BoundaryOperator) -> int:
    """Highest derivative of the argument that B needs."""
    if isinstance(B, bd.CanonicalBoundaryOperator):
        return B.index.order
    if isinstance(B, bd.MultipointBoundaryOperator):
        return B.index.order - 1
    return int(np.ceil(B.terms[-1].order))


def characteristic_matrix(
    system: OdeSystem,
    B: bd.BoundaryOperator,
    tol: float = DEFAULT_TOL,
    rank_tol: Optional[float] = None,
    fundamental: Optional[FundamentalSystem] = None,
) -> CharMatrix:
    """M(L, B) = [B Y_1 | ... | B Y_r] with rank data from the SVD."""
    fsys = fundamental if fundamental is not None else odecore.solve_fundamental(system, tol)
    return CharMatrix.from_matrix(B.apply(fsys.derivs), rank_tol)


def d_characteristics(M: CharMatrix) -> tuple[int, int]:
    """(dim ker, dim coker) of the problem operator, read off the characteristic matrix."""
    return M.dim_ker, M.dim_coker


def _combine_derivs(ycat_derivs: Sequence[FunctionRep], d: np.ndarray, particular: Optional[Sequence[FunctionRep]]):
    d = np.asarray(d).reshape(len(d), -1)
    out = []
    for s, Yd in enumerate(ycat_derivs):
        term = Yd.rmul(d)
        if particular is not None:
            term = term + particular[s]
        out.append(term)
    return out


class PreparedOperator:
    """The pair (L, B) with its fundamental system and characteristic matrix cached.

    Solving for several data (f, c) reuses the homogeneous work.
    """

    def __init__(
        self,
        system: OdeSystem,
        boundary: bd.BoundaryOperator,
        tol: float = DEFAULT_TOL,
        rank_tol: Optional[float] = None,
    ):
        self.system = system
        self.boundary = boundary
        self.tol = tol
        self.fundamental = odecore.solve_fundamental(system, tol)
        self.char_matrix = characteristic_matrix(system, boundary, tol, rank_tol, self.fundamental)
        self._factor = None

    @property
    def well_posed(self) -> bool:
        return self.char_matrix.well_posed

    def require_well_posed(self) -> None:
        cm = self.char_matrix
        if not cm.well_posed:
            raise SingularProblem(cm.dim_ker, cm.dim_coker, cm.condition)

    def _solve_constants(self, rhs: np.ndarray) -> np.ndarray:
        self.require_well_posed()
        if self._factor is None:
            self._factor = sla.qr(self.char_matrix.matrix, pivoting=True)
        Q, R, piv = self._factor
        z = sla.solve_triangular(R, Q.conj().T @ rhs)
        out = np.empty_like(z)
        out[piv] = z
        return out

    def constants_for(self, rhs: np.ndarray) -> np.ndarray:
        """d solving M d = rhs (rhs may have several columns)."""
        return self._solve_constants(np.asarray(rhs))

    def solve(self, f: Optional[FunctionRep], c) -> BvpSolution:
        system, B = self.system, self.boundary
        c = np.asarray(c).reshape(-1, 1)
        self.require_well_posed()
        if f is None:
            particular = None
            residual_target = c
        else:
            particular = odecore.solve_particular_derivs(system, f, self.tol)
            residual_target = c - B.apply(particular)
        d = self._solve_constants(residual_target)
        derivs = _combine_derivs(self.fundamental.derivs, d, particular)
        r = system.r
        res_ode = odecore.ode_residual(system, derivs[:r], f)
        res_bc = float(np.linalg.norm(B.apply(derivs) - c))
        return BvpSolution(derivs[0], derivs, d.ravel(), res_ode, res_bc, self.char_matrix)


def solve_bvp(
    problem: BvProblem,
    tol: float = DEFAULT_TOL,
    rank_tol: Optional[float] = None,
) -> BvpSolution:
    """Solve L y = f, B y = c; raises SingularProblem when M(L, B) is singular at rank_tol."""
    prep = PreparedOperator(problem.system, problem.boundary, tol, rank_tol)
    return prep.solve(problem.rhs, problem.target)


# ---------------------------------------------------------------------------
# Operator gap by probing


def random_rhs(system: OdeSystem, rng: np.random.Generator, degree: int = 8) -> FunctionRep:
    """Random smooth m x 1 right-hand side with decaying Chebyshev coefficients."""
    m = system.m
    decay = 2.0 ** -np.arange(degree + 1)
    coeffs = rng.standard_normal((degree + 1, m, 1)) * decay[:, None, None]
    return fs.ChebyshevSeries(coeffs, system.interval)


def data_norm(system: OdeSystem, f: FunctionRep, c: np.ndarray) -> float:
    """||f||_{n,p} + |c| for data of the problem L y = f, B y = c."""
    n, p = system.index.n, system.index.p
    return fs.sobolev_norm([f.derivative(s) for s in range(n + 1)], n, p) + float(np.linalg.norm(c))


def _same_coefficients(A: OdeSystem, B: OdeSystem, rtol: float = 1e-13) -> bool:
    for X, Y in zip(A.coeffs, B.coeffs):
        diff = fs.lp_norm(X - Y, np.inf)
        if diff > rtol * max(1.0, fs.lp_norm(X, np.inf)):
            return False
    return True


def spike_probe(
    index: SobolevIndex,
    interval: fs.Interval,
    center: float,
    width: float,
    component: int = 0,
) -> list:
    """Derivative list of y with y^(n+r) a box of unit L_p norm around `center`.

    Lower derivatives vanish at a.  Such probes concentrate y^(n+r) where two
    boundary kernels differ, which is where the p = 1 operator norm is attained.
    """
    N, m, p = index.order, index.m, index.p
    lo = max(interval.a, center - width / 2)
    hi = min(interval.b, center + width / 2)
    w = hi - lo
    height = w ** (-1.0 / p) if np.isfinite(p) else 1.0
    breaks = fs._merge_breaks(np.array([interval.a, lo, hi, interval.b]), np.array([]))
    mids = (breaks[:-1] + breaks[1:]) / 2
    vals = np.zeros((len(mids), m, 1))
    vals[(mids > lo) & (mids < hi), component, 0] = height
    top = fs.StepFunction(breaks, vals)
    derivs = [top]
    for _ in range(N):
        derivs.append(derivs[-1].primitive())
    return derivs[::-1]


def _kernel_difference_peaks(A: bd.CanonicalBoundaryOperator, B: bd.CanonicalBoundaryOperator, count: int):
    """Centres, local widths and components where |Phi_A - Phi_B| is largest."""
    breaks = fs._merge_breaks(A.phi.breaks, B.phi.breaks)
    lo, hi = breaks[:-1], breaks[1:]
    x = np.linspace(0, 1, 5)[1:-1]
    t = (lo[:, None] + (hi - lo)[:, None] * x).ravel()
    diff = np.abs(A.phi(t) - B.phi(t))  # (P, rm, m)
    col = diff.max(axis=1)  # (P, m)
    order = np.argsort(col.max(axis=1))[::-1]
    picks = []
    used = set()
    for idx in order:
        cell = idx // len(x)
        if cell in used:
            continue
        used.add(cell)
        picks.append((t[idx], hi[cell] - lo[cell], int(np.argmax(col[idx]))))
        if len(picks) == count:
            break
    return picks


def operator_gap(
    problem_a: BvProblem,
    problem_b: BvProblem,
    probes: int = 8,
    seed: int = 0,
    spikes: Optional[int] = None,
    tol: float = DEFAULT_TOL,
    prepared: Optional[tuple] = None,
) -> float:
    """Probe-based lower bound for the norm of (L_a, B_a)^{-1} - (L_b, B_b)^{-1}.

    Random probes draw smooth data (f, c), solve both problems and take
    ||y_a - y_b||_{n+r,p} / (||f||_{n,p} + |c|).  When both problems share the
    differential operator and p = 1, spike probes are added: for y with
    y^(n+r) concentrated where the boundary kernels differ, the data of problem
    b is (L y, B_b y) and y_a - y = Y_a M_a^{-1} (B_b - B_a) y exactly.

    Args:
        spikes: number of spike probes; None selects 3 when p == 1 and the
            ODE coefficients coincide, otherwise 0.
        prepared: optional cached (PreparedOperator_a, PreparedOperator_b).
    """
    if prepared is None:
        prep_a = PreparedOperator(problem_a.system, problem_a.boundary, tol)
        prep_b = PreparedOperator(problem_b.system, problem_b.boundary, tol)
    else:
        prep_a, prep_b = prepared
    prep_a.require_well_posed()
    prep_b.require_well_posed()
    sys_a = problem_a.system
    index = sys_a.index
    N, n, p = index.order, index.n, index.p
    rm = sys_a.r * sys_a.m
    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(probes):
        f = random_rhs(sys_a, rng)
        c = rng.standard_normal(rm)
        ya = prep_a.solve(f, c).derivs
        yb = prep_b.solve(f, c).derivs
        diff = fs.sobolev_norm([u - v for u, v in zip(ya, yb)], N, p)
        gap = max(gap, diff / data_norm(sys_a, f, c))
    same = _same_coefficients(sys_a, problem_b.system)
    if spikes is None:
        spikes = 3 if (p == 1 and same) else 0
    if spikes and same:
        Ba = bd.to_canonical(problem_a.boundary)
        Bb = bd.to_canonical(problem_b.boundary)
        for center, width, comp in _kernel_difference_peaks(Ba, Bb, spikes):
            y = spike_probe(index, sys_a.interval, center, 0.05 * width, comp)
            Ly = odecore.apply_operator_derivs(sys_a, y, None, n)
            cb = problem_b.boundary.apply(y)
            norm = fs.sobolev_norm(Ly, n, p) + float(np.linalg.norm(cb))
            v = prep_a.constants_for(cb - problem_a.boundary.apply(y))
            diff = fs.sobolev_norm([Yd.rmul(v) for Yd in prep_a.fundamental.derivs], N, p)
            gap = max(gap, diff / norm)
    return gap
