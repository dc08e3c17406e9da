"""Functions on a finite interval: Chebyshev series, piecewise polynomials, step kernels.

Every function is matrix-valued (scalars are 1x1, vectors m x 1) and stored as
local Chebyshev coefficients on the cells of a partition of [a, b].  A global
Chebyshev series is the one-cell special case; a step function is the
degree-zero case.  Values may be real or complex.

Norms follow the convention that the norm of a vector- or matrix-valued
function is the sum of the norms of its entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
import scipy.fft
from numpy.polynomial import chebyshev as C

from .errors import DimensionMismatch, InvalidExponent, UnsupportedDerivative

QUAD_TOL = 1e-12
MAX_DEGREE = 4096


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"interval endpoints must be finite, got [{self.a}, {self.b}]")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def contains(self, t: float, atol: float = 1e-13) -> bool:
        slack = atol * self.length
        return self.a - slack <= t <= self.b + slack

    def same_as(self, other: "Interval") -> bool:
        scale = max(abs(self.a), abs(self.b), 1.0)
        return abs(self.a - other.a) <= 1e-13 * scale and abs(self.b - other.b) <= 1e-13 * scale


@dataclass(frozen=True)
class SobolevIndex:
    """Smoothness n, equation order r, system size m and exponent p."""

    n: int
    r: int
    m: int
    p: float

    def __post_init__(self):
        if self.n < 0 or self.r < 1 or self.m < 1:
            raise ValueError(f"need n >= 0, r >= 1, m >= 1; got n={self.n}, r={self.r}, m={self.m}")
        if not self.p >= 1:
            raise InvalidExponent(f"p must lie in [1, inf], got {self.p}")

    @property
    def p_conj(self) -> float:
        return conjugate_exponent(self.p)

    @property
    def order(self) -> int:
        """Highest derivative n + r controlled by the solution space."""
        return self.n + self.r


def conjugate_exponent(p: float) -> float:
    if p < 1:
        raise InvalidExponent(f"p must lie in [1, inf], got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


# ---------------------------------------------------------------------------
# Chebyshev and quadrature primitives


@lru_cache(maxsize=64)
def lobatto_points(n: int) -> np.ndarray:
    """Chebyshev extreme points cos(pi j / n), j = 0..n, on [-1, 1] (descending)."""
    if n == 0:
        return np.zeros(1)
    return np.cos(np.pi * np.arange(n + 1) / n)


def vals2coeffs(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Chebyshev coefficients of the interpolant through values at `lobatto_points`."""
    values = np.moveaxis(np.asarray(values), axis, 0)
    n = values.shape[0] - 1
    if n == 0:
        return np.moveaxis(values.copy(), 0, axis)
    coeffs = scipy.fft.dct(values, type=1, axis=0) / n
    coeffs[0] /= 2
    coeffs[-1] /= 2
    return np.moveaxis(coeffs, 0, axis)


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=64)
def clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes and weights with n points on [-1, 1].

    Exact for polynomials of degree <= n - 1.
    """
    if n == 1:
        return np.zeros(1), np.array([2.0])
    N = n - 1
    theta = np.pi * np.arange(n) / N
    x = np.cos(theta)
    w = np.zeros(n)
    interior = slice(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
        v -= np.cos(N * theta[interior]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
    w[interior] = 2.0 * v / N
    return x, w


def integrate_adaptive(
    fn: Callable[[np.ndarray], np.ndarray],
    breaks: Sequence[float],
    tol: float = QUAD_TOL,
    order: int = 20,
    max_level: int = 60,
) -> np.ndarray:
    """Adaptive composite Gauss-Legendre quadrature, vectorized over subintervals.

    `fn` maps a 1-D array of points to an array of shape (npts, k); the k
    columns are integrated simultaneously.  Each subinterval is bisected until
    the halves agree with the whole to within its share of `tol`.
    """
    breaks = np.asarray(breaks, dtype=float)
    total_len = breaks[-1] - breaks[0]
    lo, hi = breaks[:-1], breaks[1:]
    x, w = gauss_legendre(order)
    total = None

    def panel(l, r):
        mid, half = (l + r) / 2, (r - l) / 2
        pts = (mid[:, None] + half[:, None] * x).ravel()
        vals = np.asarray(fn(pts))
        vals = vals.reshape(len(l), order, -1)
        return np.einsum("ipk,p->ik", vals, w) * half[:, None]

    whole = panel(lo, hi)
    for level in range(max_level):
        mid = (lo + hi) / 2
        left, right = panel(lo, mid), panel(mid, hi)
        halves = left + right
        err = np.max(np.abs(halves - whole), axis=1)
        scale = np.max(np.abs(halves), axis=1)
        ok = (err <= tol * (hi - lo) / total_len + 1e-15 * scale) | ((hi - lo) < 1e-15 * total_len)
        if level == max_level - 1:
            ok[:] = True
        done = halves[ok].sum(axis=0)
        total = done if total is None else total + done
        if ok.all():
            break
        keep = ~ok
        lo, hi, mid = lo[keep], hi[keep], mid[keep]
        whole = np.concatenate([left[keep], right[keep]])
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    return total


def _clenshaw_cells(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate per-point Chebyshev series: x (P,), coeffs (P, d+1, R, C) -> (P, R, C)."""
    d = coeffs.shape[1] - 1
    xx = x[:, None, None]
    if d == 0:
        return coeffs[:, 0].copy()
    b1 = np.zeros_like(coeffs[:, 0])
    b2 = np.zeros_like(coeffs[:, 0])
    for k in range(d, 0, -1):
        b1, b2 = coeffs[:, k] + 2 * xx * b1 - b2, b1
    return coeffs[:, 0] + xx * b1 - b2


def _merge_breaks(*arrays: np.ndarray) -> np.ndarray:
    merged = np.unique(np.concatenate(arrays))
    span = merged[-1] - merged[0]
    keep = np.concatenate([[True], np.diff(merged) > 1e-14 * span])
    merged = merged[keep]
    merged[-1] = max(a[-1] for a in arrays if len(a))
    return merged


# ---------------------------------------------------------------------------
# Function representations


class PiecewisePolynomial:
    """Matrix-valued piecewise polynomial with local Chebyshev coefficients.

    Args:
        breaks: strictly increasing cell boundaries; first is a, last is b.
        coeffs: array of shape (ncells, degree + 1, rows, cols).
        rough: marks a sampled kernel declared non-regulated by its author.
    """

    kind = "piecewise"

    def __init__(self, breaks, coeffs, rough: bool = False):
        breaks = np.asarray(breaks, dtype=float)
        coeffs = np.asarray(coeffs)
        if coeffs.ndim != 4:
            raise DimensionMismatch(f"coeffs must have 4 axes, got shape {coeffs.shape}")
        if breaks.ndim != 1 or len(breaks) != coeffs.shape[0] + 1:
            raise DimensionMismatch("need len(breaks) == ncells + 1")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.iscomplexobj(coeffs):
            coeffs = coeffs.astype(float)
        self.breaks = breaks
        self.coeffs = coeffs
        self.rough = rough
        self.interval = Interval(float(breaks[0]), float(breaks[-1]))

    # -- basic attributes -------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[2], self.coeffs.shape[3]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def ncells(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dtype(self):
        return self.coeffs.dtype

    def __repr__(self):
        return (
            f"{type(self).__name__}(shape={self.shape}, degree={self.degree}, "
            f"cells={self.ncells}, interval=[{self.interval.a:g}, {self.interval.b:g}])"
        )

    # -- evaluation -------------------------------------------------------
    def cell_of(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, t, side="right") - 1
        return np.clip(idx, 0, self.ncells - 1)

    def _eval_in_cells(self, t: np.ndarray, cells: np.ndarray) -> np.ndarray:
        lo, hi = self.breaks[cells], self.breaks[cells + 1]
        x = (2 * t - lo - hi) / (hi - lo)
        if self.ncells == 1:
            return np.moveaxis(C.chebval(x, self.coeffs[0]), -1, 0)
        return _clenshaw_cells(x, self.coeffs[cells])

    def __call__(self, t):
        """Values at t; shape t.shape + (rows, cols).  Right-continuous at breakpoints."""
        arr = np.asarray(t, dtype=float)
        flat = arr.ravel()
        out = self._eval_in_cells(flat, self.cell_of(flat))
        return out.reshape(arr.shape + self.shape)

    def left_limit(self, t: float) -> np.ndarray:
        cell = np.searchsorted(self.breaks, t, side="left") - 1
        cell = np.clip(np.atleast_1d(cell), 0, self.ncells - 1)
        return self._eval_in_cells(np.atleast_1d(float(t)), cell)[0]

    # -- construction helpers ---------------------------------------------
    def _like(self, breaks, coeffs, rough=None) -> "PiecewisePolynomial":
        step = isinstance(self, StepFunction)
        return _make(breaks, coeffs, self.rough if rough is None else rough, step=step)

    def resample(self, breaks: np.ndarray, degree: int) -> np.ndarray:
        """Local Chebyshev coefficients of this function on a refinement `breaks`."""
        lo, hi = breaks[:-1], breaks[1:]
        cells = self.cell_of((lo + hi) / 2)
        x = lobatto_points(degree)
        t = (lo + hi)[:, None] / 2 + (hi - lo)[:, None] / 2 * x
        vals = self._eval_in_cells(t.ravel(), np.repeat(cells, len(x)))
        vals = vals.reshape(len(lo), len(x), *self.shape)
        return vals2coeffs(vals, axis=1)

    # -- calculus -----------------------------------------------------------
    def derivative(self, order: int = 1) -> "PiecewisePolynomial":
        if order < 0:
            raise ValueError("derivative order must be >= 0")
        if order == 0:
            return self
        widths = np.diff(self.breaks)
        if order > self.degree:
            coeffs = np.zeros((self.ncells, 1) + self.shape, dtype=self.dtype)
        else:
            coeffs = C.chebder(self.coeffs, m=order, axis=1)
            coeffs = coeffs * ((2.0 / widths) ** order)[:, None, None, None]
        return self._like(self.breaks, coeffs)

    def primitive(self) -> "PiecewisePolynomial":
        """Antiderivative vanishing at a; continuous across cells."""
        widths = np.diff(self.breaks)
        local = C.chebint(self.coeffs, m=1, lbnd=-1, axis=1) * (widths / 2)[:, None, None, None]
        right_vals = local.sum(axis=1)  # T_k(1) = 1
        offsets = np.concatenate(
            [np.zeros((1,) + self.shape, dtype=local.dtype), np.cumsum(right_vals, axis=0)[:-1]]
        )
        local[:, 0] += offsets
        return _make(self.breaks, local, self.rough)

    def integral(self) -> np.ndarray:
        """Exact definite integral over [a, b] as a (rows, cols) array."""
        x, w = clenshaw_curtis(self.degree + 1)
        widths = np.diff(self.breaks)
        local = np.einsum("kd,cd...->ck...", C.chebvander(x, self.degree), self.coeffs)
        return np.einsum("ck...,k,c->...", local, w, widths / 2)

    # -- algebra ------------------------------------------------------------
    def __neg__(self):
        return self._like(self.breaks, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, PiecewisePolynomial):
            return self.matmul(scalar)
        return self._like(self.breaks, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self.breaks, self.coeffs / scalar)

    def __add__(self, other):
        return _combine(self, other, np.add)

    def __sub__(self, other):
        return _combine(self, other, np.subtract)

    def __matmul__(self, other):
        return self.matmul(other)

    def matmul(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        """Pointwise matrix product self(t) @ other(t)."""
        if self.shape[1] != other.shape[0]:
            raise DimensionMismatch(f"cannot multiply {self.shape} by {other.shape}")
        return _combine(self, other, np.matmul, product=True)

    def lmul(self, matrix) -> "PiecewisePolynomial":
        """Constant matrix times function: matrix @ self(t)."""
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[1] != self.shape[0]:
            raise DimensionMismatch(f"cannot apply {matrix.shape} to {self.shape}")
        return self._like(self.breaks, np.einsum("ij,cdjk->cdik", matrix, self.coeffs))

    def rmul(self, matrix) -> "PiecewisePolynomial":
        """Function times constant matrix: self(t) @ matrix."""
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != self.shape[1]:
            raise DimensionMismatch(f"cannot apply {self.shape} to {matrix.shape}")
        return self._like(self.breaks, np.einsum("cdij,jk->cdik", self.coeffs, matrix))

    def block(self, rows=slice(None), cols=slice(None)) -> "PiecewisePolynomial":
        r = rows if isinstance(rows, slice) else [rows] if np.isscalar(rows) else rows
        c = cols if isinstance(cols, slice) else [cols] if np.isscalar(cols) else cols
        return self._like(self.breaks, self.coeffs[:, :, r][:, :, :, c])

    def conj(self) -> "PiecewisePolynomial":
        return self._like(self.breaks, np.conj(self.coeffs))


class ChebyshevSeries(PiecewisePolynomial):
    """Global Chebyshev series on [a, b]; the primary representation."""

    kind = "chebyshev"

    def __init__(self, coefficients, interval: Interval, rough: bool = False):
        coefficients = np.asarray(coefficients)
        if coefficients.ndim == 1:
            coefficients = coefficients[:, None, None]
        super().__init__([interval.a, interval.b], coefficients[None], rough=rough)

    @property
    def coefficients(self) -> np.ndarray:
        """Array of shape (degree + 1, rows, cols)."""
        return self.coeffs[0]

    @classmethod
    def from_values(cls, values, interval: Interval) -> "ChebyshevSeries":
        """Interpolant through values sampled at the mapped `lobatto_points`."""
        values = np.asarray(values)
        if values.ndim == 1:
            values = values[:, None, None]
        return cls(vals2coeffs(values, axis=0), interval)

    def points(self, n: int | None = None) -> np.ndarray:
        n = self.degree if n is None else n
        return map_from_unit(lobatto_points(n), self.interval)

    def truncate(self, degree: int) -> "ChebyshevSeries":
        c = self.coefficients
        if degree + 1 <= len(c):
            return ChebyshevSeries(c[: degree + 1].copy(), self.interval)
        pad = np.zeros((degree + 1 - len(c),) + c.shape[1:], dtype=c.dtype)
        return ChebyshevSeries(np.concatenate([c, pad]), self.interval)


class StepFunction(PiecewisePolynomial):
    """Right-continuous piecewise-constant kernel; never differentiated."""

    kind = "step"

    def __init__(self, breaks, values, rough: bool = False):
        values = np.asarray(values)
        if values.ndim == 1:
            values = values[:, None, None]
        super().__init__(breaks, values[:, None], rough=rough)

    @property
    def values(self) -> np.ndarray:
        return self.coeffs[:, 0]

    def derivative(self, order: int = 1):
        if order == 0:
            return self
        raise UnsupportedDerivative("step functions are not differentiated")


FunctionRep = PiecewisePolynomial
Derivs = Sequence[PiecewisePolynomial]


def _make(breaks, coeffs, rough=False, step=False) -> PiecewisePolynomial:
    breaks = np.asarray(breaks, dtype=float)
    if step and coeffs.shape[1] == 1:
        return StepFunction(breaks, coeffs[:, 0], rough=rough)
    if len(breaks) == 2:
        return ChebyshevSeries(coeffs[0], Interval(breaks[0], breaks[1]), rough=rough)
    return PiecewisePolynomial(breaks, coeffs, rough=rough)


def _combine(f: PiecewisePolynomial, g, op, product: bool = False) -> PiecewisePolynomial:
    if not isinstance(g, PiecewisePolynomial):
        raise TypeError(f"cannot combine function with {type(g).__name__}")
    if not f.interval.same_as(g.interval):
        raise DimensionMismatch(f"interval mismatch: {f.interval} vs {g.interval}")
    if not product and f.shape != g.shape:
        raise DimensionMismatch(f"shape mismatch: {f.shape} vs {g.shape}")
    rough = f.rough or g.rough
    step = isinstance(f, StepFunction) and isinstance(g, StepFunction)
    if f.ncells == g.ncells and np.array_equal(f.breaks, g.breaks) and not product:
        d = max(f.degree, g.degree)
        cf = _pad_degree(f.coeffs, d)
        cg = _pad_degree(g.coeffs, d)
        return _make(f.breaks, op(cf, cg), rough, step)
    breaks = _merge_breaks(f.breaks, g.breaks)
    d = f.degree + g.degree if product else max(f.degree, g.degree)
    cf = f.resample(breaks, d)
    cg = g.resample(breaks, d)
    if product:
        vf = _coeffs_to_vals(cf)
        vg = _coeffs_to_vals(cg)
        return _make(breaks, vals2coeffs(np.matmul(vf, vg), axis=1), rough, step)
    return _make(breaks, op(cf, cg), rough, step)


def _pad_degree(coeffs, d):
    extra = d - (coeffs.shape[1] - 1)
    if extra <= 0:
        return coeffs
    pad = np.zeros((coeffs.shape[0], extra) + coeffs.shape[2:], dtype=coeffs.dtype)
    return np.concatenate([coeffs, pad], axis=1)


def _coeffs_to_vals(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of vals2coeffs along axis 1."""
    d = coeffs.shape[1] - 1
    V = C.chebvander(lobatto_points(d), d)  # (d+1 points, d+1 coeffs)
    return np.einsum("pk,ck...->cp...", V, coeffs)


def map_to_unit(t, interval: Interval):
    return (2 * np.asarray(t, dtype=float) - interval.a - interval.b) / interval.length


def map_from_unit(x, interval: Interval):
    return (interval.a + interval.b) / 2 + interval.length / 2 * np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Constructors


def _as_matrix_values(vals: np.ndarray, npts: int) -> np.ndarray:
    vals = np.asarray(vals)
    if vals.ndim == 0:
        vals = np.full(npts, vals)
    if vals.ndim == 1:
        return vals[:, None, None]
    if vals.ndim == 2:
        return vals[:, :, None]
    return vals


def from_callable(
    func: Callable[[np.ndarray], np.ndarray],
    interval: Interval,
    degree: int | None = None,
    tol: float = 1e-14,
    max_degree: int = MAX_DEGREE,
) -> ChebyshevSeries:
    """Chebyshev interpolant of a vectorized callable.

    `func` maps an array of points of shape (P,) to (P,), (P, rows) or
    (P, rows, cols).  Without `degree`, the degree is doubled from 16 until
    the trailing coefficients fall below `tol` relative to the largest one,
    then the negligible tail is chopped.
    """
    if degree is not None:
        t = map_from_unit(lobatto_points(degree), interval)
        return ChebyshevSeries.from_values(_as_matrix_values(func(t), len(t)), interval)
    n = 16
    while True:
        t = map_from_unit(lobatto_points(n), interval)
        vals = _as_matrix_values(func(t), len(t))
        coeffs = vals2coeffs(vals, axis=0)
        mags = np.max(np.abs(coeffs.reshape(n + 1, -1)), axis=1)
        scale = max(mags.max(), 1e-300)
        tail = mags[-max(4, n // 16):]
        if tail.max() <= tol * scale or n >= max_degree:
            return ChebyshevSeries(_chop(coeffs, mags, tol * scale), interval)
        n *= 2


def _chop(coeffs, mags, cutoff):
    big = np.nonzero(mags > cutoff)[0]
    keep = big[-1] + 1 if len(big) else 1
    return coeffs[:keep].copy()


def constant(value, interval: Interval) -> ChebyshevSeries:
    value = np.asarray(value)
    if value.ndim == 0:
        value = value.reshape(1, 1)
    elif value.ndim == 1:
        value = value[:, None]
    return ChebyshevSeries(value[None], interval)


def zeros(shape: tuple[int, int], interval: Interval, dtype=float) -> ChebyshevSeries:
    return ChebyshevSeries(np.zeros((1,) + tuple(shape), dtype=dtype), interval)


def polynomial(monomial_coeffs, interval: Interval) -> ChebyshevSeries:
    """Scalar polynomial sum_k c_k t^k as an exact Chebyshev series."""
    c = np.asarray(monomial_coeffs)
    deg = max(len(c) - 1, 0)
    return from_callable(lambda t: np.polynomial.polynomial.polyval(t, c), interval, degree=max(deg, 1))


def piecewise_from_callable(func, breaks, degree: int, rough: bool = False) -> PiecewisePolynomial:
    """Interpolate `func` with degree-`degree` polynomials on each cell of `breaks`."""
    breaks = np.asarray(breaks, dtype=float)
    lo, hi = breaks[:-1], breaks[1:]
    x = lobatto_points(degree)
    t = (lo + hi)[:, None] / 2 + (hi - lo)[:, None] / 2 * x
    vals = _as_matrix_values(func(t.ravel()), t.size)
    vals = vals.reshape(len(lo), len(x), *vals.shape[1:])
    return _make(breaks, vals2coeffs(vals, axis=1), rough)


def step_from_callable(func, breaks, rough: bool = False) -> StepFunction:
    """Step function taking func's value at each cell midpoint."""
    breaks = np.asarray(breaks, dtype=float)
    mids = (breaks[:-1] + breaks[1:]) / 2
    vals = _as_matrix_values(func(mids), len(mids))
    return StepFunction(breaks, vals, rough=rough)


def _aligned_coeffs(funcs: Sequence[PiecewisePolynomial]):
    breaks = _merge_breaks(*[f.breaks for f in funcs])
    d = max(f.degree for f in funcs)
    blocks = [
        _pad_degree(f.coeffs, d) if np.array_equal(f.breaks, breaks) else f.resample(breaks, d)
        for f in funcs
    ]
    return breaks, blocks, any(f.rough for f in funcs)


def stack_columns(funcs: Sequence[PiecewisePolynomial]) -> PiecewisePolynomial:
    """Horizontally concatenate functions with a common row count."""
    breaks, blocks, rough = _aligned_coeffs(funcs)
    return _make(breaks, np.concatenate(blocks, axis=3), rough)


def stack_rows(funcs: Sequence[PiecewisePolynomial]) -> PiecewisePolynomial:
    breaks, blocks, rough = _aligned_coeffs(funcs)
    return _make(breaks, np.concatenate(blocks, axis=2), rough)


# ---------------------------------------------------------------------------
# Operations


def derivative(f: PiecewisePolynomial, order: int) -> PiecewisePolynomial:
    """order-th derivative in the same representation family."""
    return f.derivative(order)


def integrate_product(weight: PiecewisePolynomial, g: PiecewisePolynomial) -> np.ndarray:
    """Exact integral of weight(t) @ g(t) over [a, b] for piecewise polynomial data."""
    if weight.shape[1] != g.shape[0]:
        raise DimensionMismatch(f"cannot integrate {weight.shape} against {g.shape}")
    if not weight.interval.same_as(g.interval):
        raise DimensionMismatch("interval mismatch in integrate_product")
    breaks = _merge_breaks(weight.breaks, g.breaks)
    npts = (weight.degree + g.degree) // 2 + 1
    x, w = gauss_legendre(npts)
    lo, hi = breaks[:-1], breaks[1:]
    mids = (lo + hi) / 2
    t = (mids[:, None] + (hi - lo)[:, None] / 2 * x).ravel()
    wv = weight._eval_in_cells(t, np.repeat(weight.cell_of(mids), npts))
    gv = g._eval_in_cells(t, np.repeat(g.cell_of(mids), npts))
    prod = np.matmul(wv, gv).reshape(len(lo), npts, weight.shape[0], g.shape[1])
    return np.einsum("cp...,p,c->...", prod, w, (hi - lo) / 2)


def _entry_values(f: PiecewisePolynomial):
    return lambda t: f(t).reshape(len(t), -1)


def lp_norm(f: PiecewisePolynomial, p: float, tol: float = QUAD_TOL) -> float:
    """L_p norm on [a, b]; entrywise norms are summed.

    p < inf uses adaptive Gauss-Legendre quadrature seeded at the breakpoints
    (and at real roots of each entry when p is odd, where |f|^p has kinks).
    p = inf takes the maximum over a dense Chebyshev grid of each cell.
    """
    if not p >= 1:
        raise InvalidExponent(f"p must lie in [1, inf], got {p}")
    if math.isinf(p):
        return float(np.sum(_sup_entries(f)))
    breaks = f.breaks
    if f.degree >= 1 and f.ncells <= 64:
        breaks = _merge_breaks(breaks, _real_roots(f))
    eff = f.degree * p if float(p).is_integer() else f.degree * math.ceil(p) + 8
    order = int(min(max(eff // 2 + 2, 8), 48))
    vals = integrate_adaptive(lambda t: np.abs(_entry_values(f)(t)) ** p, breaks, tol=tol, order=order)
    return float(np.sum(np.maximum(vals.real, 0.0) ** (1.0 / p)))


def _real_roots(f: PiecewisePolynomial) -> np.ndarray:
    roots = []
    for cell in range(f.ncells):
        lo, hi = f.breaks[cell], f.breaks[cell + 1]
        c = f.coeffs[cell].reshape(f.degree + 1, -1)
        for e in range(c.shape[1]):
            ce = c[:, e]
            for part in (ce.real, ce.imag) if np.iscomplexobj(ce) else (ce,):
                if not np.any(part[1:]):
                    continue
                r = C.chebroots(_trim(part))
                r = r[np.abs(r.imag) < 1e-10].real
                r = r[(r > -1) & (r < 1)]
                roots.append((lo + hi) / 2 + (hi - lo) / 2 * r)
    return np.concatenate(roots) if roots else np.array([])


def _trim(c):
    big = np.nonzero(np.abs(c) > 1e-15 * np.abs(c).max())[0]
    return c[: big[-1] + 1] if len(big) else c[:1]


def _sup_entries(f: PiecewisePolynomial) -> np.ndarray:
    if f.degree == 0:
        return np.max(np.abs(f.coeffs[:, 0].reshape(f.ncells, -1)), axis=0)
    if f.ncells == 1:
        npts = max(2048, 16 * f.degree)
    else:
        npts = max(16, 4 * f.degree)
    x = lobatto_points(npts)
    lo, hi = f.breaks[:-1], f.breaks[1:]
    best = np.zeros(f.shape[0] * f.shape[1])
    chunk = max(1, 2_000_000 // (npts + 1))
    for start in range(0, f.ncells, chunk):
        cells = np.arange(start, min(start + chunk, f.ncells))
        t = ((lo + hi)[cells, None] / 2 + (hi - lo)[cells, None] / 2 * x).ravel()
        vals = f._eval_in_cells(t, np.repeat(cells, len(x)))
        best = np.maximum(best, np.max(np.abs(vals.reshape(len(t), -1)), axis=0))
    return best


def sobolev_norm(
    f: Union[PiecewisePolynomial, Sequence[PiecewisePolynomial]],
    k: int,
    p: float,
    tol: float = QUAD_TOL,
) -> float:
    """W_p^k norm: sum of the L_p norms of the derivatives of order 0..k.

    `f` is either a function (differentiated here) or a precomputed list
    [f, f', ..., f^(k)] such as the derivative lists produced by the ODE
    solver, whose higher derivatives come from the equation itself.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if isinstance(f, PiecewisePolynomial):
        derivs = [f.derivative(s) for s in range(k + 1)]
    else:
        if len(f) < k + 1:
            raise UnsupportedDerivative(f"need {k + 1} derivatives, got {len(f)}")
        derivs = list(f)[: k + 1]
    return float(sum(lp_norm(d, p, tol) for d in derivs))


def chebyshev_projection_coefficients(f: PiecewisePolynomial, degree: int) -> np.ndarray:
    """Coefficients c_0..c_degree of the truncated Chebyshev expansion of f on [a, b].

    Uses c_k = (2/pi) int_0^pi f(cos s) cos(k s) ds, split at the images of the
    breakpoints so that each panel integrand is smooth.
    """
    x_breaks = np.clip(map_to_unit(f.breaks, f.interval), -1.0, 1.0)
    s_breaks = np.sort(np.arccos(x_breaks))
    npts = degree + f.degree + 24
    xg, wg = gauss_legendre(npts)
    lo, hi = s_breaks[:-1], s_breaks[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    s = (lo + hi)[:, None] / 2 + (hi - lo)[:, None] / 2 * xg
    mid_t = map_from_unit(np.cos((lo + hi) / 2), f.interval)
    t = map_from_unit(np.cos(s), f.interval).ravel()
    vals = f._eval_in_cells(t, np.repeat(f.cell_of(mid_t), npts)).reshape(len(lo), npts, *f.shape)
    k = np.arange(degree + 1)
    cosk = np.cos(k[None, None, :] * s[:, :, None])  # (panels, npts, K)
    coeffs = np.einsum("cpk,cp...,p,c->k...", cosk, vals, wg, (hi - lo) / 2) * (2 / np.pi)
    coeffs[0] /= 2
    return coeffs


def project_polynomial(f: PiecewisePolynomial, degree: int) -> ChebyshevSeries:
    """Degree-truncated Chebyshev projection of f onto polynomials."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if isinstance(f, ChebyshevSeries):
        return f.truncate(degree)
    return ChebyshevSeries(chebyshev_projection_coefficients(f, degree), f.interval)
