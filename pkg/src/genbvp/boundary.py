"""Boundary operators B: (W_p^{n+r})^m -> C^{rm}.

Three families are supported:

* canonical:  B y = sum_{s<N} alpha_s y^(s)(t0) + int_a^b Phi(t) y^(N)(t) dt
* multipoint: B y = sum_{s<N} alpha_s y^(s)(t0) + sum_j beta_j y^(N-1)(t_j)
* fractional: B y = sum_j int_a^b beta_j(t) (D^{l_j} y)(t) dt with Caputo D

where N = n + r.  Every operator acts on derivative lists [y, y', ..., y^(N)]
of m x q functions and returns an rm x q array, so a matrix argument is
processed column by column in one call.

Multipoint and fractional operators convert exactly to canonical form
(`to_canonical`); classical point conditions y^(s)(tau) are built directly in
canonical form via Taylor's formula with integral remainder
(`point_conditions`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import gamma, roots_jacobi

from . import funcspace as fs
from .errors import (
    DimensionMismatch,
    InvalidPartition,
    OrderOutOfRange,
    PointOutOfInterval,
    UnsupportedDerivative,
)
from .funcspace import FunctionRep, Interval, SobolevIndex

GRADED_LEVELS = 36
GRADED_DEGREE = 16


def _as_alpha_tuple(alphas, index: SobolevIndex) -> tuple:
    rm, m, N = index.r * index.m, index.m, index.order
    out = tuple(np.atleast_2d(np.asarray(a)) for a in alphas)
    if len(out) != N:
        raise DimensionMismatch(f"need n+r={N} alpha matrices, got {len(out)}")
    for s, a in enumerate(out):
        if a.shape != (rm, m):
            raise DimensionMismatch(f"alpha_{s} has shape {a.shape}, expected {(rm, m)}")
    return out


def _derivs_of(y: Optional[FunctionRep], derivs: Optional[Sequence[FunctionRep]], upto: int) -> list:
    if derivs is None:
        if y is None:
            raise ValueError("need y or its derivative list")
        return [y.derivative(s) for s in range(upto + 1)]
    if len(derivs) < upto + 1:
        raise UnsupportedDerivative(f"need derivatives up to order {upto}, got {len(derivs) - 1}")
    return list(derivs)


def _point_values(g: FunctionRep, t: float) -> np.ndarray:
    return g(t)


@dataclass(frozen=True)
class CanonicalBoundaryOperator:
    t0: float
    alphas: tuple
    phi: FunctionRep
    index: SobolevIndex

    kind = "canonical"

    def __post_init__(self):
        object.__setattr__(self, "alphas", _as_alpha_tuple(self.alphas, self.index))
        rm, m = self.index.r * self.index.m, self.index.m
        if self.phi.shape != (rm, m):
            raise DimensionMismatch(f"Phi has shape {self.phi.shape}, expected {(rm, m)}")
        if not self.phi.interval.contains(self.t0):
            raise PointOutOfInterval(f"t0={self.t0} outside {self.phi.interval}")
        if not np.all(np.isfinite(self.phi.coeffs)):
            raise ValueError("Phi must be finite")

    @property
    def interval(self) -> Interval:
        return self.phi.interval

    @property
    def output_dim(self) -> int:
        return self.index.r * self.index.m

    def apply(self, derivs: Sequence[FunctionRep]) -> np.ndarray:
        N = self.index.order
        if len(derivs) < N + 1:
            raise UnsupportedDerivative(f"canonical operator needs derivatives up to {N}")
        if derivs[0].shape[0] != self.index.m:
            raise DimensionMismatch(f"argument has {derivs[0].shape[0]} rows, expected m={self.index.m}")
        out = sum(a @ derivs[s](self.t0) for s, a in enumerate(self.alphas))
        return out + fs.integrate_product(self.phi, derivs[N])

    def bound_constant(self) -> float:
        """C with |B y| <= C ||y||_{n+r,p}.

        Point values obey |u(t0)| <= L^(-1/p) ||u||_p + L^(1-1/p) ||u'||_p on an
        interval of length L; the integral term is bounded by Hoelder.
        """
        p = self.index.p
        L = self.interval.length
        inv_p = 0.0 if math.isinf(p) else 1.0 / p
        embed = max(L ** (-inv_p), L ** (1 - inv_p))
        alpha_part = sum(np.linalg.norm(a, 2) for a in self.alphas)
        return embed * alpha_part + fs.lp_norm(self.phi, self.index.p_conj)


@dataclass(frozen=True)
class MultipointBoundaryOperator:
    t0: float
    alphas: tuple
    points: np.ndarray
    betas: np.ndarray
    index: SobolevIndex
    interval: Interval

    kind = "multipoint"

    def __post_init__(self):
        object.__setattr__(self, "alphas", _as_alpha_tuple(self.alphas, self.index))
        points = np.asarray(self.points, dtype=float).ravel()
        rm, m = self.index.r * self.index.m, self.index.m
        betas = np.asarray(self.betas)
        if betas.ndim == 2:
            betas = betas[None]
        if len(points) == 0:
            betas = np.zeros((0, rm, m))
        if betas.shape != (len(points), rm, m):
            raise DimensionMismatch(f"betas have shape {betas.shape}, expected {(len(points), rm, m)}")
        for t in list(points) + [self.t0]:
            if not self.interval.contains(t):
                raise PointOutOfInterval(f"point {t} outside {self.interval}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "betas", betas)

    @property
    def output_dim(self) -> int:
        return self.index.r * self.index.m

    def apply(self, derivs: Sequence[FunctionRep]) -> np.ndarray:
        N = self.index.order
        if len(derivs) < N:
            raise UnsupportedDerivative(f"multipoint operator needs derivatives up to {N - 1}")
        if derivs[0].shape[0] != self.index.m:
            raise DimensionMismatch(f"argument has {derivs[0].shape[0]} rows, expected m={self.index.m}")
        out = sum(a @ derivs[s](self.t0) for s, a in enumerate(self.alphas))
        if len(self.points):
            vals = derivs[N - 1](self.points)  # (P, m, q)
            out = out + np.einsum("pim,pmq->iq", self.betas, vals)
        return out


@dataclass(frozen=True)
class FractionalTerm:
    order: float
    weight: FunctionRep  # rm x m, bounded


@dataclass(frozen=True)
class FractionalBoundaryOperator:
    """B y = sum_j int_a^b weight_j(t) (D_{a+}^{order_j} y)(t) dt, Caputo derivatives."""

    terms: tuple
    index: SobolevIndex

    kind = "fractional"

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("need at least one term")
        rm, m = self.index.r * self.index.m, self.index.m
        orders = [t.order for t in terms]
        if any(o < 0 for o in orders) or any(b <= a for a, b in zip(orders, orders[1:])):
            raise OrderOutOfRange(f"orders must satisfy 0 <= l_1 < l_2 < ...; got {orders}")
        check_order_bound(orders[-1], self.index)
        for t in terms:
            if t.weight.shape != (rm, m):
                raise DimensionMismatch(f"weight has shape {t.weight.shape}, expected {(rm, m)}")
            if not t.weight.interval.same_as(terms[0].weight.interval):
                raise DimensionMismatch("weights must share one interval")

    @property
    def interval(self) -> Interval:
        return self.terms[0].weight.interval

    @property
    def output_dim(self) -> int:
        return self.index.r * self.index.m

    def apply(self, derivs: Sequence[FunctionRep], p: Optional[float] = None) -> np.ndarray:
        index = self.index if p is None else SobolevIndex(self.index.n, self.index.r, self.index.m, p)
        out = None
        for term in self.terms:
            check_order_bound(term.order, index)
            k = math.ceil(term.order)
            if len(derivs) < k + 1:
                raise UnsupportedDerivative(f"Caputo order {term.order} needs derivative {k}")
            if derivs[0].shape[0] != self.index.m:
                raise DimensionMismatch(f"argument has {derivs[0].shape[0]} rows, expected m={self.index.m}")
            val = _weighted_caputo_integral(term.weight, derivs, term.order)
            out = val if out is None else out + val
        return out


BoundaryOperator = Union[CanonicalBoundaryOperator, MultipointBoundaryOperator, FractionalBoundaryOperator]


def check_order_bound(order: float, index: SobolevIndex) -> None:
    inv_p = 0.0 if math.isinf(index.p) else 1.0 / index.p
    if not order < index.order - inv_p:
        raise OrderOutOfRange(f"order {order} must be < n+r-1/p = {index.order - inv_p:g}")


# ---------------------------------------------------------------------------
# Caputo derivatives


def caputo_derivative(derivs: Sequence[FunctionRep], order: float, t) -> np.ndarray:
    """(D_{a+}^order y)(t) from the derivative list of y; shape t.shape + (m, q).

    Non-integer orders use Gauss-Jacobi quadrature matched to the kernel
    (t - tau)^(k - order - 1), k = ceil(order), which is exact when
    y^(k) is a polynomial of moderate degree.
    """
    t = np.asarray(t, dtype=float)
    k = math.ceil(order)
    g = derivs[k]
    if float(order).is_integer():
        return g(t)
    nu = k - order
    a = g.interval.a
    npts = g.degree // 2 + 2 if g.ncells == 1 else max(g.degree, 8) + 40
    x, w = roots_jacobi(npts, 0.0, nu - 1.0)
    flat = t.ravel()
    s = (1 + x) / 2
    pts = flat[:, None] - (flat - a)[:, None] * s[None, :]
    vals = g(pts.ravel()).reshape(len(flat), npts, *g.shape)
    inner = np.einsum("tp...,p->t...", vals, w) * 2.0 ** (-nu) / gamma(nu)
    out = inner * ((flat - a) ** nu)[:, None, None]
    return out.reshape(t.shape + g.shape)


def _weighted_caputo_integral(weight: FunctionRep, derivs: Sequence[FunctionRep], order: float) -> np.ndarray:
    k = math.ceil(order)
    if float(order).is_integer():
        return fs.integrate_product(weight, derivs[k])
    nu = k - order
    g = derivs[k]
    a = weight.interval.a
    breaks = fs._merge_breaks(weight.breaks, g.breaks)
    total = 0.0
    npts = (weight.degree + g.degree) // 2 + 24
    xj, wj = roots_jacobi(npts, 0.0, nu)
    xl, wl = fs.gauss_legendre(npts + 16)
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = (hi - lo) / 2
        if lo == a:
            # (t - a)^nu factored into the Jacobi weight
            t = lo + half * (1 + xj)
            D = caputo_derivative(derivs, order, t) / ((t - a) ** nu)[:, None, None]
            wts = wj * half ** (nu + 1)
        else:
            t = lo + half * (1 + xl)
            D = caputo_derivative(derivs, order, t)
            wts = wl * half
        W = weight(t)
        total = total + np.einsum("p,pim,pmq->iq", wts, W, D)
    return total


# ---------------------------------------------------------------------------
# Module-level API


def apply_canonical(B: CanonicalBoundaryOperator, y: Optional[FunctionRep] = None, derivs=None) -> np.ndarray:
    """sum_s alpha_s y^(s)(t0) + int Phi y^(n+r) dt."""
    if not isinstance(B, CanonicalBoundaryOperator):
        raise TypeError("apply_canonical needs a CanonicalBoundaryOperator")
    return B.apply(_derivs_of(y, derivs, B.index.order))


def apply_multipoint(B: MultipointBoundaryOperator, y: Optional[FunctionRep] = None, derivs=None) -> np.ndarray:
    """sum_s alpha_s y^(s)(t0) + sum_j beta_j y^(n+r-1)(t_j)."""
    if not isinstance(B, MultipointBoundaryOperator):
        raise TypeError("apply_multipoint needs a MultipointBoundaryOperator")
    return B.apply(_derivs_of(y, derivs, B.index.order - 1))


def apply_fractional(
    B: FractionalBoundaryOperator,
    y: Optional[FunctionRep] = None,
    derivs=None,
    p: Optional[float] = None,
) -> np.ndarray:
    """sum_j int beta_j(t) (D^{l_j} y)(t) dt; raises OrderOutOfRange if some l_j >= n+r-1/p."""
    if not isinstance(B, FractionalBoundaryOperator):
        raise TypeError("apply_fractional needs a FractionalBoundaryOperator")
    upto = math.ceil(B.terms[-1].order)
    return B.apply(_derivs_of(y, derivs, upto), p=p)


def apply(B: BoundaryOperator, derivs: Sequence[FunctionRep]) -> np.ndarray:
    return B.apply(derivs)


# ---------------------------------------------------------------------------
# Riemann-Stieltjes conversion


def _check_partition(partition, interval: Interval) -> np.ndarray:
    part = np.asarray(partition, dtype=float).ravel()
    if len(part) < 2 or np.any(np.diff(part) <= 0):
        raise InvalidPartition("partition must be strictly increasing with at least two points")
    scale = interval.length * 1e-12
    if abs(part[0] - interval.a) > scale or abs(part[-1] - interval.b) > scale:
        raise InvalidPartition(f"partition must run from a={interval.a} to b={interval.b}")
    part[0], part[-1] = interval.a, interval.b
    return part


def stieltjes_multipoint(Phi: FunctionRep, partition) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights replacing int Phi y^(N) dt by a sum over y^(N-1)(t_j).

    The cell midpoints tau_c sample Phi, so that
    sum_j beta_j u(t_j) = sum_c Phi(tau_c) (u(t_{c+1}) - u(t_c)).
    """
    part = _check_partition(partition, Phi.interval)
    mids = (part[:-1] + part[1:]) / 2
    vals = Phi(mids)  # (cells, rm, m)
    zero = np.zeros((1,) + vals.shape[1:], dtype=vals.dtype)
    betas = np.concatenate([zero, vals]) - np.concatenate([vals, zero])
    return part.copy(), betas


def stieltjes_kernel(Phi: FunctionRep, partition) -> fs.StepFunction:
    """The step kernel implicitly used by `stieltjes_multipoint`."""
    part = _check_partition(partition, Phi.interval)
    mids = (part[:-1] + part[1:]) / 2
    return fs.StepFunction(part, Phi(mids), rough=Phi.rough)


def multipoint_from_canonical(B: CanonicalBoundaryOperator, partition) -> MultipointBoundaryOperator:
    points, betas = stieltjes_multipoint(B.phi, partition)
    return MultipointBoundaryOperator(B.t0, B.alphas, points, betas, B.index, B.interval)


def dyadic_partition(interval: Interval, cells: int) -> np.ndarray:
    """Uniform partition into `cells` pieces (dyadic rationals of [a, b] when cells = 2^j)."""
    return interval.a + interval.length * np.arange(cells + 1) / cells


# ---------------------------------------------------------------------------
# Canonical form


def to_canonical(B: BoundaryOperator, t0: Optional[float] = None) -> CanonicalBoundaryOperator:
    """Exact canonical representation (alpha_s, Phi, t0) of a boundary operator."""
    if isinstance(B, CanonicalBoundaryOperator):
        if t0 is not None and t0 != B.t0:
            raise ValueError("re-centring a canonical operator is not supported")
        return B
    if isinstance(B, MultipointBoundaryOperator):
        return _multipoint_to_canonical(B)
    if isinstance(B, FractionalBoundaryOperator):
        if t0 is not None and t0 != B.interval.a:
            raise ValueError("fractional operators convert with t0 = a only")
        return _fractional_to_canonical(B)
    raise TypeError(f"unknown boundary operator {type(B).__name__}")


def _multipoint_to_canonical(B: MultipointBoundaryOperator) -> CanonicalBoundaryOperator:
    # beta_j u(t_j) = beta_j u(t0) + beta_j * sign * int between t0 and t_j of u'
    N = B.index.order
    rm, m = B.output_dim, B.index.m
    alphas = [a.astype(np.result_type(a, B.betas)) for a in B.alphas]
    alphas[N - 1] = alphas[N - 1] + B.betas.sum(axis=0)
    interval = B.interval
    breaks = fs._merge_breaks(np.array([interval.a, interval.b, B.t0]), B.points)
    mids = (breaks[:-1] + breaks[1:]) / 2
    order = np.argsort(B.points)
    pts, bts = B.points[order], B.betas[order]
    # right of t0: cells below t_j get +beta_j; left of t0: cells above t_j get -beta_j
    right = pts > B.t0
    left = pts < B.t0
    suffix = np.cumsum((bts * right[:, None, None])[::-1], axis=0)[::-1]
    prefix = np.cumsum(bts * left[:, None, None], axis=0)
    values = np.zeros((len(mids), rm, m), dtype=bts.dtype if len(bts) else float)
    if len(pts):
        idx_r = np.searchsorted(pts, mids, side="right")  # first point beyond the midpoint
        idx_l = np.searchsorted(pts, mids, side="left") - 1  # last point before it
        pad = np.zeros((1, rm, m), dtype=values.dtype)
        suffix = np.concatenate([suffix, pad])
        prefix = np.concatenate([pad, prefix])
        on_right = mids > B.t0
        values[on_right] = suffix[idx_r[on_right]]
        values[~on_right] = -prefix[idx_l[~on_right] + 1]
    phi = fs.StepFunction(breaks, values)
    return CanonicalBoundaryOperator(B.t0, tuple(alphas), phi, B.index)


def _jacobi_moment(weight: FunctionRep, left: float, exponent: float, npts: int = 40) -> np.ndarray:
    """int_left^b weight(t) (t - left)^exponent dt for exponent > -1."""
    b = weight.interval.b
    breaks = weight.breaks[weight.breaks > left]
    breaks = np.concatenate([[left], breaks])
    total = np.zeros(weight.shape, dtype=np.result_type(weight.dtype, float))
    n = weight.degree // 2 + npts
    xj, wj = roots_jacobi(n, 0.0, exponent)
    xl, wl = fs.gauss_legendre(n)
    for k, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
        if hi <= lo:
            continue
        half = (hi - lo) / 2
        if k == 0:
            t = lo + half * (1 + xj)
            total = total + np.einsum("p,pij->ij", wj * half ** (exponent + 1), weight(t))
        elif isinstance(weight, fs.StepFunction):
            val = weight((lo + hi) / 2)
            e1 = exponent + 1
            total = total + val * ((hi - left) ** e1 - (lo - left) ** e1) / e1
        else:
            t = lo + half * (1 + xl)
            total = total + np.einsum("p,pij->ij", wl * half * (t - left) ** exponent, weight(t))
    del b
    return total


def _graded_breaks(interval: Interval, singular: Sequence[float], levels: int = GRADED_LEVELS) -> np.ndarray:
    pts = [interval.a, interval.b]
    L = interval.length
    for s in singular:
        for k in range(1, levels + 1):
            h = L * 0.5**k
            pts.extend([s - h, s + h])
    pts = np.array(pts)
    pts = pts[(pts >= interval.a) & (pts <= interval.b)]
    return fs._merge_breaks(pts, np.array([interval.a, interval.b]))


def _fractional_to_canonical(B: FractionalBoundaryOperator) -> CanonicalBoundaryOperator:
    # With t0 = a, y = sum_s y^(s)(a) (t-a)^s/s! + int (t-tau)_+^(N-1)/(N-1)! y^(N)(tau) dtau,
    # D^l (t-a)^s/s! = (t-a)^(s-l)/Gamma(s-l+1) for s >= ceil(l), else 0, and
    # D^l (t-tau)_+^(N-1)/(N-1)! = (t-tau)_+^(N-1-l)/Gamma(N-l).
    index = B.index
    N = index.order
    interval = B.interval
    a = interval.a
    rm, m = B.output_dim, index.m
    dtype = np.result_type(*[t.weight.dtype for t in B.terms], float)
    alphas = [np.zeros((rm, m), dtype=dtype) for _ in range(N)]
    for term in B.terms:
        k = math.ceil(term.order)
        for s in range(k, N):
            e = s - term.order
            alphas[s] = alphas[s] + _jacobi_moment(term.weight, a, e) / gamma(e + 1)

    def phi_values(tau):
        out = np.zeros((len(tau), rm, m), dtype=dtype)
        for term in B.terms:
            nu = N - 1 - term.order
            for i, t in enumerate(tau):
                if t < interval.b:
                    out[i] += _jacobi_moment(term.weight, t, nu) / gamma(nu + 1)
        return out

    singular = [interval.b]
    for term in B.terms:
        if term.weight.ncells > 1:
            singular.extend(term.weight.breaks[1:-1])
    breaks = _graded_breaks(interval, singular)
    phi = fs.piecewise_from_callable(phi_values, breaks, GRADED_DEGREE)
    return CanonicalBoundaryOperator(a, tuple(alphas), phi, index)


# ---------------------------------------------------------------------------
# Builders


def point_conditions(
    index: SobolevIndex,
    interval: Interval,
    rows: Sequence[Sequence[tuple]],
    t0: Optional[float] = None,
) -> CanonicalBoundaryOperator:
    """Canonical operator for conditions built from point evaluations.

    Each of the rm rows is a list of terms (order s, point tau, weight w) with
    w a length-m vector, contributing w . y^(s)(tau).  Orders s <= n+r-1.
    Evaluations away from t0 are expanded by Taylor's formula
    y^(s)(tau) = sum_{j=s}^{N-1} y^(j)(t0) (tau-t0)^(j-s)/(j-s)!
                 + int_{t0}^{tau} (tau-t)^(N-1-s)/(N-1-s)! y^(N)(t) dt.
    """
    N, m, rm = index.order, index.m, index.r * index.m
    t0 = interval.a if t0 is None else t0
    if len(rows) != rm:
        raise DimensionMismatch(f"need rm={rm} condition rows, got {len(rows)}")
    alphas = [np.zeros((rm, m)) for _ in range(N)]
    row_kernels = []
    for i, row in enumerate(rows):
        kernel = fs.zeros((1, m), interval)
        for s, tau, w in row:
            w = np.asarray(w, dtype=float).reshape(m)
            if not 0 <= s <= N - 1:
                raise OrderOutOfRange(f"point evaluation of order {s} needs 0 <= s <= n+r-1 = {N - 1}")
            if not interval.contains(tau):
                raise PointOutOfInterval(f"point {tau} outside {interval}")
            for j in range(s, N):
                alphas[j][i] += w * (tau - t0) ** (j - s) / math.factorial(j - s)
            if tau != t0:
                kernel = kernel + _taylor_kernel(interval, t0, tau, N - 1 - s, w)
        row_kernels.append(kernel)
    phi = fs.stack_rows(row_kernels)
    return CanonicalBoundaryOperator(t0, tuple(alphas), phi, index)


def _taylor_kernel(interval: Interval, t0: float, tau: float, power: int, w: np.ndarray) -> FunctionRep:
    lo, hi = min(t0, tau), max(t0, tau)
    sign = 1.0 if tau > t0 else -1.0
    breaks = fs._merge_breaks(np.array([interval.a, lo, hi, interval.b]), np.array([]))
    fact = math.factorial(power)

    def kern(t):
        inside = (t >= lo) & (t <= hi)
        vals = np.where(inside, sign * (tau - t) ** power / fact, 0.0)
        return vals[:, None, None] * w[None, None, :]

    mids = (breaks[:-1] + breaks[1:]) / 2
    pw = fs.piecewise_from_callable(kern, breaks, max(power, 1))
    # cells outside [lo, hi] must be exactly zero
    outside = (mids < lo) | (mids > hi)
    pw.coeffs[outside] = 0.0
    return pw
