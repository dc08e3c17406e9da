"""Matrix Cauchy problems for y^(r) + sum_j A_j y^(j) = f and derivative reconstruction.

The order-r system is reduced to a first-order system for the stacked state
z = (y, y', ..., y^(r-1)) of size r*m, integrated with an explicit
Runge-Kutta method of order 8 (dense output), and re-interpolated as
Chebyshev series.  Derivatives of order >= r are never obtained by
differentiating interpolants; they follow from the equation by the Leibniz
rule, see `higher_derivatives`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import funcspace as fs
from .errors import DimensionMismatch, IntegrationFailure, UnsupportedDerivative
from .funcspace import ChebyshevSeries, FunctionRep, Interval, SobolevIndex

DEFAULT_TOL = 1e-10
MAX_INTERP_DEGREE = 2048


@dataclass(frozen=True)
class OdeSystem:
    """Coefficients of y^(r) + sum_{j<r} A_j(t) y^(j).

    Attributes:
        index: Sobolev index (n, r, m, p).
        coeffs: r matrix functions (m x m); coeffs[j] multiplies y^(j).
    """

    index: SobolevIndex
    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        r, m = self.index.r, self.index.m
        if len(coeffs) != r:
            raise DimensionMismatch(f"need exactly r={r} coefficient matrices, got {len(coeffs)}")
        for j, A in enumerate(coeffs):
            if A.shape != (m, m):
                raise DimensionMismatch(f"A_{j} has shape {A.shape}, expected {(m, m)}")
            if not A.interval.same_as(coeffs[0].interval):
                raise DimensionMismatch("all coefficients must live on the same interval")
            if A.kind == "step" and self.index.n > 0:
                raise UnsupportedDerivative("step coefficients cannot be differentiated n > 0 times")

    @property
    def interval(self) -> Interval:
        return self.coeffs[0].interval

    @property
    def r(self) -> int:
        return self.index.r

    @property
    def m(self) -> int:
        return self.index.m

    def coefficient_degree(self) -> int:
        return max(A.degree * A.ncells for A in self.coeffs)


@dataclass
class FundamentalSystem:
    """Solutions Y_1..Y_r of the homogeneous matrix Cauchy problems.

    `ycat` is the m x rm function [Y_1 | ... | Y_r]; `derivs[s]` is its s-th
    derivative for s = 0..n+r.
    """

    system: OdeSystem
    derivs: list
    state: ChebyshevSeries = field(repr=False)

    @property
    def ycat(self) -> FunctionRep:
        return self.derivs[0]

    @property
    def blocks(self) -> list:
        m = self.system.m
        return [self.ycat.block(cols=slice(i * m, (i + 1) * m)) for i in range(self.system.r)]

    def block_derivs(self, i: int) -> list:
        m = self.system.m
        return [d.block(cols=slice(i * m, (i + 1) * m)) for d in self.derivs]

    def wronskian(self, t) -> np.ndarray:
        """Block matrix [Y_i^(j)(t)] of size rm x rm at the points t."""
        return self.state(t)


def companion(system: OdeSystem, t: np.ndarray) -> np.ndarray:
    """First-order system matrices at points t: shape (len(t), rm, rm)."""
    r, m = system.r, system.m
    t = np.atleast_1d(t)
    dtype = np.result_type(*[A.dtype for A in system.coeffs])
    out = np.zeros((len(t), r * m, r * m), dtype=dtype)
    for j in range(r - 1):
        out[:, j * m : (j + 1) * m, (j + 1) * m : (j + 2) * m] = np.eye(m)
    for j, A in enumerate(system.coeffs):
        out[:, (r - 1) * m :, j * m : (j + 1) * m] = -A(t)
    return out


def _integrate(
    system: OdeSystem,
    init: np.ndarray,
    forcing: Optional[FunctionRep],
    tol: float,
) -> ChebyshevSeries:
    """Integrate z' = C(t) z + F(t) from t=a with matrix initial value `init` (rm x q).

    `forcing` is an m x q function entering the last block row, or None.
    Returns the state as an rm x q Chebyshev series.
    """
    interval = system.interval
    r, m = system.r, system.m
    rm, q = init.shape
    span = interval.length
    A_stack = fs.stack_columns(list(system.coeffs))  # m x rm, columns [A_0 | ... | A_{r-1}]
    dtype = np.result_type(init.dtype, A_stack.dtype, forcing.dtype if forcing is not None else float)

    def rhs(t, zflat):
        z = zflat.reshape(rm, q)
        dz = np.empty_like(z)
        dz[: rm - m] = z[m:]
        dz[rm - m :] = -(A_stack(t) @ z)
        if forcing is not None:
            dz[rm - m :] += forcing(t)
        return dz.ravel()

    breaks = np.asarray(A_stack.breaks)
    if forcing is not None:
        breaks = fs._merge_breaks(breaks, forcing.breaks)
    y0 = init.astype(dtype).ravel()
    # local control two decades below tol keeps the global error near tol
    step_tol = max(tol * 1e-2, 5e-14)
    pieces = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        sol = solve_ivp(
            rhs,
            (lo, hi),
            y0,
            method="DOP853",
            rtol=step_tol,
            atol=step_tol * 1e-2,
            dense_output=True,
        )
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            raise IntegrationFailure(f"integrator failed on [{lo}, {hi}]: {sol.message}")
        steps = np.diff(sol.t)
        if len(steps) and steps.min() < span * 1e-12 and len(steps) > 1:
            raise IntegrationFailure(f"step size fell below {span * 1e-12:.3e} on [{lo}, {hi}]")
        pieces.append((lo, hi, sol.sol))
        y0 = sol.y[:, -1]

    def dense(t):
        t = np.asarray(t)
        out = np.empty((len(t), rm * q), dtype=dtype)
        for k, (lo, hi, interp) in enumerate(pieces):
            sel = (t >= lo) & ((t < hi) | (k == len(pieces) - 1))
            if np.any(sel):
                out[sel] = interp(t[sel]).T
        return out.reshape(len(t), rm, q)

    deg_hint = max(A.degree for A in system.coeffs)
    if forcing is not None:
        deg_hint = max(deg_hint, forcing.degree)
    n = max(64, 4 * deg_hint)
    while True:
        series = fs.from_callable(dense, interval, degree=n)
        mags = np.max(np.abs(series.coefficients.reshape(n + 1, -1)), axis=1)
        scale = max(mags.max(), 1e-300)
        # dense output carries noise at the tol level; resolve down to it
        if mags[-8:].max() <= 0.1 * tol * scale or n >= MAX_INTERP_DEGREE:
            break
        n *= 2
    big = np.nonzero(mags > 1e-3 * tol * scale)[0]
    keep = big[-1] + 1 if len(big) else 1
    return ChebyshevSeries(series.coefficients[:keep].copy(), interval)


def _state_to_derivs(state: ChebyshevSeries, r: int, m: int) -> list:
    return [state.block(rows=slice(j * m, (j + 1) * m)) for j in range(r)]


def higher_derivatives(
    system: OdeSystem,
    y,
    f: Optional[FunctionRep],
    upto: int,
) -> list:
    """Derivatives [y, y', ..., y^(upto)] of a solution of L y = f.

    Args:
        system: the ODE.
        y: either the solution itself or the list [y, ..., y^(r-1)] produced by
            the integrator.  Orders below r missing from the list are obtained
            by differentiating the last supplied one.
        f: right-hand side (m x q) or None for the homogeneous equation.
        upto: highest order requested, at most n + r.

    Orders >= r use y^(r+q) = f^(q) - sum_j sum_i C(q,i) A_j^(i) y^(j+q-i).
    """
    r = system.r
    if upto > system.index.order:
        raise UnsupportedDerivative(f"upto={upto} exceeds n+r={system.index.order}")
    lower = [y] if isinstance(y, FunctionRep) else list(y)
    while len(lower) < min(r, upto + 1):
        lower.append(lower[-1].derivative(1))
    derivs = lower[: upto + 1]
    if upto < r:
        return derivs
    A_derivs = [[A] for A in system.coeffs]
    f_derivs = [f] if f is not None else None
    for order in range(r, upto + 1):
        q = order - r
        for j in range(r):
            while len(A_derivs[j]) <= q:
                A_derivs[j].append(A_derivs[j][-1].derivative(1))
        if f_derivs is not None:
            while len(f_derivs) <= q:
                f_derivs.append(f_derivs[-1].derivative(1))
        total = None
        for j in range(r):
            for i in range(q + 1):
                term = A_derivs[j][i].matmul(derivs[j + q - i]) * comb(q, i)
                total = term if total is None else total + term
        value = -total
        if f_derivs is not None:
            value = f_derivs[q] + value
        derivs.append(_tidy(value))
    return derivs


def _tidy(g: FunctionRep, rel: float = 1e-17) -> FunctionRep:
    """Drop trailing Chebyshev coefficients below rel * max, keeping degrees in check."""
    if g.ncells != 1:
        return g
    c = g.coefficients
    mags = np.max(np.abs(c.reshape(len(c), -1)), axis=1)
    big = np.nonzero(mags > rel * max(mags.max(), 1e-300))[0]
    keep = big[-1] + 1 if len(big) else 1
    return ChebyshevSeries(c[:keep].copy(), g.interval) if keep < len(c) else g


def apply_operator_derivs(
    system: OdeSystem,
    derivs: Sequence[FunctionRep],
    f: Optional[FunctionRep],
    upto: int,
) -> list:
    """Derivatives of order 0..upto of L y - f, from the derivative list of y.

    Needs derivs up to order r + upto.
    """
    r = system.r
    if len(derivs) < r + upto + 1:
        raise UnsupportedDerivative(f"need {r + upto + 1} derivatives of y, got {len(derivs)}")
    out = []
    A_derivs = [[A] for A in system.coeffs]
    f_derivs = [f] if f is not None else None
    for q in range(upto + 1):
        for j in range(r):
            while len(A_derivs[j]) <= q:
                A_derivs[j].append(A_derivs[j][-1].derivative(1))
        value = derivs[r + q]
        for j in range(r):
            for i in range(q + 1):
                value = value + A_derivs[j][i].matmul(derivs[j + q - i]) * comb(q, i)
        if f_derivs is not None:
            while len(f_derivs) <= q:
                f_derivs.append(f_derivs[-1].derivative(1))
            value = value - f_derivs[q]
        out.append(value)
    return out


def _check_initial_blocks(state: ChebyshevSeries, tol: float = 1e-10) -> None:
    z0 = state(state.interval.a)
    err = np.max(np.abs(z0 - np.eye(z0.shape[0])))
    if err > tol:
        raise IntegrationFailure(f"fundamental system initial blocks off by {err:.3e}")


def solve_fundamental(system: OdeSystem, tol: float = DEFAULT_TOL) -> FundamentalSystem:
    """Y_1..Y_r with Y_i^(j-1)(a) = delta_ij I_m, with derivatives up to n+r."""
    r, m = system.r, system.m
    state = _integrate(system, np.eye(r * m), None, tol)
    _check_initial_blocks(state)
    lower = _state_to_derivs(state, r, m)
    derivs = higher_derivatives(system, lower, None, system.index.order)
    return FundamentalSystem(system=system, derivs=derivs, state=state)


def solve_particular_derivs(system: OdeSystem, f: FunctionRep, tol: float = DEFAULT_TOL) -> list:
    """Derivative list of the solution of L y = f with zero Cauchy data at a."""
    r, m = system.r, system.m
    if f.shape[0] != m:
        raise DimensionMismatch(f"right-hand side has {f.shape[0]} rows, expected m={m}")
    if not f.interval.same_as(system.interval):
        raise DimensionMismatch("right-hand side lives on a different interval")
    state = _integrate(system, np.zeros((r * m, f.shape[1])), f, tol)
    lower = _state_to_derivs(state, r, m)
    return higher_derivatives(system, lower, f, system.index.order)


def solve_particular(system: OdeSystem, f: FunctionRep, tol: float = DEFAULT_TOL) -> FunctionRep:
    """y_p with L y_p = f and y_p^(j)(a) = 0 for j < r."""
    return solve_particular_derivs(system, f, tol)[0]


def ode_residual(system: OdeSystem, lower: Sequence[FunctionRep], f: Optional[FunctionRep]) -> float:
    """Residual of the first-order system in integrated form, relative to the solution scale.

    With z = (y, ..., y^(r-1)) and z' = C z + F, returns
    sup |z(t) - z(a) - int_a^t (C z + F)| / max(1, sup |z|).  The integral form
    avoids differentiating interpolants, so it is independent of the
    recurrence used for the higher derivatives.
    """
    r = system.r
    worst, scale = 0.0, 1.0
    for j in range(r):
        if j < r - 1:
            slope = lower[j + 1]
        else:
            slope = -system.coeffs[0].matmul(lower[0])
            for k in range(1, r):
                slope = slope - system.coeffs[k].matmul(lower[k])
            if f is not None:
                slope = slope + f
        z = lower[j]
        prim = slope.primitive()
        za = z(z.interval.a)
        diff = z - prim
        worst = max(worst, float(np.max(np.abs(_sup_dev(diff, za)))))
        scale = max(scale, fs.lp_norm(z, np.inf) / (z.shape[0] * z.shape[1]))
    return worst / scale


def _sup_dev(diff: FunctionRep, offset: np.ndarray) -> np.ndarray:
    """Entrywise sup over [a, b] of |diff(t) - offset|."""
    breaks = diff.breaks
    npts = max(64, 4 * diff.degree)
    x = np.cos(np.pi * np.arange(npts + 1) / npts)
    lo, hi = breaks[:-1], breaks[1:]
    t = ((lo + hi)[:, None] / 2 + (hi - lo)[:, None] / 2 * x).ravel()
    return np.max(np.abs(diff(t) - offset), axis=0)
