"""Truncated integer-derivative expansions of the fractional operators.

For a real-analytic trajectory the left fractional derivative expands into
a series of ordinary derivatives weighted by generalized binomial
coefficients and fractional powers of (t - a).  Truncating at order N
turns the variational problem into a classical higher-order one; this
module evaluates the truncated operators, the resulting stationarity
residual, the prolonged invariance criterion, and the truncated conserved
quantity, together with the weak pairings against analytic test functions
used to measure convergence back to the fractional objects.

The coefficient functions

    coeff_i(t) = (alpha choose i) (t - a)^(i - alpha) / Gamma(i + 1 - alpha)

are emitted by a single routine shared by every operation here.

Derivatives of composite maps (anything built through a Lagrangian or a
generator closure) are approximated by one-shot finite-difference stencils
of interpolation order four whose step grows with the derivative order,
which keeps the rounding amplification of an order-k stencil (~eps/step^k)
bounded; derivatives of the trajectory itself always come from its exact
closures.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .core import (
    AnalyticFunction,
    Lagrangian,
    SampledFunction,
    TimeGrid,
    VectorField,
    as_alpha,
    frac_binomial,
    gamma,
)
from .noether import ConservedQuantitySeries, _series
from .util import cumulative_trapezoid, trapezoid, zero_nonfinite

__all__ = [
    "TruncationLevel",
    "TestFunctionSpace",
    "coefficient_table",
    "series_left_derivative",
    "series_left_derivative_fn",
    "series_right_partial_sum",
    "ApproximatedLagrangian",
    "approximated_lagrangian",
    "el_n_residual",
    "prolonged_criterion_residual",
    "cl_n_series",
    "weak_pairing",
    "default_test_space",
    "monomial",
    "exponential",
    "polynomial_from_coeffs",
]

MAX_FD_ORDER = 8


@dataclass(frozen=True)
class TruncationLevel:
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("truncation level must be a positive integer")


def _as_level(N) -> int:
    if isinstance(N, TruncationLevel):
        return N.N
    return TruncationLevel(int(N)).N


@dataclass(frozen=True)
class TestFunctionSpace:
    """Analytic test functions on an interval (c, d) strictly containing [a, b].

    The interval must be wide enough that every ball of radius b - a
    centered in [a, b] stays inside (c, d); the default construction uses
    (a - 1.1 (b - a), b + 1.1 (b - a)).
    """

    interval: Tuple[float, float]
    functions: Tuple[Tuple[str, AnalyticFunction], ...]
    seminorm_windows: Tuple[Tuple[float, float], ...]

    def check_covers(self, a: float, b: float):
        c, d = self.interval
        if not (c < a - (b - a) and b + (b - a) < d):
            raise ValueError("test-function interval too narrow for the radius condition")


def monomial(k: int) -> AnalyticFunction:
    def ev(order, t):
        if order > k:
            return 0.0
        return math.factorial(k) / math.factorial(k - order) * t ** (k - order)

    return AnalyticFunction(eval=ev, max_order=64)


def exponential(center: float = 0.0, rate: float = 1.0) -> AnalyticFunction:
    return AnalyticFunction(
        eval=lambda order, t: rate**order * math.exp(rate * (t - center)), max_order=64
    )


def polynomial_from_coeffs(coeffs: Sequence[float]) -> AnalyticFunction:
    """Analytic function from polynomial coefficients (lowest power first)."""
    c = np.asarray(coeffs, dtype=float)

    def ev(order, t):
        p = np.polynomial.Polynomial(c)
        return p.deriv(order)(t) if order else p(t)

    return AnalyticFunction(eval=ev, max_order=64)


def default_test_space(a: float, b: float) -> TestFunctionSpace:
    span = b - a
    funcs = [(f"t^{k}", monomial(k)) for k in range(4)]
    funcs.append(("exp", exponential(center=a)))
    return TestFunctionSpace(
        interval=(a - 1.1 * span, b + 1.1 * span),
        functions=tuple(funcs),
        seminorm_windows=((a + 0.1 * span, b - 0.1 * span),),
    )


def coefficient_table(alpha, N, a: float, times: np.ndarray) -> np.ndarray:
    """Rows i = 0..N of (alpha choose i) (t-a)^(i-alpha) / Gamma(i+1-alpha).

    Every series operation draws its coefficients from this one routine.
    The i = 0 row is singular at t = a (reported as inf there).
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    t = np.asarray(times, dtype=float)
    out = np.empty((n_ + 1, t.size))
    with np.errstate(divide="ignore"):
        for i in range(n_ + 1):
            out[i] = (
                frac_binomial(al, i) / gamma(i + 1.0 - al) * (t - a) ** (i - al)
            )
    return out


def _coeff_derivative(alpha: float, i: int, j: int, a: float, t: np.ndarray) -> np.ndarray:
    """Exact j-th derivative of the i-th coefficient function."""
    p = i - alpha
    fall = 1.0
    for m in range(j):
        fall *= p - m
    with np.errstate(divide="ignore", invalid="ignore"):
        return (
            frac_binomial(alpha, i)
            / gamma(i + 1.0 - alpha)
            * fall
            * (t - a) ** (p - j)
        )


def series_left_derivative_fn(f: AnalyticFunction, alpha, N, a: float) -> Callable[[float], float]:
    """Closure evaluating the truncated left-derivative series at any t > a."""
    al = as_alpha(alpha)
    n_ = _as_level(N)
    if n_ > f.max_order:
        raise ValueError(f"truncation level {n_} exceeds max_order {f.max_order}")
    coefs = [frac_binomial(al, i) / gamma(i + 1.0 - al) for i in range(n_ + 1)]

    def s_n(t: float) -> float:
        acc = 0.0
        for i in range(n_ + 1):
            acc += coefs[i] * (t - a) ** (i - al) * f.eval(i, t)
        return acc

    return s_n


def series_left_derivative(f: AnalyticFunction, alpha, N, grid: TimeGrid) -> SampledFunction:
    """Truncated series for the left fractional derivative at the grid nodes.

    At t = a the zeroth term is singular unless f(a) = 0; the value there
    follows the same endpoint-limit convention as the quadrature operators
    (zero for vanishing data, +-inf and a flag otherwise).
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    if n_ > f.max_order:
        raise ValueError(f"truncation level {n_} exceeds max_order {f.max_order}")
    table = coefficient_table(al, n_, grid.a, grid.nodes)
    derivs = np.stack([f.derivative_values(i, grid.nodes) for i in range(n_ + 1)])
    with np.errstate(invalid="ignore"):
        vals = (table * derivs).sum(axis=0)
    f_a = f.eval(0, grid.a)
    vals[0] = 0.0 if f_a == 0.0 else math.copysign(math.inf, f_a)
    meta = {"truncation": n_}
    if not np.isfinite(vals[0]):
        meta["divergent_nodes"] = (0,)
    return SampledFunction(grid=grid, values=vals, meta=meta)


def series_right_partial_sum(F: AnalyticFunction, alpha, N, grid: TimeGrid) -> SampledFunction:
    """Partial sums representing the right derivative of compactly
    supported data through left-anchored coefficients.

    Computes sum_i (-d/dt)^i [F * coeff_i] with the product differentiated
    by the Leibniz rule: F-derivatives from the closures, coefficient
    derivatives in closed form.  The sums approximate the right
    Riemann-Liouville derivative of F weakly when F and its derivatives
    vanish at the upper end; a warning is emitted otherwise.
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    if n_ > F.max_order:
        raise ValueError(f"truncation level {n_} exceeds max_order {F.max_order}")
    if abs(F.eval(0, grid.b)) > 1e-12:
        warnings.warn(
            "partial sums of the right-derivative expansion need data vanishing "
            "at the upper end; F(b) != 0 so weak convergence is not guaranteed",
            stacklevel=2,
        )
    t = grid.nodes
    Fder = np.stack([F.derivative_values(k, t) for k in range(n_ + 1)])
    vals = np.zeros_like(t)
    for i in range(n_ + 1):
        for k in range(i + 1):
            vals += (
                (-1.0) ** i
                * math.comb(i, k)
                * Fder[k]
                * _coeff_derivative(al, i, i - k, grid.a, t)
            )
    meta = {"truncation": n_}
    if not np.all(np.isfinite(vals)):
        meta["divergent_nodes"] = tuple(np.nonzero(~np.isfinite(vals))[0].tolist())
    return SampledFunction(grid=grid, values=vals, meta=meta)


# ---------------------------------------------------------------------------
# finite-difference machinery for composite maps

def _fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Weights of derivative order m at z from samples at points x."""
    n = x.size
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _safe_eval(fn: Callable[[float], float], t: float) -> float:
    try:
        return fn(t)
    except (ZeroDivisionError, OverflowError, ValueError):
        return float("nan")


def _derivative_of_callable(
    fn: Callable[[float], float],
    times: np.ndarray,
    order: int,
    lo: float,
    hi: float,
    base_step: float,
) -> np.ndarray:
    """Order-``order`` derivative of a scalar callable at given times.

    Uses a single (order + 5)-point stencil of interpolation order >= 4
    per evaluation point.  The step grows with the order (roughly as
    eps^(1/(order+4))) so that the rounding amplification eps/step^order
    stays near the truncation level.  Near the ends of [lo, hi] the
    stencil becomes fully one-sided and rooted at the target point, so it
    never crosses the singular lower end of the composite maps it is
    applied to.
    """
    if order == 0:
        return np.array([_safe_eval(fn, float(t)) for t in times])
    if order > MAX_FD_ORDER:
        raise ValueError(f"derivative order {order} exceeds the cap {MAX_FD_ORDER}")
    eps = np.finfo(float).eps
    scale = max(abs(lo), abs(hi), 1.0)
    step = max(base_step, scale * eps ** (1.0 / (order + 4.0)))
    npts = order + 5
    half = (npts - 1) // 2
    step = min(step, (hi - lo) / (npts - 1))
    out = np.empty(len(times))
    cache: dict = {}
    for idx, t in enumerate(np.asarray(times, dtype=float)):
        if t - half * step < lo:
            offsets = np.arange(npts)  # forward, rooted at the target
        elif t + half * step > hi:
            offsets = -np.arange(npts)  # backward, rooted at the target
        else:
            offsets = np.arange(npts) - half
        pts = t + offsets * step
        w = _fornberg_weights(t, pts, order)
        acc = 0.0
        for p, ww in zip(pts, w):
            key = round(p, 12)
            val = cache.get(key)
            if val is None:
                val = _safe_eval(fn, float(p))
                cache[key] = val
            acc += ww * val
        out[idx] = acc
    return out


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApproximatedLagrangian:
    """Lagrangian with the fractional-derivative slot fed by the series.

    Exposes the partials of the reduced integrand with respect to the
    trajectory and each of its derivatives; the partial with respect to
    the i-th derivative is dL/dv times the i-th series coefficient.
    """

    base: Lagrangian
    alpha: float
    N: int
    trajectory: AnalyticFunction
    a: float
    series: Callable[[float], float]

    def value(self, t: float) -> float:
        return self.base.value(t, self.trajectory.eval(0, t), self.series(t))

    def d_u(self, t: float) -> float:
        u = self.trajectory.eval(0, t)
        s = self.series(t)
        c0 = float(coefficient_table(self.alpha, 0, self.a, np.array([t]))[0, 0])
        return self.base.d2(t, u, s) + self.base.d3(t, u, s) * c0

    def d_ui(self, i: int, t: float) -> float:
        if not 1 <= i <= self.N:
            raise ValueError(f"derivative slot {i} outside 1..{self.N}")
        u = self.trajectory.eval(0, t)
        s = self.series(t)
        ci = float(coefficient_table(self.alpha, i, self.a, np.array([t]))[i, 0])
        return self.base.d3(t, u, s) * ci


def approximated_lagrangian(L: Lagrangian, alpha, N, u: AnalyticFunction) -> ApproximatedLagrangian:
    al = as_alpha(alpha)
    n_ = _as_level(N)
    return ApproximatedLagrangian(
        base=L,
        alpha=al,
        N=n_,
        trajectory=u,
        a=0.0,
        series=series_left_derivative_fn(u, al, n_, 0.0),
    )


def _composite_p3(L: Lagrangian, u: AnalyticFunction, s_n: Callable[[float], float]):
    def p3(t: float) -> float:
        return L.d3(t, u.eval(0, t), s_n(t))

    return p3


def _alternating_product_derivative_sum(
    alpha: float,
    n_: int,
    a: float,
    grid: TimeGrid,
    factor: Callable[[float], float],
) -> np.ndarray:
    """sum_i (-d/dt)^i [factor * coeff_i] on the grid nodes.

    Leibniz splits each term into exact coefficient derivatives and
    stencil derivatives of the composite factor.
    """
    t = grid.nodes
    fk = [
        _derivative_of_callable(factor, t, k, grid.a, grid.b, 4.0 * grid.h)
        for k in range(n_ + 1)
    ]
    vals = np.zeros_like(t)
    with np.errstate(invalid="ignore"):
        for i in range(n_ + 1):
            for k in range(i + 1):
                vals += (
                    (-1.0) ** i
                    * math.comb(i, k)
                    * fk[k]
                    * _coeff_derivative(alpha, i, i - k, a, t)
                )
    return vals


def el_n_residual(
    L: Lagrangian, alpha, N, u: AnalyticFunction, grid: TimeGrid
) -> SampledFunction:
    """Stationarity residual of the truncated problem at the grid nodes.

    Residual: dL/du + sum_i (-d/dt)^i [dL/dv * coeff_i], both partials
    evaluated along (t, u(t), truncated series).  Values at and near the
    lower end carry the genuine (t-a)^(-alpha) singularity of the zeroth
    coefficient; non-finite nodes are flagged.
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    if n_ > MAX_FD_ORDER:
        raise ValueError(f"truncation level {n_} exceeds the derivative cap {MAX_FD_ORDER}")
    s_n = series_left_derivative_fn(u, al, n_, grid.a)
    t = grid.nodes
    p2 = np.array([L.d2(ti, u.eval(0, ti), s_n(ti)) if ti > grid.a else np.nan for ti in t])
    if u.eval(0, grid.a) == 0.0:
        p2[0] = L.d2(grid.a, 0.0, 0.0)
    vals = p2 + _alternating_product_derivative_sum(
        al, n_, grid.a, grid, _composite_p3(L, u, s_n)
    )
    meta = {"truncation": n_}
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        meta["divergent_nodes"] = tuple(bad.tolist())
    return SampledFunction(grid=grid, values=vals, meta=meta)


def prolonged_criterion_residual(
    L: Lagrangian, alpha, N, v_N: VectorField, u: AnalyticFunction, grid: TimeGrid
) -> SampledFunction:
    """Invariance condition of the truncated problem under a prolonged field.

    Consolidated form:
        tau dL/dt + xi dL/du
        + [ sum_i coeff_i (xi - tau u')^(i) + (d/dt S_N) tau ] dL/dv
        + L (tau_t + tau_u u'),
    with S_N the truncated series, partials of L evaluated at
    (t, u, S_N), derivatives of the characteristic xi - tau u' by the
    order-adapted stencils, and d/dt S_N in closed form from the
    trajectory closures.
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    if n_ > MAX_FD_ORDER:
        raise ValueError(f"truncation level {n_} exceeds the derivative cap {MAX_FD_ORDER}")
    if n_ + 1 > u.max_order:
        raise ValueError("trajectory closures must supply order N+1 derivatives")
    s_n = series_left_derivative_fn(u, al, n_, grid.a)
    t = grid.nodes

    def psi(tt: float) -> float:
        uu = u.eval(0, tt)
        return v_N.xi(tt, uu) - v_N.tau(tt, uu) * u.eval(1, tt)

    psi_k = [
        _derivative_of_callable(psi, t, k, grid.a, grid.b, 4.0 * grid.h)
        for k in range(n_ + 1)
    ]
    table = coefficient_table(al, n_, grid.a, t)

    # d/dt of the truncated series, term by term (exact)
    s_dot = np.zeros_like(t)
    with np.errstate(invalid="ignore"):
        for i in range(n_ + 1):
            s_dot += _coeff_derivative(al, i, 1, grid.a, t) * u.derivative_values(i, t)
            s_dot += table[i] * u.derivative_values(i + 1, t)

    uu = u.derivative_values(0, t)
    udot = u.derivative_values(1, t)
    sn = np.array([s_n(ti) if ti > grid.a else np.nan for ti in t])
    if uu[0] == 0.0:
        sn[0] = 0.0
    tau = np.array([v_N.tau(ti, ui) for ti, ui in zip(t, uu)])
    xi = np.array([v_N.xi(ti, ui) for ti, ui in zip(t, uu)])
    tau_dot = np.array(
        [v_N.tau_t(ti, ui) + v_N.tau_u(ti, ui) * du for ti, ui, du in zip(t, uu, udot)]
    )
    p1 = np.empty_like(t)
    p2 = np.empty_like(t)
    p3 = np.empty_like(t)
    lv = np.empty_like(t)
    for idx in range(t.size):
        if np.isfinite(sn[idx]):
            args = (t[idx], uu[idx], sn[idx])
            p1[idx], p2[idx], p3[idx] = L.d1(*args), L.d2(*args), L.d3(*args)
            lv[idx] = L.value(*args)
        else:
            p1[idx] = p2[idx] = p3[idx] = lv[idx] = np.nan
    with np.errstate(invalid="ignore"):
        bracket = sum(table[i] * psi_k[i] for i in range(n_ + 1)) + s_dot * tau
        vals = tau * p1 + xi * p2 + bracket * p3 + lv * tau_dot
    meta = {"truncation": n_}
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        meta["divergent_nodes"] = tuple(bad.tolist())
    return SampledFunction(grid=grid, values=vals, meta=meta)


def cl_n_series(
    L: Lagrangian, alpha, N, v_N: VectorField, u: AnalyticFunction, grid: TimeGrid
) -> ConservedQuantitySeries:
    """Truncated conserved quantity along the trajectory.

    L tau plus the running integral pairing the coefficient-weighted
    derivatives of the characteristic against dL/dv, minus the
    characteristic times the alternating product-derivative sum.
    Accumulated by cumulative trapezoid with non-finite (singular-node)
    integrand values dropped.
    """
    al = as_alpha(alpha)
    n_ = _as_level(N)
    s_n = series_left_derivative_fn(u, al, n_, grid.a)
    t = grid.nodes

    def psi(tt: float) -> float:
        uu = u.eval(0, tt)
        return v_N.xi(tt, uu) - v_N.tau(tt, uu) * u.eval(1, tt)

    psi_k = [
        _derivative_of_callable(psi, t, k, grid.a, grid.b, 4.0 * grid.h)
        for k in range(n_ + 1)
    ]
    table = coefficient_table(al, n_, grid.a, t)
    uu = u.derivative_values(0, t)
    sn = np.array([s_n(ti) if ti > grid.a else np.nan for ti in t])
    if uu[0] == 0.0:
        sn[0] = 0.0
    p3 = np.empty_like(t)
    lv = np.empty_like(t)
    for idx in range(t.size):
        if np.isfinite(sn[idx]):
            p3[idx] = L.d3(t[idx], uu[idx], sn[idx])
            lv[idx] = L.value(t[idx], uu[idx], sn[idx])
        else:
            p3[idx] = np.nan
            lv[idx] = np.nan
    tau = np.array([v_N.tau(ti, ui) for ti, ui in zip(t, uu)])
    t_n = _alternating_product_derivative_sum(
        al, n_, grid.a, grid, _composite_p3(L, u, s_n)
    )
    with np.errstate(invalid="ignore"):
        pair = sum(table[i] * psi_k[i] for i in range(n_ + 1)) * p3
        integrand = pair - psi_k[0] * t_n
        c_vals = lv * tau + cumulative_trapezoid(zero_nonfinite(integrand), grid.h)
    return _series(grid, grid.n, f"cl-N{n_}", c_vals)


def weak_pairing(f: SampledFunction, phi: AnalyticFunction) -> float:
    """Trapezoid pairing of grid samples against an analytic test function.

    The sampled function is extended by zero outside its interval, so the
    pairing is the plain trapezoid of the product over the grid (with
    non-finite singular-node samples dropped).
    """
    vals = phi.derivative_values(0, f.grid.nodes)
    with np.errstate(invalid="ignore"):
        prod = f.values * vals
    return trapezoid(zero_nonfinite(prod), f.grid.h)
