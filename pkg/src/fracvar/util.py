"""Small numerical helpers shared across modules.

Kept deliberately free of domain types: plain arrays in, plain arrays out.
"""

from __future__ import annotations

import math

import numpy as np

from .core import gamma

__all__ = [
    "trapezoid",
    "cumulative_trapezoid",
    "trapezoid_window",
    "derivative_4th",
    "observed_order",
    "kernel_weighted_integral",
    "zero_nonfinite",
]


def trapezoid(y: np.ndarray, h: float) -> float:
    """Composite trapezoid value of uniformly sampled y with spacing h."""
    y = np.asarray(y, dtype=float)
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def cumulative_trapezoid(y: np.ndarray, h: float) -> np.ndarray:
    """Running trapezoid integral, zero at the first node."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * h * (y[1:] + y[:-1]), out=out[1:])
    return out


def zero_nonfinite(y: np.ndarray) -> np.ndarray:
    """Copy of y with non-finite entries replaced by 0.

    Used when an integrand has an integrable endpoint singularity: the
    offending node is dropped from the quadrature, which preserves
    convergence under grid refinement.
    """
    y = np.array(y, dtype=float)
    bad = ~np.isfinite(y)
    if bad.any():
        y[bad] = 0.0
    return y


def trapezoid_window(x: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid integral of piecewise-linear data restricted to [lo, hi].

    Endpoints need not coincide with nodes; partial cells are handled by
    linear interpolation of the integrand.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (x[0] - 1e-12 <= lo < hi <= x[-1] + 1e-12):
        raise ValueError(f"window [{lo}, {hi}] not contained in [{x[0]}, {x[-1]}]")
    lo = max(lo, x[0])
    hi = min(hi, x[-1])
    xs = np.concatenate(([lo], x[(x > lo) & (x < hi)], [hi]))
    ys = np.interp(xs, x, y)
    return float(np.trapezoid(ys, xs))


# Five-point finite-difference stencils of order four for d/dt.
_FD4_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FD4_EDGE = {
    0: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    1: np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
}


def derivative_4th(values: np.ndarray, h: float, skip_nonfinite_ends: bool = False) -> np.ndarray:
    """Fourth-order first derivative of uniformly sampled values.

    Central five-point stencils in the interior, one-sided stencils of the
    same order at the two nodes next to each boundary.  With
    ``skip_nonfinite_ends`` a non-finite endpoint sample (e.g. a divergent
    operator value at the lower bound) is excluded: nearby nodes switch to
    stencils that avoid it, and the endpoint derivative itself is NaN.
    """
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 7:
        raise ValueError("need at least 7 samples for the 4th-order stencils")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)

    def forward(target: int, base: int) -> float:
        return float(np.dot(_FD4_EDGE[target - base], y[base : base + 5])) / h

    def backward(target: int, base: int) -> float:
        # mirror image: reversed window, negated stencil
        return -float(np.dot(_FD4_EDGE[base - target], y[base - 4 : base + 1][::-1])) / h

    left_bad = skip_nonfinite_ends and not np.isfinite(y[0])
    right_bad = skip_nonfinite_ends and not np.isfinite(y[-1])

    if left_bad:
        d[0] = np.nan
        d[1] = forward(1, 1)
        d[2] = forward(2, 1)  # central at node 2 would touch node 0
    else:
        d[0] = forward(0, 0)
        d[1] = forward(1, 0)
    if right_bad:
        d[-1] = np.nan
        d[-2] = backward(n - 2, n - 2)
        d[-3] = backward(n - 3, n - 2)
    else:
        d[-1] = backward(n - 1, n - 1)
        d[-2] = backward(n - 2, n - 1)
    return d


def observed_order(h_values, errors, floor: float = 1e-12) -> float:
    """Least-squares convergence order of errors against step sizes.

    Points at or below ``floor`` are treated as converged to roundoff and
    excluded; if every point sits at the floor the order is reported as
    +inf (the study is saturated, which satisfies any finite order bound).
    """
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > floor
    if keep.sum() == 0:
        return math.inf
    if keep.sum() == 1:
        # a single informative point cannot determine a slope; if the rest
        # saturated, convergence was at least as fast as observed
        return math.inf if (~keep).any() else 0.0
    slope, _ = np.polyfit(np.log(h[keep]), np.log(e[keep]), 1)
    return float(slope)


def kernel_weighted_integral(
    times: np.ndarray, values: np.ndarray, c: float, alpha: float
) -> float:
    """Integral of values(s) * (c - s)^(-alpha) over the sampled range.

    ``times`` must be uniformly spaced and increasing with c >= times[-1]
    (the kernel's singular point sits at or beyond the right end of the
    range).  The data are interpolated linearly on each cell and the
    kernel is integrated exactly, so the weak singularity at s = c is
    handled without losing the quadrature order.
    """
    s = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if s.size != y.size:
        raise ValueError("times and values must have equal length")
    if s.size < 2:
        return 0.0
    h = s[1] - s[0]
    if c < s[-1] - 1e-12 * max(1.0, abs(c)):
        raise ValueError("kernel point must lie at or beyond the right end of the data")
    beta = 1.0 - alpha  # exponent of the integrated kernel, positive
    d0 = c - s[:-1]  # distance from cell left ends
    d1 = np.maximum(c - s[1:], 0.0)  # distance from cell right ends
    p0 = d0**beta
    p1 = d1**beta
    q0 = d0 ** (beta + 1.0)
    q1 = d1 ** (beta + 1.0)
    # Exact integrals against the two linear hat pieces on each cell.
    int_k = (p0 - p1) / beta
    int_k_s = (q0 - q1) / (beta + 1.0)  # integral of (c-s)^(-alpha) (c-s)
    # weight of the left node: (s_{j+1} - s)/h ; of the right: (s - s_j)/h
    w_left = (int_k_s - d1 * int_k) / h
    w_right = (d0 * int_k - int_k_s) / h
    return float(np.dot(w_left, y[:-1]) + np.dot(w_right, y[1:]))


def mirrored_kernel_weighted_integral(
    times: np.ndarray, values: np.ndarray, c: float, alpha: float
) -> float:
    """Integral of values(s) * (s - c)^(-alpha) with c <= times[0]."""
    s = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    # reflect around the midpoint to reuse the right-singular routine
    return kernel_weighted_integral((-s)[::-1], y[::-1], -c, alpha)


def _kernel_cell_weights(d0: np.ndarray, d1: np.ndarray, h: float, alpha: float):
    """Exact per-cell hat weights against a |distance|^(-alpha) kernel.

    d0, d1 are the kernel distances of each cell's far and near edge
    (d0 > d1 >= 0).  Returns the weights of the far-edge and near-edge
    node values.
    """
    beta = 1.0 - alpha
    p0, p1 = d0**beta, d1**beta
    q0, q1 = d0 ** (beta + 1.0), d1 ** (beta + 1.0)
    int_k = (p0 - p1) / beta
    int_k_d = (q0 - q1) / (beta + 1.0)  # integral of kernel * distance
    w_far = (int_k_d - d1 * int_k) / h
    w_near = (d0 * int_k - int_k_d) / h
    return w_far, w_near


def cumulative_left_kernel_integral(times: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """Prefix integrals of values(s) * (s - times[0])^(-alpha).

    Entry m holds the integral over [times[0], times[m]], with the weakly
    singular kernel at the lower end integrated exactly against the linear
    interpolant of the data.
    """
    s = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    h = s[1] - s[0]
    d0 = s[1:] - s[0]  # far edges (cell right ends)
    d1 = s[:-1] - s[0]  # near edges (cell left ends, first one singular)
    w_far, w_near = _kernel_cell_weights(d0, d1, h, alpha)
    cells = w_near * y[:-1] + w_far * y[1:]
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(cells, out=out[1:])
    return out


def cumulative_right_kernel_integral(
    times: np.ndarray, values: np.ndarray, c: float, alpha: float
) -> np.ndarray:
    """Prefix integrals of values(s) * (c - s)^(-alpha) with c >= times[-1]."""
    s = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    h = s[1] - s[0]
    d0 = c - s[:-1]
    d1 = np.maximum(c - s[1:], 0.0)
    w_far, w_near = _kernel_cell_weights(d0, d1, h, alpha)
    cells = w_far * y[:-1] + w_near * y[1:]
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(cells, out=out[1:])
    return out


def gamma_ratio_binomial(alpha: float, i: int) -> float:
    """(alpha choose i) through the Gamma-ratio identity (cross-check form)."""
    if i == 0:
        return 1.0
    return (
        (-1.0) ** (i - 1)
        * alpha
        * gamma(i - alpha)
        / (gamma(1.0 - alpha) * gamma(i + 1.0))
    )
