"""Group actions on trajectories and variational-symmetry diagnostics.

Two independent routes are provided for deciding whether a one-parameter
family of point transformations leaves the action integral invariant:

* ``finite_symmetry_defect`` transforms the trajectory with an actual
  group element, recomputes the action over the transformed window, and
  subtracts the original action.  For a symmetry the defect is o(eta); for
  exact groups (translations) it vanishes to rounding.
* ``infinitesimal_criterion_residual`` evaluates the first-order (in the
  group parameter) pointwise condition on the generator.  Its window
  integral is the eta-derivative of the defect at eta = 0, which is what
  the consistency tests exercise.

Two bound policies mirror the two ways the lower bound of the fractional
derivative can respond to the group: it stays put (memory-type operators;
requires the generator to vanish at the lower bound) or it is dragged
along with time (nonlocal-interaction-type operators; the variation then
picks up an extra u(a)-weighted singular term unless u(a) = 0).

Convention: the transformed trajectory is defined by the group action
exactly where the original trajectory is defined; under the fixed-bound
policy with a generator that moves the lower end to the right, the
fractional derivative from the original bound is undefined and an error
is raised.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import (
    GroupElement,
    Lagrangian,
    SampledFunction,
    SubInterval,
    VectorField,
    as_alpha,
    gamma,
    make_uniform_grid,
)
from . import fracops
from .util import derivative_4th, trapezoid_window, zero_nonfinite

__all__ = [
    "BoundPolicy",
    "VariationReport",
    "apply_group",
    "variation_report",
    "finite_symmetry_defect",
    "infinitesimal_criterion_residual",
]

_ZERO_TOL = 1e-12


class BoundPolicy(enum.Enum):
    FIXED_A = "fixed-a"
    TRANSFORMED_A = "transformed-a"


@dataclass(frozen=True)
class VariationReport:
    """First-order variation data along a trajectory.

    ``delta_u`` is the variation at frozen time, xi - tau u'.
    ``Delta_frac`` is the total variation of the left fractional
    derivative.  ``extra_term`` is the u(a)-weighted singular contribution
    that appears only when the lower bound is transformed; it vanishes
    identically under the fixed-bound policy and whenever u(a) = 0.
    """

    delta_u: SampledFunction
    Delta_frac: SampledFunction
    extra_term: SampledFunction


def _transform_points(g: GroupElement, u: SampledFunction):
    t = u.grid.nodes
    uu = u.values
    tbar = np.array([g.Xi(ti, ui) for ti, ui in zip(t, uu)])
    ubar = np.array([g.Psi(ti, ui) for ti, ui in zip(t, uu)])
    if not np.all(np.diff(tbar) > 0):
        raise ValueError("transformed times are not strictly increasing")
    return tbar, ubar


def apply_group(g: GroupElement, u: SampledFunction) -> SampledFunction:
    """Transformed trajectory resampled onto a uniform grid.

    The image points (Xi(t_i, u_i), Psi(t_i, u_i)) are interpolated with a
    monotone (Fritsch-Carlson) cubic and resampled on a uniform grid over
    the transformed interval with the original number of cells.  The new
    interval is recorded in the metadata.
    """
    tbar, ubar = _transform_points(g, u)
    grid2 = make_uniform_grid(tbar[0], tbar[-1], u.grid.n)
    vals = PchipInterpolator(tbar, ubar)(grid2.nodes)
    return SampledFunction(
        grid=grid2, values=vals, meta={"interval": (tbar[0], tbar[-1]), "eta": g.eta}
    )


def variation_report(
    v: VectorField, alpha, u: SampledFunction, policy: BoundPolicy
) -> VariationReport:
    """delta u, the total variation of the fractional derivative, and the
    extra lower-bound term, all sampled on the trajectory's grid."""
    a = as_alpha(alpha)
    grid = u.grid
    t = grid.nodes
    udot = derivative_4th(u.values, grid.h)
    tau = np.array([v.tau(ti, ui) for ti, ui in zip(t, u.values)])
    xi = np.array([v.xi(ti, ui) for ti, ui in zip(t, u.values)])
    delta = xi - tau * udot
    delta_f = SampledFunction(grid, delta)

    d_delta = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, delta_f)
    w = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, u)
    wdot = derivative_4th(w.values, grid.h, skip_nonfinite_ends=True)

    u_a = u.values[0]
    if policy is BoundPolicy.FIXED_A or u_a == 0.0:
        extra = np.zeros_like(t)
        extra_meta = {}
    else:
        tau_a = v.tau(grid.a, u_a)
        with np.errstate(divide="ignore"):
            extra = (a / gamma(1.0 - a)) * u_a * (t - grid.a) ** (-(a + 1.0)) * tau_a
        extra_meta = {"divergent_nodes": (0,), "singular_exponent": a + 1.0}

    total = d_delta.values + wdot * tau + extra
    meta = {}
    bad = np.nonzero(~np.isfinite(total))[0]
    if bad.size:
        meta["divergent_nodes"] = tuple(bad.tolist())
    return VariationReport(
        delta_u=delta_f,
        Delta_frac=SampledFunction(grid, total, meta=meta),
        extra_term=SampledFunction(grid, extra, meta=extra_meta),
    )


def _action_integrand(L: Lagrangian, u: SampledFunction, w: np.ndarray) -> np.ndarray:
    t = u.grid.nodes
    out = np.empty_like(t)
    for i in range(t.size):
        out[i] = L.value(t[i], u.values[i], w[i]) if np.isfinite(w[i]) else np.nan
    return out


def finite_symmetry_defect(
    L: Lagrangian,
    alpha,
    g: GroupElement,
    u: SampledFunction,
    window: SubInterval,
    policy: BoundPolicy,
) -> float:
    """Action over the transformed window minus action over the window.

    The fractional derivative of the transformed trajectory is taken from
    the transformed lower bound (transformed-bound policy) or from the
    original one (fixed-bound policy).  For a variational symmetry the
    result is o(eta); for exact group invariance it sits at rounding
    level.
    """
    a = as_alpha(alpha)
    grid = u.grid
    w0 = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, u).values
    f0 = zero_nonfinite(_action_integrand(L, u, w0))
    i_orig = trapezoid_window(grid.nodes, f0, window.A, window.B)

    tbar, ubar = _transform_points(g, u)
    if policy is BoundPolicy.TRANSFORMED_A:
        grid2 = make_uniform_grid(tbar[0], tbar[-1], grid.n)
    else:
        if tbar[0] > grid.a + _ZERO_TOL:
            raise ValueError(
                "fixed-bound policy: transformed trajectory is undefined on "
                f"[{grid.a}, {tbar[0]}); the generator must not move the lower bound right"
            )
        grid2 = make_uniform_grid(min(grid.a, tbar[0]), tbar[-1], grid.n)
    vals2 = PchipInterpolator(tbar, ubar)(grid2.nodes)
    ub = SampledFunction(grid2, vals2)
    wbar = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, ub).values
    fbar = zero_nonfinite(_action_integrand(L, ub, wbar))

    uA = float(np.interp(window.A, grid.nodes, u.values))
    uB = float(np.interp(window.B, grid.nodes, u.values))
    lo, hi = g.Xi(window.A, uA), g.Xi(window.B, uB)
    i_trans = trapezoid_window(grid2.nodes, fbar, lo, hi)
    return i_trans - i_orig


def infinitesimal_criterion_residual(
    L: Lagrangian, alpha, v: VectorField, u: SampledFunction
) -> SampledFunction:
    """Pointwise first-order invariance condition along a trajectory.

    Residual: tau dL/dt + xi dL/du
              + [D(xi - u' tau) + (d/dt D u) tau] dL/dv + L (tau_t + tau_u u'),
    with D the left fractional derivative, u' by fourth-order differences,
    and d/dt of the operator output by the same stencils.  The theorems
    behind the criterion assume either u(a) = 0 (transformed lower bound)
    or a generator vanishing at the lower bound (fixed lower bound); if
    both fail a warning is emitted and the residual is still returned.
    """
    a = as_alpha(alpha)
    grid = u.grid
    t = grid.nodes
    u_a = u.values[0]
    if abs(u_a) > _ZERO_TOL and abs(v.tau(grid.a, u_a)) > _ZERO_TOL:
        warnings.warn(
            "infinitesimal criterion evaluated with u(a) != 0 and a generator "
            "moving the lower bound; neither hypothesis set holds",
            stacklevel=2,
        )
    udot = derivative_4th(u.values, grid.h)
    tau = np.array([v.tau(ti, ui) for ti, ui in zip(t, u.values)])
    xi = np.array([v.xi(ti, ui) for ti, ui in zip(t, u.values)])
    tau_dot = np.array(
        [v.tau_t(ti, ui) + v.tau_u(ti, ui) * du for ti, ui, du in zip(t, u.values, udot)]
    )
    delta = SampledFunction(grid, xi - tau * udot)
    d_delta = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, delta).values
    w = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, u)
    wdot = derivative_4th(w.values, grid.h, skip_nonfinite_ends=True)

    p1 = np.empty_like(t)
    p2 = np.empty_like(t)
    p3 = np.empty_like(t)
    lv = np.empty_like(t)
    for i in range(t.size):
        if np.isfinite(w.values[i]):
            args = (t[i], u.values[i], w.values[i])
            p1[i], p2[i], p3[i], lv[i] = L.d1(*args), L.d2(*args), L.d3(*args), L.value(*args)
        else:
            p1[i] = p2[i] = p3[i] = lv[i] = np.nan
    with np.errstate(invalid="ignore"):
        vals = tau * p1 + xi * p2 + (d_delta + wdot * tau) * p3 + lv * tau_dot
    meta = {}
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        meta["divergent_nodes"] = tuple(bad.tolist())
    return SampledFunction(grid, vals, meta=meta)
