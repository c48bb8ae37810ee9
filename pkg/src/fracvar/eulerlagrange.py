"""Pointwise residuals of the fractional Euler-Lagrange equations.

For a Lagrangian L(t, u, v), with v the left fractional derivative of u,
the stationarity condition couples dL/du with a right-sided fractional
derivative of the composite map  t -> dL/dv (t, u(t), v(t)).  That map is
sampled on the grid first and the right-sided operator is applied to the
samples.  Five equivalent-or-related forms are provided:

* full-interval form with the right Riemann-Liouville derivative,
* full-interval form with the right Caputo derivative plus the explicit
  (b-t)^(-alpha) boundary term,
* the window form on a subinterval (A, B) (Caputo flavor),
* the exterior condition on (a, A) (difference of two right derivatives),
* the window form with the right Riemann-Liouville derivative to B.

Values at the node where a right-sided operator is singular (t = B with a
non-vanishing composite) follow the endpoint conventions of
:mod:`fracvar.fracops` and are excluded from max-norms by callers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import Lagrangian, SampledFunction, SubInterval, as_alpha, gamma
from . import fracops
from .fracops import Family, subgrid
from .util import zero_nonfinite

__all__ = [
    "ELForm",
    "ELResidual",
    "el_residual_rl",
    "el_residual_caputo",
    "el_residual_subinterval",
    "el_equivalence_check",
    "lagrangian_partials_on_grid",
]


class ELForm(enum.Enum):
    RL_FULL_INTERVAL = "rl-full-interval"
    CAPUTO_WITH_BOUNDARY_TERM = "caputo-with-boundary-term"
    AB_INTERIOR = "ab-interior"
    AA_EXTERIOR = "aa-exterior"
    AB_RL = "ab-rl"


@dataclass(frozen=True)
class ELResidual:
    form: ELForm
    values: SampledFunction
    subinterval: Optional[SubInterval] = None

    def interior_max(self) -> float:
        """Max magnitude over interior nodes, ignoring flagged singular ends."""
        v = self.values.values[1:-1]
        v = v[np.isfinite(v)]
        return float(np.abs(v).max()) if v.size else 0.0


def lagrangian_partials_on_grid(L: Lagrangian, alpha, u: SampledFunction):
    """Sample v = (left fractional derivative of u) and the partials of L.

    Returns (v, dL/dt, dL/du, dL/dv) as arrays on the grid of u.  Where v
    carries a divergent endpoint the partials are NaN there and callers
    treat the node as singular.
    """
    a = as_alpha(alpha)
    v = fracops.apply_operator(fracops.LEFT_RL_DERIVATIVE, a, u)
    t = u.grid.nodes
    uu = u.values
    vv = v.values
    def sample(fn):
        out = np.empty_like(uu)
        for i in range(uu.size):
            out[i] = fn(t[i], uu[i], vv[i]) if np.isfinite(vv[i]) else np.nan
        return out
    return v, sample(L.d1), sample(L.d2), sample(L.d3)


def _meta_from(vals: np.ndarray) -> dict:
    bad = np.nonzero(~np.isfinite(vals))[0]
    return {"divergent_nodes": tuple(bad.tolist())} if bad.size else {}


def _sanitized(p3: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Finite copy of the composite map plus the indices that were bad.

    A divergent value can occur only at a singular endpoint; it must not
    poison the dense matrix products (0 * nan = nan), so the operator sees
    zeros there and the affected output nodes are re-marked afterwards.
    """
    bad = np.nonzero(~np.isfinite(p3))[0]
    return zero_nonfinite(p3), bad


def el_residual_rl(L: Lagrangian, alpha, u: SampledFunction) -> ELResidual:
    """dL/du + (right RL derivative to b of dL/dv) on the full interval."""
    a = as_alpha(alpha)
    _, _, p2, p3 = lagrangian_partials_on_grid(L, a, u)
    p3c, bad = _sanitized(p3)
    rd = fracops.apply_operator(
        fracops.RIGHT_RL_DERIVATIVE, a, SampledFunction(u.grid, p3c)
    )
    vals = p2 + rd.values
    vals[bad] = np.nan
    out = SampledFunction(u.grid, vals, meta=_meta_from(vals))
    return ELResidual(form=ELForm.RL_FULL_INTERVAL, values=out)


def el_residual_caputo(L: Lagrangian, alpha, u: SampledFunction) -> ELResidual:
    """Caputo flavor: dL/du + right Caputo of dL/dv + explicit boundary term."""
    a = as_alpha(alpha)
    _, _, p2, p3 = lagrangian_partials_on_grid(L, a, u)
    p3c, bad = _sanitized(p3)
    rc = fracops.apply_operator(fracops.RIGHT_CAPUTO, a, SampledFunction(u.grid, p3c))
    t = u.grid.nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = p3c[-1] / (gamma(1.0 - a) * (u.grid.b - t) ** a)
    if p3c[-1] == 0.0:
        boundary[-1] = 0.0
    vals = p2 + rc.values + boundary
    vals[bad] = np.nan
    out = SampledFunction(u.grid, vals, meta=_meta_from(vals))
    return ELResidual(form=ELForm.CAPUTO_WITH_BOUNDARY_TERM, values=out)


def _window_residual_caputo(p2, p3, a: float, u: SampledFunction, iA: int, iB: int):
    rc = fracops.apply_right_operator_to_bound(
        Family.CAPUTO_DERIVATIVE, a, SampledFunction(u.grid, p3), iB
    )
    t = u.grid.nodes[: iB + 1]
    B = u.grid.nodes[iB]
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = p3[iB] / (gamma(1.0 - a) * (B - t) ** a)
    if p3[iB] == 0.0:
        boundary[-1] = 0.0
    return (p2[: iB + 1] + rc + boundary)[iA:]


def el_residual_subinterval(
    L: Lagrangian, alpha, u: SampledFunction, AB: SubInterval
) -> Tuple[ELResidual, Optional[ELResidual]]:
    """Window form on (A, B) and the exterior condition on (a, A).

    The first residual is the Caputo-flavor equation restricted to the
    window; the second is the difference of the right derivatives to B and
    to A of dL/dv, defined on (a, A).  When A coincides with the grid's
    lower end the exterior region is empty and None is returned for it.
    """
    a = as_alpha(alpha)
    iA, iB = AB.indices(u.grid)
    if iB < 4:
        raise ValueError("window end B must sit at node index >= 4")
    _, _, p2, p3 = lagrangian_partials_on_grid(L, a, u)
    p3, _ = _sanitized(p3)

    vals_ab = _window_residual_caputo(p2, p3, a, u, iA, iB)
    res_ab = ELResidual(
        form=ELForm.AB_INTERIOR,
        values=SampledFunction(subgrid(u.grid, iA, iB), vals_ab, meta=_meta_from(vals_ab)),
        subinterval=AB,
    )
    if iA == 0:
        return res_ab, None
    if iA < 4:
        raise ValueError("exterior region needs A at node index >= 4 (or A = a)")
    p3f = SampledFunction(u.grid, p3)
    rd_B = fracops.apply_right_operator_to_bound(Family.RL_DERIVATIVE, a, p3f, iB)
    rd_A = fracops.apply_right_operator_to_bound(Family.RL_DERIVATIVE, a, p3f, iA)
    vals_aa = rd_B[: iA + 1] - rd_A
    res_aa = ELResidual(
        form=ELForm.AA_EXTERIOR,
        values=SampledFunction(subgrid(u.grid, 0, iA), vals_aa, meta=_meta_from(vals_aa)),
        subinterval=AB,
    )
    return res_ab, res_aa


def el_equivalence_check(L: Lagrangian, alpha, u: SampledFunction, AB: SubInterval) -> float:
    """Max gap on the open window between its Caputo and RL formulations."""
    a = as_alpha(alpha)
    iA, iB = AB.indices(u.grid)
    _, _, p2, p3 = lagrangian_partials_on_grid(L, a, u)
    p3, _ = _sanitized(p3)
    vals_ab = _window_residual_caputo(p2, p3, a, u, iA, iB)
    rd_B = fracops.apply_right_operator_to_bound(
        Family.RL_DERIVATIVE, a, SampledFunction(u.grid, p3), iB
    )
    vals_rl = (p2[: iB + 1] + rd_B)[iA:]
    gap = np.abs(vals_ab[1:-1] - vals_rl[1:-1])
    gap = gap[np.isfinite(gap)]
    return float(gap.max()) if gap.size else 0.0
