"""Martingale classification, uniqueness verdicts, and the two-solution demonstration.

The uniqueness verdict is never measured: for a payoff with asymptotic slope
``eta`` it is Unique when ``eta = 0`` and otherwise follows the martingale
verdict.  The demonstration builds ``w = u + eta delta`` next to the smallest
solution ``u`` and checks that both behave as solutions on the grid.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import feller, mc, pde
from .model import (InconclusiveError, ModelSpec, ZeroBoundaryClass, ZeroKind, auxiliary_drift,
                    classify_zero_boundary)
from .payoff import Payoff, concave_majorant, eta as payoff_eta


class MartingaleVerdict(str, enum.Enum):
    MARTINGALE = "Martingale"
    STRICT_LOCAL = "StrictLocalMartingale"
    INCONCLUSIVE = "Inconclusive"


class Uniqueness(str, enum.Enum):
    UNIQUE = "Unique"
    NON_UNIQUE = "NonUnique"
    INCONCLUSIVE = "Inconclusive"


class DemoRefused(RuntimeError):
    """The two-solution demonstration does not apply to this model and payoff."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


_FROM_FELLER = {
    feller.Verdict.FINITE: MartingaleVerdict.STRICT_LOCAL,
    feller.Verdict.INFINITE: MartingaleVerdict.MARTINGALE,
    feller.Verdict.INCONCLUSIVE: MartingaleVerdict.INCONCLUSIVE,
}


@dataclass(frozen=True)
class ClassificationReport:
    verdict: MartingaleVerdict
    feller: feller.FellerReport
    zero_boundary: ZeroBoundaryClass
    uniqueness: Uniqueness
    reason: str
    eta: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "uniqueness": self.uniqueness.value,
                "reason": self.reason, "eta": self.eta, "feller": self.feller.to_dict(),
                "zero_boundary": self.zero_boundary.to_dict()}


def uniqueness_for(verdict: MartingaleVerdict, eta: float) -> tuple[Uniqueness, str]:
    """Uniqueness verdict and reason from the martingale verdict and the payoff's slope."""
    if eta == 0.0:
        return Uniqueness.UNIQUE, "payoff grows sublinearly (eta = 0)"
    if verdict is MartingaleVerdict.MARTINGALE:
        return Uniqueness.UNIQUE, f"eta = {eta!r} > 0 and the price process is a martingale"
    if verdict is MartingaleVerdict.STRICT_LOCAL:
        return Uniqueness.NON_UNIQUE, (f"eta = {eta!r} > 0 and the price process is a strict "
                                       "local martingale: u + eta delta is a second solution")
    return Uniqueness.INCONCLUSIVE, f"eta = {eta!r} > 0 and the martingale verdict is Inconclusive"


def classify(spec: ModelSpec, g: Payoff, tol: float = 1e-6, c: float = 1.0,
             zero_override=None) -> ClassificationReport:
    """Martingale verdict from Feller's test for the auxiliary diffusion, plus the uniqueness verdict.

    The verdict does not depend on the starting point or the horizon, so
    neither is accepted.  An Inconclusive test is reported as such.
    """
    rep = feller.test_explosion_at_infinity(auxiliary_drift(spec), spec.sigma, c=c, tol=tol)
    verdict = _FROM_FELLER[rep.verdict]
    zbc = classify_zero_boundary(spec, c=c, tol=tol, override=zero_override)
    e = payoff_eta(g)
    uniq, reason = uniqueness_for(verdict, e)
    if verdict is MartingaleVerdict.INCONCLUSIVE and rep.reason:
        reason = f"{reason} ({rep.reason})"
    return ClassificationReport(verdict, rep, zbc, uniq, reason, e)


# ------------------------------------------------------------ error estimates


@dataclass(frozen=True)
class PointValue:
    """A PDE value at one point with its error estimate.

    ``error`` is the change under coarsening plus, when measured, the changes
    from extending the x- and y-domains (``truncation``).
    """

    value: float
    error: float
    coarse_value: float
    truncation: float = 0.0

    def to_dict(self):
        return {"value": self.value, "error": self.error, "coarse_value": self.coarse_value,
                "truncation": self.truncation}


def _boundary_case(spec, zbc):
    if zbc is None:
        zbc = classify_zero_boundary(spec)
    if isinstance(zbc, ZeroBoundaryClass) and zbc.kind is ZeroKind.INCONCLUSIVE:
        raise InconclusiveError("zero-boundary class is Inconclusive; supply an override", zbc.report)
    return zbc


def valuation_point(spec: ModelSpec, g: Payoff, grid: pde.Grid, x0: float, y0: float,
                    zbc=None, top: str = "auto", fine: pde.Field | None = None,
                    truncation: bool = True) -> PointValue:
    """``u(x0, y0, T)`` on ``grid`` with an error estimate.

    The estimate is the change from the grid with every other node and step,
    which bounds the error of a first-order scheme, plus (if ``truncation``)
    the changes from doubling ``x_max`` and from doubling ``y_max``, each with
    the interior nodes kept.
    """
    zbc = _boundary_case(spec, zbc)
    if top == "auto":
        top = pde.top_mode_for(spec)
    if fine is None:
        fine = pde.solve_valuation(spec, g, grid, zbc, top=top)
    coarse = pde.solve_valuation(spec, g, grid.coarsened(), zbc, top=top)
    v = fine.value(x0, y0, grid.T)
    vc = coarse.value(x0, y0, grid.T)
    trunc = 0.0
    if truncation:
        for wider in (grid.extended_x(2.0), grid.extended_y(2.0)):
            wide = pde.solve_valuation(spec, g, wider, zbc, top=top)
            trunc += abs(wide.value(x0, y0, grid.T) - v)
    return PointValue(v, abs(v - vc) + trunc, vc, trunc)


def I_point(spec: ModelSpec, y_grid, y0: float, T: float, n_t: int = 200, top: str = "auto",
            truncation: bool = True) -> PointValue:
    """``I(y0, T)`` with the error estimate of :func:`valuation_point` (coarsening plus doubled ``y_max``)."""
    y = np.asarray(y_grid.y if isinstance(y_grid, pde.Grid) else y_grid, dtype=float)
    if top == "auto":
        top = pde.top_mode_for(spec)
    if (len(y) - 1) % 2 or n_t % 2:
        raise ValueError("need even numbers of y-cells and time steps")
    v = pde.solve_I(spec, y, T, n_t, top=top).value(y=y0)
    vc = pde.solve_I(spec, y[::2], T, n_t // 2, top=top).value(y=y0)
    trunc = 0.0
    if truncation:
        trunc = abs(pde.solve_I(spec, pde._extend(y, 2.0), T, n_t, top=top).value(y=y0) - v)
    return PointValue(v, abs(v - vc) + trunc, vc, trunc)


# ---------------------------------------------------------------- demo


@dataclass
class NonUniquenessDemo:
    u: pde.Field
    w: pde.Field
    eta: float
    max_gap: float
    gap_at_eval: float
    gap_threshold: float
    residual_u: pde.Residual
    residual_w: pde.Residual
    budget: float
    checks: dict = field(default_factory=dict)
    status: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"status": self.status, "passed": self.passed, "checks": dict(self.checks),
                "eta": self.eta, "max_gap": self.max_gap, "gap_at_eval": self.gap_at_eval,
                "gap_threshold": self.gap_threshold, "residual_u": self.residual_u.to_dict(),
                "residual_w": self.residual_w.to_dict(), "budget": self.budget}


def _common_node_change(fine: np.ndarray, coarse: np.ndarray) -> np.ndarray:
    """Nodewise change at the nodes shared by a grid and its coarsening."""
    return np.abs(fine[(slice(None, None, 2),) * fine.ndim] - coarse)


def demo_nonuniqueness(spec: ModelSpec, g: Payoff, grid: pde.Grid, tol: float = 1e-6,
                       x_eval: float = 1.0, y_eval: float | None = None,
                       gap_threshold: float = 1e-3, zero_override=None,
                       residual_t_min: float | None = None) -> NonUniquenessDemo:
    """Two solutions of the valuation equation with the same initial data.

    ``u`` is the smallest solution computed by the PDE solver, ``delta =
    x (1 - I)`` comes from the solver for ``I`` on the same y-nodes and time
    levels, and ``w = u + eta delta``.  Four checks are made: the residual of
    ``w`` is at most three times that of ``u`` (both in the RMS norm), the two
    fields agree with ``g`` at time 0, ``0 <= w <= h`` up to the truncation
    budget, and the gap at ``(x_eval, y_eval, T)`` is at least
    ``gap_threshold x_eval``.  The truncation budget at a node is the change
    of ``u`` plus that of ``eta delta`` under coarsening, so the domination
    check runs on the nodes shared with the coarse grid.

    Raises :class:`DemoRefused` for martingale models (``delta`` would be
    about 0) and for payoffs with ``eta = 0``; an Inconclusive verdict raises
    :class:`InconclusiveError`.
    """
    rep = classify(spec, g, tol=tol, zero_override=zero_override)
    if rep.verdict is MartingaleVerdict.MARTINGALE:
        raise DemoRefused("δ≈0: the price process is a martingale, so u + eta delta = u")
    if rep.verdict is MartingaleVerdict.INCONCLUSIVE:
        raise InconclusiveError("martingale verdict is Inconclusive", rep.feller)
    if rep.eta == 0.0:
        raise DemoRefused("eta = 0: the payoff grows sublinearly and the solution is unique")
    zbc = _boundary_case(spec, rep.zero_boundary)
    y_eval = float(grid.y[len(grid.y) // 4]) if y_eval is None else float(y_eval)
    e = rep.eta

    u = pde.solve_valuation(spec, g, grid, zbc, top="barrier")
    I = pde.solve_I(spec, grid.y, grid.T, grid.n_t, top="barrier")
    d = pde.defect_surface(I).on_grid(grid.x)
    w_vals = u.values + e * d
    w = pde.Field(y=u.y, times=u.times, values=w_vals, x=u.x,
                  meta={**u.meta, "equation": "valuation", "construction": "u + eta delta", "eta": e})

    t_min = grid.T / 4 if residual_t_min is None else residual_t_min
    ru = pde.residual(spec, u, grid, t_min=t_min)
    rw = pde.residual(spec, w, grid, t_min=t_min)

    coarse = grid.coarsened()
    u_c = pde.solve_valuation(spec, g, coarse, zbc, top="barrier")
    I_c = pde.solve_I(spec, coarse.y, coarse.T, coarse.n_t, top="barrier")
    d_c = pde.defect_surface(I_c).on_grid(coarse.x)
    budget = _common_node_change(u.values, u_c.values) + e * _common_node_change(d, d_c)
    h = concave_majorant(g)(grid.x)[None, :, None]
    floor = 1e-12 * float(np.max(np.abs(h)))
    w_sub = w_vals[::2, ::2, ::2]
    h_sub = h[:, ::2, :]

    gap = w_vals - u.values
    max_gap = float(np.max(gap))
    gap_eval = w.value(x_eval, y_eval, grid.T) - u.value(x_eval, y_eval, grid.T)
    g0 = np.asarray(g(grid.x), dtype=float)[:, None]
    checks = {
        "residual_parity": bool(rw.l2 <= 3.0 * ru.l2 + floor),
        "initial_agreement": bool(np.array_equal(w_vals[0], u.values[0])
                                  and np.array_equal(u.values[0], np.broadcast_to(g0, u.values[0].shape))),
        "domination": bool(np.all(w_sub >= -budget - floor) and np.all(w_sub - h_sub <= budget + floor)),
        "gap": bool(gap_eval >= gap_threshold * x_eval),
    }
    if all(checks.values()):
        status = "distinct solutions"
    elif gap_eval > 0 and all(v for k, v in checks.items() if k != "gap"):
        status = "distinct but numerically marginal"
    else:
        status = "failed: " + ", ".join(k for k, v in checks.items() if not v)
    return NonUniquenessDemo(u, w, e, max_gap, float(gap_eval), gap_threshold, ru, rw,
                             float(np.max(budget)), checks, status)


# ---------------------------------------------------------- cross validation


@dataclass(frozen=True)
class CrossValidation:
    pde: PointValue
    mc: mc.Estimate
    discrepancy: float
    bound: float
    passed: bool

    def to_dict(self):
        return {"pde": self.pde.to_dict(), "mc": self.mc.to_dict(), "discrepancy": self.discrepancy,
                "bound": self.bound, "verdict": "PASS" if self.passed else "FAIL"}


def cross_validate(spec: ModelSpec, g: Payoff, x0: float, y0: float, T: float, grid: pde.Grid,
                   cfg: mc.MCConfig, zbc=None, top: str = "auto") -> CrossValidation:
    """Compare the PDE value with the Monte Carlo price; both estimate the smallest solution.

    Passes when ``|pde - mc| <= 3 (std_error + pde error estimate)``.  A
    failed comparison is a verdict, not an exception.
    """
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise ValueError("grid horizon differs from T")
    zbc = _boundary_case(spec, zbc)
    pv = valuation_point(spec, g, grid, x0, y0, zbc, top=top)
    est = mc.price(spec, g, x0, y0, T, cfg, zbc)
    diff = abs(pv.value - est.mean)
    bound = 3.0 * (est.std_error + pv.error)
    return CrossValidation(pv, est, float(diff), float(bound), bool(diff <= bound))


@dataclass(frozen=True)
class ExplosionCrossCheck:
    """``1 - I(y0, T)`` from the PDE against the simulated explosion probability."""

    one_minus_I: PointValue
    explosion: mc.ExplosionEstimate
    discrepancy: float
    bound: float
    passed: bool

    def to_dict(self):
        return {"one_minus_I": self.one_minus_I.to_dict(), "explosion": self.explosion.to_dict(),
                "discrepancy": self.discrepancy, "bound": self.bound, "passed": self.passed}


def explosion_cross_check(spec: ModelSpec, y0: float, T: float, cfg: mc.MCConfig,
                          ny: int = 400, n_t: int = 800, y_max: float | None = None,
                          top: str = "auto") -> ExplosionCrossCheck:
    """Check ``P[zeta <= T] = 1 - I(y0, T)`` within three combined errors.

    With the barrier condition the PDE counts reaching ``y_max`` as
    explosion, so ``y_max`` defaults to ``1e6 max(y0, 1)``, far above the
    simulated barriers; the geometric mesh keeps that affordable.
    """
    y_max = 1e6 * max(y0, 1.0) if y_max is None else y_max
    y = pde.y_nodes(ny, y_max, anchors=[y0], scale=max(y0, 1e-3))
    ip = I_point(spec, y, y0, T, n_t, top=top)
    om = PointValue(1.0 - ip.value, ip.error, 1.0 - ip.coarse_value)
    ex = mc.explosion_probability(auxiliary_drift(spec), spec.sigma, y0, T, cfg)
    diff = abs(om.value - ex.mean)
    bound = 3.0 * (ex.std_error + om.error)
    return ExplosionCrossCheck(om, ex, float(diff), float(bound), bool(diff <= bound + 1e-12))


__all__ = [
    "MartingaleVerdict", "Uniqueness", "DemoRefused", "ClassificationReport", "uniqueness_for",
    "classify", "PointValue", "valuation_point", "I_point", "NonUniquenessDemo",
    "demo_nonuniqueness", "CrossValidation", "cross_validate", "ExplosionCrossCheck",
    "explosion_cross_check",
]
