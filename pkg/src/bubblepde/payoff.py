"""Payoffs of at most linear growth and their smallest concave nondecreasing majorants.

Every payoff is carried as a continuous piecewise-linear function on
``[0, oo)``: breakpoints ``(x_i, g_i)`` with linear interpolation, a constant
continuation left of the first breakpoint and a ray of slope ``s >= 0`` right
of the last.  For this class the majorant ``h`` is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIGITAL_RAMP = 1e-6


@dataclass(frozen=True)
class PiecewiseLinear:
    xs: tuple
    gs: tuple
    slope: float = 0.0

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        gs = tuple(float(v) for v in self.gs)
        if len(xs) == 0 or len(xs) != len(gs):
            raise ValueError("need at least one breakpoint and matching x/g lists")
        if xs[0] < 0 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoints must be nonnegative and strictly increasing")
        if any(not np.isfinite(g) or g < 0 for g in gs):
            raise ValueError("payoff values must be finite and nonnegative")
        if not (np.isfinite(self.slope) and self.slope >= 0):
            raise ValueError("terminal slope must be finite and nonnegative")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "gs", gs)
        object.__setattr__(self, "slope", float(self.slope))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v = np.interp(x, self.xs, self.gs)
        beyond = x > self.xs[-1]
        v = np.where(beyond, self.gs[-1] + self.slope * (x - self.xs[-1]), v)
        return float(v) if v.ndim == 0 else v

    def segment_slopes(self) -> np.ndarray:
        return np.diff(self.gs) / np.diff(self.xs)


@dataclass(frozen=True)
class Payoff:
    """A named payoff; ``pl`` is its exact piecewise-linear representation."""

    kind: str
    pl: PiecewiseLinear
    strike: float | None = None
    cash: float | None = None

    def __call__(self, x):
        return eval_payoff(self, x)

    @property
    def kinks(self) -> tuple:
        """Interior breakpoints, where grids should place a node."""
        return tuple(v for v in self.pl.xs if v > 0)

    def to_dict(self) -> dict:
        d = {"type": self.kind}
        if self.kind in ("call", "put", "digital"):
            d["strike"] = self.strike
        if self.kind in ("digital", "constant"):
            d["cash"] = self.cash
        if self.kind == "piecewise":
            d["points"] = [[x, g] for x, g in zip(self.pl.xs, self.pl.gs)]
            d["slope"] = self.pl.slope
        return d


def call(strike: float) -> Payoff:
    _positive(strike, "strike")
    return Payoff("call", PiecewiseLinear((0.0, strike), (0.0, 0.0), 1.0), strike=float(strike))


def put(strike: float) -> Payoff:
    _positive(strike, "strike")
    return Payoff("put", PiecewiseLinear((0.0, strike), (float(strike), 0.0), 0.0), strike=float(strike))


def digital(strike: float, cash: float = 1.0) -> Payoff:
    """Cash-or-nothing, continuous: a linear ramp of width ``1e-6 * strike`` ending at the strike."""
    _positive(strike, "strike")
    if cash < 0:
        raise ValueError("cash must be nonnegative")
    lo = strike * (1.0 - DIGITAL_RAMP)
    return Payoff("digital", PiecewiseLinear((0.0, lo, strike), (0.0, 0.0, float(cash)), 0.0),
                  strike=float(strike), cash=float(cash))


def identity() -> Payoff:
    return Payoff("identity", PiecewiseLinear((0.0,), (0.0,), 1.0))


def constant(c: float) -> Payoff:
    if c < 0:
        raise ValueError("constant payoff must be nonnegative")
    return Payoff("constant", PiecewiseLinear((0.0,), (float(c),), 0.0), cash=float(c))


def piecewise(points, slope: float = 0.0) -> Payoff:
    """Explicit breakpoints ``[(x0, g0), (x1, g1), ...]`` and terminal slope."""
    xs, gs = zip(*points)
    return Payoff("piecewise", PiecewiseLinear(xs, gs, slope))


def from_dict(d: dict) -> Payoff:
    """Build a payoff from ``{"type": ..., params}`` as found in run configs."""
    d = dict(d)
    kind = str(d.pop("type", "")).lower()
    makers = {
        "call": lambda strike: call(strike),
        "put": lambda strike: put(strike),
        "digital": lambda strike, cash=1.0: digital(strike, cash),
        "identity": lambda: identity(),
        "constant": lambda cash: constant(cash),
        "piecewise": lambda points, slope=0.0: piecewise(points, slope),
    }
    if kind not in makers:
        raise ValueError(f"unknown payoff type {kind!r}; expected one of {sorted(makers)}")
    try:
        return makers[kind](**d)
    except TypeError as exc:
        raise ValueError(f"bad parameters for payoff {kind!r}: {exc}") from None


def _positive(v, name):
    if not (np.isfinite(v) and v > 0):
        raise ValueError(f"{name} must be positive")


def eval_payoff(g: Payoff, x):
    """``g(x)`` for scalar or array ``x >= 0``."""
    xa = np.asarray(x, dtype=float)
    if g.kind == "call":
        v = np.maximum(xa - g.strike, 0.0)
    elif g.kind == "put":
        v = np.maximum(g.strike - xa, 0.0)
    elif g.kind == "identity":
        v = xa.copy()
    elif g.kind == "constant":
        v = np.full(xa.shape, g.cash)
    else:
        v = np.asarray(g.pl(xa), dtype=float)
    return float(v) if v.ndim == 0 else v


def eta(g) -> float:
    """Asymptotic slope ``limsup g(x)/x``; for this class it is the terminal slope."""
    pl = g.pl if isinstance(g, Payoff) else g
    if isinstance(g, Majorant):
        pl = g.h
    return pl.slope


@dataclass(frozen=True)
class Majorant:
    """Smallest concave, nonnegative, nondecreasing ``h >= g``; ``M_fit`` bounds ``h <= M (1 + x)``."""

    h: PiecewiseLinear
    eta: float
    M_fit: float

    def __call__(self, x):
        return self.h(x)


def _upper_hull(xs, gs):
    """Andrew's monotone chain, upper part, for points sorted by x."""
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly above the chord a -> i
            cross = (xs[b] - xs[a]) * (gs[i] - gs[a]) - (gs[b] - gs[a]) * (xs[i] - xs[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def concave_majorant(g) -> Majorant:
    """Exact smallest concave nondecreasing majorant of a piecewise-linear payoff.

    With terminal slope ``s`` the majorant ends in a ray of slope exactly
    ``s``: anything steeper is not minimal and anything flatter eventually
    falls below ``g``.  The ray starts at the breakpoint maximising
    ``g_i - s x_i``; left of it ``h`` is the upper hull of the breakpoints,
    whose slopes are then all at least ``s >= 0``.
    """
    pl = g.pl if isinstance(g, Payoff) else g
    xs, gs = list(pl.xs), list(pl.gs)
    if xs[0] > 0:  # constant continuation to the left of the first breakpoint
        xs.insert(0, 0.0)
        gs.insert(0, gs[0])
    xs_a, gs_a = np.array(xs), np.array(gs)
    s = pl.slope
    j = int(np.argmax(gs_a - s * xs_a))
    idx = _upper_hull(xs_a[: j + 1], gs_a[: j + 1])
    hx = tuple(float(xs_a[i]) for i in idx)
    hg = tuple(float(gs_a[i]) for i in idx)
    h = PiecewiseLinear(hx, hg, s)
    M = max([s] + [gv / (1.0 + xv) for xv, gv in zip(hx, hg)])
    return Majorant(h, s, float(M))


__all__ = [
    "PiecewiseLinear", "Payoff", "Majorant", "call", "put", "digital", "identity", "constant",
    "piecewise", "from_dict", "eval_payoff", "eta", "concave_majorant", "DIGITAL_RAMP",
]
