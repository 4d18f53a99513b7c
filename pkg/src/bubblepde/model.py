"""Stochastic volatility model specification, validation and the boundary at y = 0.

The model is

    dS = S b(Y) dW,    dY = mu(Y) dt + sigma(Y) dB,    d<W, B> = rho dt,

on the state space (0, oo) x [0, oo), with ``sigma(0) = b(0) = 0`` and
``mu(0) >= 0`` so that the variance process never leaves ``[0, oo)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import feller
from .exprdsl import (Add, DomainError, Expr, ExprOverflowError, Mul, as_expr, const,
                      contains_abs, differentiate, evaluate, simplify, to_string)

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients ``mu, sigma, b`` (expressions in ``y``) and correlation ``rho``.

    Expression arguments may be given as strings; they are parsed on
    construction.
    """

    mu: Expr
    sigma: Expr
    b: Expr
    rho: float
    name: str = "model"

    def __post_init__(self):
        for attr in ("mu", "sigma", "b"):
            object.__setattr__(self, attr, as_expr(getattr(self, attr)))
        object.__setattr__(self, "rho", float(self.rho))

    def to_dict(self) -> dict:
        return {"name": self.name, "mu": to_string(self.mu), "sigma": to_string(self.sigma),
                "b": to_string(self.b), "rho": self.rho}

    @property
    def mu0(self) -> float:
        return float(evaluate(self.mu, 0.0))


def heston(mu0=0.3, a=2.0, sigma=0.4, rho=-0.5, name="heston") -> ModelSpec:
    """``mu = mu0 - a y``, ``sigma = sigma sqrt(y)``, ``b = sqrt(y)``."""
    return ModelSpec(f"{mu0!r} - {a!r}*y", f"{sigma!r}*sqrt(y)", "sqrt(y)", rho, name)


def hull_white(a=1.0, sigma=0.5, rho=0.0, name="hull-white") -> ModelSpec:
    """``mu = -a y``, ``sigma = sigma y``, ``b = sqrt(y)``."""
    return ModelSpec(f"-{a!r}*y", f"{sigma!r}*y", "sqrt(y)", rho, name)


def garch(mu0=0.3, a=2.0, sigma=0.4, rho=0.0, name="garch") -> ModelSpec:
    """``mu = mu0 - a y``, ``sigma = sigma y``, ``b = sqrt(y)``."""
    return ModelSpec(f"{mu0!r} - {a!r}*y", f"{sigma!r}*y", "sqrt(y)", rho, name)


# ------------------------------------------------------------------ validation


class Status(str, enum.Enum):
    PASS = "pass"
    WARN = "warn"
    FAIL = "fail"


@dataclass(frozen=True)
class Check:
    name: str
    status: Status
    message: str = ""
    y: float | None = None

    def to_dict(self):
        return {"name": self.name, "status": self.status.value, "message": self.message, "y": self.y}


@dataclass(frozen=True)
class ValidationReport:
    """Per-check records plus the fitted growth constants.

    ``linear_growth_C`` bounds ``(|mu| + sigma)/(1 + y)`` on the samples;
    ``poly_growth_m`` and ``poly_growth_C`` give ``|(b^2)'| <= C (1 + y^m)``.
    """

    checks: tuple
    y_probe: float
    n_samples: int
    linear_growth_C: float | None = None
    linear_growth_exponent: float | None = None
    poly_growth_m: float | None = None
    poly_growth_C: float | None = None

    @property
    def ok(self) -> bool:
        return all(c.status is not Status.FAIL for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if c.status is Status.FAIL]

    @property
    def warnings(self):
        return [c for c in self.checks if c.status is Status.WARN]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "y_probe": self.y_probe,
            "n_samples": self.n_samples,
            "linear_growth_C": self.linear_growth_C,
            "linear_growth_exponent": self.linear_growth_exponent,
            "poly_growth_m": self.poly_growth_m,
            "poly_growth_C": self.poly_growth_C,
            "checks": [c.to_dict() for c in self.checks],
        }


def sample_points(y_probe: float, n_samples: int) -> np.ndarray:
    """Geometrically spaced points in ``(0, y_probe]`` spanning eight decades."""
    return np.geomspace(y_probe * 1e-8, y_probe, n_samples)


def _values(e: Expr, ys):
    """Evaluate pointwise, converting the first failure into ``(None, y, message)``."""
    out = np.empty(len(ys))
    for i, y in enumerate(ys):
        try:
            out[i] = evaluate(e, float(y))
        except (DomainError, ExprOverflowError) as exc:
            return None, float(y), str(exc)
    return out, None, ""


def _loglog_slope(y, f):
    """Least-squares slope of ``log f`` against ``log y`` (positive ``f`` only)."""
    keep = f > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(y[keep]), np.log(f[keep]), 1)[0])


def validate(spec: ModelSpec, y_probe: float = 10.0, n_samples: int = 64) -> ValidationReport:
    """Check the standing assumptions on ``(mu, sigma, b, rho)``.

    Boundary values, the sign of ``mu(0)``, strict positivity of ``sigma`` and
    ``b`` on the samples and ``|rho| < 1`` are hard checks.  The growth bounds
    ``|mu| + sigma <= C (1 + y)`` and ``|(b^2)'| <= C (1 + y^m)`` can only be
    sampled, so violations of them are warnings.
    """
    if not y_probe > 0:
        raise ValueError("y_probe must be positive")
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    checks: list[Check] = []
    add = checks.append

    if -1.0 < spec.rho < 1.0:
        add(Check("rho", Status.PASS, f"rho = {spec.rho!r}"))
    else:
        add(Check("rho", Status.FAIL, f"rho = {spec.rho!r} is not in (-1, 1)"))

    for nm in ("sigma", "b"):
        try:
            v0 = evaluate(getattr(spec, nm), 0.0)
        except (DomainError, ExprOverflowError) as exc:
            add(Check(f"{nm}(0) = 0", Status.FAIL, str(exc), 0.0))
            continue
        ok = abs(v0) <= ZERO_TOL
        add(Check(f"{nm}(0) = 0", Status.PASS if ok else Status.FAIL, f"{nm}(0) = {v0!r}", 0.0))
    try:
        m0 = evaluate(spec.mu, 0.0)
        add(Check("mu(0) >= 0", Status.PASS if m0 >= -ZERO_TOL else Status.FAIL, f"mu(0) = {m0!r}", 0.0))
    except (DomainError, ExprOverflowError) as exc:
        add(Check("mu(0) >= 0", Status.FAIL, str(exc), 0.0))

    ys = sample_points(y_probe, n_samples)
    vals = {}
    for nm in ("mu", "sigma", "b"):
        v, bad_y, msg = _values(getattr(spec, nm), ys)
        if v is None:
            add(Check(f"{nm} defined on (0, y_probe]", Status.FAIL, msg, bad_y))
        vals[nm] = v
    for nm in ("sigma", "b"):
        v = vals[nm]
        if v is None:
            continue
        bad = np.nonzero(v <= 0)[0]
        if len(bad):
            add(Check(f"{nm} > 0", Status.FAIL, f"{nm}({ys[bad[0]]!r}) = {v[bad[0]]!r}", float(ys[bad[0]])))
        else:
            add(Check(f"{nm} > 0", Status.PASS, f"positive at {n_samples} samples"))

    lin_C = lin_k = poly_m = poly_C = None
    upper = ys >= max(1.0, ys[n_samples // 2]) if y_probe > 1.0 else ys >= ys[n_samples // 2]
    if vals["mu"] is not None and vals["sigma"] is not None:
        f = np.abs(vals["mu"]) + vals["sigma"]
        lin_C = float(np.max(f / (1.0 + ys)))
        lin_k = _loglog_slope(ys[upper], f[upper])
        if lin_k is not None and lin_k > 1.05 and y_probe > 1.0:
            add(Check("linear growth of |mu| + sigma", Status.WARN,
                      f"apparent growth exponent {lin_k:.3g} > 1 on the sampled range"))
        else:
            add(Check("linear growth of |mu| + sigma", Status.PASS, f"C ~ {lin_C:.6g}"))

    try:
        db2 = differentiate(simplify(Mul(spec.b, spec.b)))
        v, bad_y, msg = _values(db2, ys)
    except (DomainError, ExprOverflowError) as exc:  # pragma: no cover - differentiation is total
        v, bad_y, msg = None, None, str(exc)
    if v is None:
        add(Check("polynomial growth of (b^2)'", Status.FAIL, msg, bad_y))
    else:
        a = np.abs(v)
        poly_m = _loglog_slope(ys[upper], a[upper])
        m_use = max(poly_m or 0.0, 0.0)
        poly_C = float(np.max(a / (1.0 + ys ** m_use)))
        # a super-polynomial function shows a log-log slope that keeps increasing
        q = n_samples // 4
        s_lo = _loglog_slope(ys[-2 * q:-q], a[-2 * q:-q])
        s_hi = _loglog_slope(ys[-q:], a[-q:])
        if s_lo is not None and s_hi is not None and s_hi > 4.0 and s_hi - s_lo > 0.5 and y_probe > 1.0:
            add(Check("polynomial growth of (b^2)'", Status.WARN,
                      f"log-log slope rises from {s_lo:.3g} to {s_hi:.3g}: growth looks super-polynomial"))
        else:
            add(Check("polynomial growth of (b^2)'", Status.PASS, f"m ~ {m_use:.3g}, C ~ {poly_C:.6g}"))

    for nm in ("mu", "sigma", "b"):
        for arg in contains_abs(getattr(spec, nm)):
            v, _, _ = _values(arg, ys)
            if v is not None and np.any(np.diff(np.sign(v)) != 0):
                k = int(np.nonzero(np.diff(np.sign(v)) != 0)[0][0])
                add(Check(f"{nm} differentiable", Status.WARN,
                          f"abs({to_string(arg)}) changes sign near y = {ys[k + 1]:.6g}: derivative jumps",
                          float(ys[k + 1])))

    return ValidationReport(tuple(checks), float(y_probe), int(n_samples), lin_C, lin_k, poly_m, poly_C)


# ---------------------------------------------------------- boundary behaviour at 0


class ZeroKind(str, enum.Enum):
    UNATTAINABLE = "Unattainable"
    ABSORBING = "Absorbing"
    REFLECTING = "Reflecting"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ZeroBoundaryClass:
    """How ``Y`` behaves at 0, with the attainability test that decided it."""

    kind: ZeroKind
    report: feller.FellerReport | None = None
    overridden: bool = False
    mu0: float = 0.0

    @property
    def pde_case(self) -> str:
        """Boundary case label used by the valuation solver: A, B or C."""
        return {ZeroKind.UNATTAINABLE: "A", ZeroKind.ABSORBING: "B", ZeroKind.REFLECTING: "C"}[self.kind]

    def to_dict(self):
        return {"kind": self.kind.value, "overridden": self.overridden, "mu0": self.mu0,
                "attainability": None if self.report is None else self.report.to_dict()}


class InconclusiveError(RuntimeError):
    """A numerical verdict is Inconclusive and no override was supplied."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _attained_kind(mu0: float) -> ZeroKind:
    return ZeroKind.ABSORBING if abs(mu0) <= ZERO_TOL else ZeroKind.REFLECTING


def classify_zero_boundary(spec: ModelSpec, c: float = 1.0, tol: float = 1e-6,
                           override: str | ZeroKind | None = None) -> ZeroBoundaryClass:
    """Unattainable, Absorbing or Reflecting, from Feller's test at 0 and the sign of ``mu(0)``.

    An Inconclusive attainability test yields ``kind=Inconclusive`` unless
    ``override`` names the class to use; an override must still respect the
    sign of ``mu(0)`` (Absorbing needs ``mu(0) = 0``, Reflecting ``mu(0) > 0``).
    """
    mu0 = spec.mu0
    rep = feller.test_attainability_at_zero(spec.mu, spec.sigma, c=c, tol=tol)
    if rep.verdict is feller.Verdict.INFINITE:
        kind = ZeroKind.UNATTAINABLE
    elif rep.verdict is feller.Verdict.FINITE:
        kind = _attained_kind(mu0)
    else:
        kind = ZeroKind.INCONCLUSIVE
    if kind is ZeroKind.INCONCLUSIVE and override is not None:
        forced = ZeroKind(override if not isinstance(override, str) else override.capitalize())
        if forced is ZeroKind.INCONCLUSIVE:
            raise ValueError("override must name a decisive boundary class")
        if forced is not ZeroKind.UNATTAINABLE and forced is not _attained_kind(mu0):
            raise ValueError(f"override {forced.value} contradicts mu(0) = {mu0!r}")
        return ZeroBoundaryClass(forced, rep, True, mu0)
    return ZeroBoundaryClass(kind, rep, False, mu0)


def auxiliary_drift(spec: ModelSpec) -> Expr:
    """``mu + rho b sigma``, the drift of the diffusion whose explosion is the bubble."""
    if spec.rho == 0.0:
        return spec.mu
    return simplify(Add(spec.mu, Mul(Mul(const(spec.rho), spec.b), spec.sigma)))


__all__ = [
    "ModelSpec", "heston", "hull_white", "garch", "Status", "Check", "ValidationReport",
    "validate", "ZeroKind", "ZeroBoundaryClass", "InconclusiveError", "classify_zero_boundary",
    "auxiliary_drift", "sample_points", "ZERO_TOL",
]
