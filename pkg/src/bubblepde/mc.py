"""Monte Carlo for the variance process, the density process ``H`` and explosion times.

Random numbers come from counter-based Philox streams: paths are grouped in
fixed-size blocks, the stream of block ``k`` is keyed by ``(seed, k)`` and its
counter is set from the time-step index.  Any path's normals therefore depend
only on ``(seed, path index, step index)``, so results are reproducible
regardless of how blocks are scheduled, and all reductions go through
``math.fsum`` so that they are bit-for-bit deterministic.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exprdsl import Expr, as_expr, lambdify
from .model import ZERO_TOL, ModelSpec, ZeroBoundaryClass, ZeroKind
from .payoff import eval_payoff

DEFAULT_BARRIER_FACTORS = (1e2, 1e3, 1e4)


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 10_000
    n_steps: int = 200
    seed: int = 0
    barrier_levels: tuple | None = None
    antithetic: bool = False
    block_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError("block_size must be an even number >= 2")
        if self.barrier_levels is not None:
            levels = tuple(float(b) for b in self.barrier_levels)
            if any(b2 <= b1 for b1, b2 in zip(levels, levels[1:])):
                raise ValueError("barrier_levels must be strictly increasing")
            object.__setattr__(self, "barrier_levels", levels)

    def barriers_for(self, y0: float) -> tuple:
        levels = self.barrier_levels
        if levels is None:
            levels = tuple(f * max(1.0, y0) for f in DEFAULT_BARRIER_FACTORS)
        if levels[0] < y0:
            raise ValueError("barrier levels must not lie below the initial value")
        return levels


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_effective: int

    def __str__(self):
        return f"{self.mean:.6g} +- {self.std_error:.2g}"

    def to_dict(self):
        return {"mean": self.mean, "std_error": self.std_error, "n_effective": self.n_effective}


# -------------------------------------------------------------------- randomness


def _generator(seed: int, block: int, step: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([seed, block], dtype=np.uint64),
                              counter=np.array([0, step, 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


def block_normals(cfg: MCConfig, block: int, step: int, n: int, k: int = 2) -> np.ndarray:
    """``(k, n)`` standard normals for one block and step; antithetic pairs alternate signs.

    A full block is always drawn and truncated, so a path's normals depend
    only on ``(seed, path index, step)`` and not on ``n_paths``.
    """
    gen = _generator(int(cfg.seed), block, step)
    if not cfg.antithetic:
        return gen.standard_normal((k, cfg.block_size))[:, :n]
    half = gen.standard_normal((k, cfg.block_size // 2))
    out = np.empty((k, 2 * half.shape[1]))
    out[:, 0::2] = half
    out[:, 1::2] = -half
    return out[:, :n]


def brownian_increments(cfg: MCConfig, rho: float, dt: float, block: int, step: int, n: int):
    """Increments ``(dB, dW)`` with ``corr = rho``, ``W = rho B + sqrt(1 - rho^2) B_perp``."""
    z = block_normals(cfg, block, step, n)
    sq = math.sqrt(dt)
    dB = sq * z[0]
    dW = rho * dB + math.sqrt(1.0 - rho * rho) * sq * z[1]
    return dB, dW


def _blocks(cfg: MCConfig):
    for start in range(0, cfg.n_paths, cfg.block_size):
        yield start // cfg.block_size, start, min(cfg.block_size, cfg.n_paths - start)


# -------------------------------------------------------------------- simulation


@dataclass
class PathEnsemble:
    """Terminal values for every path plus full trajectories of the first ``n_record`` paths."""

    T: float
    x0: float
    y0: float
    Y_T: np.ndarray
    logH_T: np.ndarray
    absorbing: bool
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Y_paths: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    logH_paths: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def S_T(self):
        return self.x0 * np.exp(self.logH_T)


def _absorbing(spec: ModelSpec, zbc: ZeroBoundaryClass | None) -> bool:
    if zbc is not None and zbc.kind is not ZeroKind.INCONCLUSIVE:
        return zbc.kind is ZeroKind.ABSORBING
    return abs(spec.mu0) <= ZERO_TOL


class SimulationError(FloatingPointError):
    pass


def _coeffs(spec: ModelSpec):
    return (lambdify(spec.mu, scalar=False), lambdify(spec.sigma, scalar=False),
            lambdify(spec.b, scalar=False))


def _sim_block(spec, coeffs, cfg, y0, T, block, n, absorbing, observe=None):
    mu, sigma, b = coeffs
    dt = T / cfg.n_steps
    Y = np.full(n, float(y0))
    logH = np.zeros(n)
    dead = Y <= 0.0 if absorbing else np.zeros(n, dtype=bool)
    if observe is not None:
        observe(0, Y, logH)
    with np.errstate(all="ignore"):
        for step in range(cfg.n_steps):
            dB, dW = brownian_increments(cfg, spec.rho, dt, block, step, n)
            Yp = np.maximum(Y, 0.0)
            bb = np.broadcast_to(b(Yp), Yp.shape)
            logH = logH + bb * dW - 0.5 * bb * bb * dt
            Y = Y + mu(Yp) * dt + sigma(Yp) * dB
            if absorbing:
                dead |= Y <= 0.0
                Y = np.where(dead, 0.0, Y)
            else:
                Y = np.maximum(Y, 0.0)
            if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(logH))):
                i = int(np.nonzero(~(np.isfinite(Y) & np.isfinite(logH)))[0][0])
                raise SimulationError(
                    f"non-finite state at step {step + 1}, path {block * cfg.block_size + i} "
                    f"(Y = {Y[i]!r}, log H = {logH[i]!r})")
            if observe is not None:
                observe(step + 1, Y, logH)
    return Y, logH


def simulate_paths(spec: ModelSpec, y0: float, x0: float, T: float, cfg: MCConfig,
                   zbc: ZeroBoundaryClass | None = None, n_record: int = 0) -> PathEnsemble:
    """Full-truncation Euler for ``Y`` together with ``log H``.

    Coefficients are evaluated at ``max(Y, 0)``.  When the boundary is
    absorbing (``mu(0) = 0``, or as given by ``zbc``) a path that reaches
    ``Y <= 0`` stays at 0; otherwise ``Y`` is clamped at 0 every step.
    ``log H`` uses the left-point rule ``b dW - b^2 dt / 2``.
    """
    if y0 < 0 or x0 < 0 or T < 0:
        raise ValueError("y0, x0 and T must be nonnegative")
    absorbing = _absorbing(spec, zbc)
    coeffs = _coeffs(spec)
    Y_T = np.empty(cfg.n_paths)
    logH_T = np.empty(cfg.n_paths)
    n_record = min(n_record, cfg.n_paths)
    rec_Y = np.empty((n_record, cfg.n_steps + 1))
    rec_H = np.empty((n_record, cfg.n_steps + 1))
    for block, start, n in _blocks(cfg):
        observe = None
        m = max(0, min(n, n_record - start))
        if m:
            def observe(step, Y, logH, m=m, start=start):
                rec_Y[start:start + m, step] = Y[:m]
                rec_H[start:start + m, step] = logH[:m]
        Y, logH = _sim_block(spec, coeffs, cfg, y0, T, block, n, absorbing, observe)
        Y_T[start:start + n] = Y
        logH_T[start:start + n] = logH
    times = np.linspace(0.0, T, cfg.n_steps + 1)
    return PathEnsemble(T, float(x0), float(y0), Y_T, logH_T, absorbing, times, rec_Y, rec_H)


def dump_paths_csv(ens: PathEnsemble, path) -> None:
    """Write the recorded trajectories as rows ``path, t, Y, logH``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "t", "Y", "logH"])
        for i in range(ens.Y_paths.shape[0]):
            for j, t in enumerate(ens.times):
                w.writerow([i, repr(float(t)), repr(float(ens.Y_paths[i, j])), repr(float(ens.logH_paths[i, j]))])


# -------------------------------------------------------------------- estimators


def _estimate(values: np.ndarray, antithetic: bool) -> Estimate:
    v = np.asarray(values, dtype=float)
    if antithetic and len(v) >= 2:
        n2 = len(v) // 2 * 2
        pairs = 0.5 * (v[0:n2:2] + v[1:n2:2])
        v = np.concatenate([pairs, v[n2:]]) if n2 < len(values) else pairs
    n = len(v)
    if n and np.all(v == v[0]):
        return Estimate(float(v[0]), 0.0, n)
    mean = math.fsum(v) / n
    if n < 2:
        return Estimate(mean, float("inf"), n)
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return Estimate(mean, math.sqrt(var / n), n)


def price(spec: ModelSpec, g, x0: float, y0: float, T: float, cfg: MCConfig,
          zbc: ZeroBoundaryClass | None = None) -> Estimate:
    """Sample mean of ``g(x0 H_T)`` with its standard error."""
    ens = simulate_paths(spec, y0, x0, T, cfg, zbc)
    return _estimate(eval_payoff(g, ens.S_T), cfg.antithetic)


@dataclass(frozen=True)
class ExplosionEstimate:
    """Probability that the diffusion passes each barrier before ``T``, and the extrapolation."""

    estimate: Estimate
    barriers: tuple
    hit_probabilities: tuple
    extrapolation_error: float
    statistical_error: float
    monotone: bool
    warning: str = ""

    @property
    def mean(self):
        return self.estimate.mean

    @property
    def std_error(self):
        return self.estimate.std_error

    def to_dict(self):
        return {"mean": self.mean, "error": self.std_error, "barriers": list(self.barriers),
                "hit_probabilities": list(self.hit_probabilities),
                "extrapolation_error": self.extrapolation_error,
                "statistical_error": self.statistical_error, "monotone": self.monotone,
                "warning": self.warning}


def _aitken(p1, p2, p3):
    """Limit of a sequence with geometrically shrinking differences, and the size of the correction."""
    d1, d2 = p2 - p1, p3 - p2
    if d1 == 0.0 or d2 == 0.0:
        return p3, 0.0
    r = d2 / d1
    if not 0.0 < r < 1.0:
        return p3, abs(d2)
    lim = p3 + d2 * r / (1.0 - r)
    return lim, abs(lim - p3)


def explosion_probability(mu_tilde, sigma, y0: float, T: float, cfg: MCConfig) -> ExplosionEstimate:
    """Estimate ``P[zeta <= T]`` for ``dX = mu_tilde dt + sigma dB``, ``X_0 = y0``.

    Each path runs its own clock; the step is ``dt0 2^-k`` while
    ``X >= ref 2^k`` (``ref = max(1, y0)``), so it halves every time ``X``
    doubles.  A path is retired when it reaches the top barrier.  The three
    highest barrier-hitting frequencies are extrapolated with Aitken's
    process; the reported error combines the binomial standard error with the
    size of the extrapolation step.
    """
    mu_f = lambdify(as_expr(mu_tilde), scalar=False)
    sg_f = lambdify(as_expr(sigma), scalar=False)
    barriers = cfg.barriers_for(y0)
    nb = len(barriers)
    hits = np.zeros(nb, dtype=np.int64)
    if T <= 0:
        est = Estimate(0.0, 0.0, cfg.n_paths)
        return ExplosionEstimate(est, barriers, tuple([0.0] * nb), 0.0, 0.0, True)
    dt0 = T / cfg.n_steps
    ref = max(1.0, y0)
    top = barriers[-1]
    bar = np.asarray(barriers)
    with np.errstate(all="ignore"):
        for block, start, n in _blocks(cfg):
            X = np.full(n, float(y0))
            t = np.zeros(n)
            level = np.zeros((nb, n), dtype=bool)
            level |= X[None, :] >= bar[:, None]
            active = (X < top)
            step = 0
            while np.any(active):
                idx = np.nonzero(active)[0]
                x = X[idx]
                k = np.maximum(np.floor(np.log2(np.maximum(x, 1e-300) / ref)), 0.0)
                dt = np.minimum(dt0 * np.exp2(-k), T - t[idx])
                z = block_normals(cfg, block, step, n, k=1)[0][idx]
                xp = np.maximum(x, 0.0)
                x = np.maximum(x + mu_f(xp) * dt + sg_f(xp) * np.sqrt(dt) * z, 0.0)
                if not np.all(np.isfinite(x)):
                    x = np.where(np.isfinite(x), x, np.inf)
                X[idx] = x
                t[idx] += dt
                level[:, idx] |= x[None, :] >= bar[:, None]
                active[idx] = (x < top) & (t[idx] < T * (1.0 - 1e-12))
                step += 1
            hits += level.sum(axis=1)
    n = cfg.n_paths
    p = hits / n
    monotone = bool(np.all(np.diff(p) <= 0))
    warning = ""
    if nb >= 3:
        p_lim, ext_err = _aitken(*p[-3:])
        d = np.diff(p[-3:])
        if not monotone or (d[0] != 0 and not 0 <= d[1] / d[0] < 1):
            warning = "barrier-hitting frequencies do not settle monotonically; raise the barriers"
    else:
        p_lim, ext_err = float(p[-1]), (abs(p[-1] - p[-2]) if nb == 2 else 0.0)
        warning = "fewer than three barriers: no extrapolation"
    p_lim = min(max(p_lim, 0.0), 1.0)
    p_top = float(p[-1])
    stat = math.sqrt(p_top * (1.0 - p_top) / n)
    if warning:
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    err = math.sqrt(stat ** 2 + ext_err ** 2)
    return ExplosionEstimate(Estimate(float(p_lim), err, n), barriers, tuple(float(v) for v in p),
                             float(ext_err), stat, monotone, warning)


# --------------------------------------------------------- local martingale check


@dataclass(frozen=True)
class DriftDiagnostic:
    drift: Estimate
    supermartingale_like: bool
    clamped_fraction: float
    n_times: int

    def to_dict(self):
        return {"drift": self.drift.to_dict(), "supermartingale_like": self.supermartingale_like,
                "clamped_fraction": self.clamped_fraction, "n_times": self.n_times}


def local_martingale_diagnostic(spec: ModelSpec, v, x0: float, y0: float, T: float, cfg: MCConfig,
                                n_times: int = 20, zbc: ZeroBoundaryClass | None = None) -> DriftDiagnostic:
    """Does ``t -> v(S_t, Y_t, T - t)`` have zero drift?

    ``v`` is a callable ``v(x, y, tau) -> values`` or an object with an
    ``interpolate(x, y, tau)`` method returning ``(values, clamped_mask)``
    (such as a PDE field).  Each path's values at ``n_times + 1`` equally
    spaced times are regressed on time; the mean slope and its standard
    error estimate the drift.  Significantly negative drift (below three
    standard errors) is flagged as supermartingale-like.
    """
    absorbing = _absorbing(spec, zbc)
    coeffs = _coeffs(spec)
    stride = max(1, cfg.n_steps // n_times)
    obs_steps = list(range(0, cfg.n_steps + 1, stride))
    if obs_steps[-1] != cfg.n_steps:
        obs_steps.append(cfg.n_steps)
    times = np.array(obs_steps) * (T / cfg.n_steps)
    slopes = np.empty(cfg.n_paths)
    clamped = [0, 0]

    def lookup(x, y, tau):
        if hasattr(v, "interpolate"):
            vals, mask = v.interpolate(x, y, tau)
            clamped[0] += int(np.count_nonzero(mask))
            clamped[1] += mask.size
            return vals
        clamped[1] += np.size(x)
        return np.broadcast_to(np.asarray(v(x, y, tau), dtype=float), np.shape(x))

    tc = times - times.mean()
    denom = float(np.sum(tc * tc))
    for block, start, n in _blocks(cfg):
        vals = np.empty((len(obs_steps), n))
        pos = {s: i for i, s in enumerate(obs_steps)}

        def observe(step, Y, logH, vals=vals, pos=pos):
            if step in pos:
                vals[pos[step]] = lookup(x0 * np.exp(logH), Y, T - step * (T / cfg.n_steps))

        _sim_block(spec, coeffs, cfg, y0, T, block, n, absorbing, observe)
        vbar = vals.mean(axis=0)
        slopes[start:start + n] = (tc @ (vals - vbar)) / denom if denom > 0 else 0.0
    est = _estimate(slopes, cfg.antithetic)
    flag = est.mean < -3.0 * est.std_error and est.std_error >= 0 and est.mean < 0
    frac = clamped[0] / clamped[1] if clamped[1] else 0.0
    return DriftDiagnostic(est, bool(flag), float(frac), len(obs_steps))


__all__ = [
    "MCConfig", "Estimate", "PathEnsemble", "SimulationError", "ExplosionEstimate", "DriftDiagnostic",
    "block_normals", "brownian_increments", "simulate_paths", "dump_paths_csv", "price",
    "explosion_probability", "local_martingale_diagnostic",
]
