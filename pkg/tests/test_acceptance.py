"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines
inline; without ``-s`` they are still written straight to the terminal.
"""
import subprocess
import sys
import time
from pathlib import Path

import pytest
from scipy.stats import norm

from bubblepde import analysis as an
from bubblepde import feller, mc, pde
from bubblepde import payoff as P
from bubblepde.model import ModelSpec, ZeroKind, classify_zero_boundary, garch, heston, hull_white

ROOT = Path(__file__).resolve().parents[1]
EXPLOSIVE = ModelSpec("-1*y", "y", "y^3", 0.5, "explosive")


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return _report


def test_criterion_1_feller_oracle(report):
    t0 = time.perf_counter()
    wrong = []
    for a in (0.5, 1.0, 2.0):
        for b in (0.5, 1.0, 2.0):
            for p in (0.5, 1.0, 1.5, 2.0):
                r = feller.test_explosion_at_infinity(f"{a}*y^{p}", f"{b}*y")
                expected = feller.Verdict.FINITE if (a > 0 and p > 1) else feller.Verdict.INFINITE
                if r.verdict is not expected and not (p == 1.0 and r.verdict is feller.Verdict.INCONCLUSIVE):
                    wrong.append((a, b, p, r.verdict.value))
    dt = time.perf_counter() - t0
    report(1, not wrong and dt < 5.0, f"36 cases, wrong={wrong}, {dt:.2f}s")


def test_criterion_2_model_classifications(report):
    cases = [(heston(rho=r), an.MartingaleVerdict.MARTINGALE) for r in (-0.5, 0.0, 0.5)]
    cases += [(hull_white(rho=r), an.MartingaleVerdict.MARTINGALE) for r in (-0.5, 0.0)]
    cases += [(hull_white(rho=r), an.MartingaleVerdict.STRICT_LOCAL) for r in (0.25, 0.5)]
    cases += [(garch(rho=0.5), an.MartingaleVerdict.STRICT_LOCAL)]
    cfg = mc.MCConfig(n_paths=5000, n_steps=200, seed=3)
    problems = []
    slowest = 0.0
    for spec, expected in cases:
        t0 = time.perf_counter()
        rep = an.classify(spec, P.call(1.0))
        dt = time.perf_counter() - t0
        slowest = max(slowest, dt)
        if rep.verdict is not expected or dt >= 2.0:
            problems.append((spec.name, spec.rho, rep.verdict.value, round(dt, 2)))
        for y0 in (1.0, 200.0):
            x = an.explosion_cross_check(spec, y0, 1.0, cfg)
            if not x.passed:
                problems.append((spec.name, spec.rho, y0, x.discrepancy, x.bound))
    report(2, not problems, f"{len(cases)} models, slowest classification {slowest:.2f}s, problems={problems}")


def test_criterion_3_bubble_visibility(report):
    t0 = time.perf_counter()
    ip = an.I_point(EXPLOSIVE, pde.y_nodes(200, 50.0, [1.0], scale=1.0), 1.0, 1.0, 400)
    e = mc.price(EXPLOSIVE, P.identity(), 1.0, 1.0, 1.0, mc.MCConfig(n_paths=100_000, n_steps=200, seed=1))
    dt = time.perf_counter() - t0
    below = e.mean < 1.0 - 3.0 * e.std_error
    diff, bound = abs(e.mean - ip.value), 3.0 * (e.std_error + ip.error)
    report(3, below and diff <= bound and dt < 60.0,
           f"MC {e.mean:.5f}±{e.std_error:.5f}, I(1,1)={ip.value:.5f}±{ip.error:.1e}, "
           f"|diff|={diff:.4f} <= {bound:.4f}, {dt:.1f}s")


def test_criterion_4_nonuniqueness_demo(report):
    t0 = time.perf_counter()
    g = pde.make_grid(1.0, n_t=200, nx=200, ny=100, x_eval=1.0, y_eval=1.0)
    d = an.demo_nonuniqueness(EXPLOSIVE, P.identity(), g, y_eval=1.0)
    refused = False
    try:
        an.demo_nonuniqueness(heston(), P.identity(), pde.make_grid(1.0))
    except an.DemoRefused as exc:
        refused = exc.reason.startswith("δ≈0")
    dt = time.perf_counter() - t0
    report(4, d.passed and refused and dt < 90.0,
           f"{d.status} {d.checks}, gap {d.gap_at_eval:.4f}, Heston refused={refused}, {dt:.1f}s")


def test_criterion_5_put_unique_and_priced(report):
    t0 = time.perf_counter()
    rep = an.classify(EXPLOSIVE, P.put(1.0))
    grid = pde.make_grid(1.0, x_eval=1.0, y_eval=1.0, kinks=(1.0,))
    xv = an.cross_validate(EXPLOSIVE, P.put(1.0), 1.0, 1.0, 1.0, grid,
                           mc.MCConfig(n_paths=100_000, n_steps=200, seed=1))
    dt = time.perf_counter() - t0
    unique = rep.uniqueness is an.Uniqueness.UNIQUE
    report(5, unique and xv.passed and dt < 60.0,
           f"{rep.uniqueness.value}, PDE {xv.pde.value:.5f} vs MC {xv.mc.mean:.5f}, "
           f"|diff|={xv.discrepancy:.4f} <= {xv.bound:.4f}, {dt:.1f}s")


def test_criterion_6_martingale_pricing(report):
    t0 = time.perf_counter()
    g = pde.make_grid(1.0, n_t=200, nx=200, ny=100, x_eval=1.0, y_eval=0.04, kinks=(1.0,))
    xv = an.cross_validate(heston(), P.call(1.0), 1.0, 0.04, 1.0, g, mc.MCConfig(n_paths=200_000, seed=7))
    frozen = heston(mu0=0.08, a=2.0, sigma=1e-6, rho=0.0, name="frozen")
    v = pde.solve_valuation(frozen, P.call(1.0), g, classify_zero_boundary(frozen)).value(1.0, 0.04, 1.0)
    vol = 0.2
    bs = norm.cdf(vol / 2) - norm.cdf(-vol / 2)
    rel = v / bs - 1.0
    dt = time.perf_counter() - t0
    report(6, xv.passed and abs(rel) < 5e-3 and dt < 120.0,
           f"PDE {xv.pde.value:.5f} vs MC {xv.mc.mean:.5f} (|diff| {xv.discrepancy:.5f} <= {xv.bound:.5f}); "
           f"frozen vol {v:.6f} vs BS {bs:.6f} rel {rel:.1e}, {dt:.1f}s")


INVARIANT_SUITES = [
    "tests/test_exprdsl.py::test_round_trip_random",
    "tests/test_exprdsl.py::test_derivative_matches_finite_differences",
    "tests/test_payoff.py::test_majorant_invariants",
    "tests/test_payoff.py::test_majorant_examples",
    "tests/test_pde.py::test_comparison_and_growth_exact_without_mixed_term",
    "tests/test_pde.py::test_comparison_and_growth_with_correlation",
    "tests/test_mc.py::test_determinism",
    "tests/test_mc.py::test_block_size_does_not_change_prefix",
    "tests/test_mc.py::test_std_error_scaling",
]


def test_criterion_7_invariant_suites(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *INVARIANT_SUITES],
                          cwd=ROOT, capture_output=True, text=True)
    dt = time.perf_counter() - t0
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-300:]
    report(7, proc.returncode == 0 and dt < 120.0, f"{last}, {dt:.1f}s")


def test_criterion_8_boundary_cases(report):
    models = {
        "A": (heston(mu0=0.3), ZeroKind.UNATTAINABLE),
        "B": (ModelSpec("-2*y", "0.4*sqrt(y)", "sqrt(y)", -0.5, "absorbing"), ZeroKind.ABSORBING),
        "C": (heston(mu0=0.02), ZeroKind.REFLECTING),
    }
    ratios, problems = {}, []
    for case, (spec, kind) in models.items():
        zbc = classify_zero_boundary(spec)
        if zbc.kind is not kind or zbc.pde_case != case:
            problems.append((case, zbc.kind.value, zbc.pde_case))
        g = pde.make_grid(1.0, n_t=100, nx=100, ny=50, x_eval=1.0, y_eval=0.04, kinks=(1.0,))
        for payoff in (P.put(1.0), P.call(1.0)):
            r = []
            for grid in (g, g.refined()):
                f = pde.solve_valuation(spec, payoff, grid, zbc)
                r.append(pde.residual(spec, f, grid, t_min=grid.T / 4).max_abs)
            key = f"{case}/{payoff.kind}"
            ratios[key] = r[0] / r[1]
            if not ratios[key] >= 1.7:
                problems.append((key, ratios[key]))
    detail = ", ".join(f"{c}: {v:.2f}" for c, v in ratios.items())
    report(8, not problems, f"residual ratios {detail}, problems={problems}")
