import numpy as np
import pytest

from bubblepde import mc, pde, payoff as P
from bubblepde.model import ModelSpec, classify_zero_boundary, heston

HW = ModelSpec("-1*y", "0.5*y", "sqrt(y)", 0.6, "hull-white")
ABS = ModelSpec("-2*y", "0.4*sqrt(y)", "sqrt(y)", -0.5, "absorbing")


def test_generator_coeffs_examples():
    h = heston()
    assert pde.generator_coeffs(h, 1.0, 0.0) == pytest.approx((0.0, 0.0, 0.0, 0.3))
    a = pde.generator_coeffs(h, 1.0, 0.04)
    assert a == pytest.approx((0.02, 0.0032, -0.5 * 0.016, 0.22), rel=1e-12)
    assert pde.generator_coeffs(heston(rho=0.0), 2.0, 0.5)[2] == 0.0


def test_grid_invariants():
    g = pde.make_grid(1.0, n_t=20, nx=80, ny=40, x_eval=1.0, y_eval=0.04, kinks=(1.3,))
    assert g.x[0] == 0.0 and g.y[0] == 0.0
    assert np.all(np.diff(g.x) > 0) and np.all(np.diff(g.y) > 0)
    assert 1.3 in g.x and 1.0 in g.x and 0.04 in g.y
    r = g.refined()
    assert len(r.x) == 2 * len(g.x) - 1 and r.n_t == 2 * g.n_t
    assert np.all(np.isin(g.x, r.x))


def test_identity_is_preserved_in_martingale_model():
    h = heston()
    g = pde.make_grid(1.0, n_t=200, nx=200, ny=100, x_eval=1.0, y_eval=0.04)
    f = pde.solve_valuation(h, P.identity(), g, classify_zero_boundary(h))
    x = g.x[1:-1, None]
    rel = np.abs(f.final()[1:-1, 1:-1] - x) / x
    assert rel.max() < 1e-3


def test_constant_is_exact(heston_spec):
    g = pde.make_grid(1.0, n_t=20, nx=40, ny=20)
    f = pde.solve_valuation(heston_spec, P.constant(2.0), g, classify_zero_boundary(heston_spec))
    # exact up to floating-point rounding of the stencil row sums
    assert np.max(np.abs(f.values - 2.0)) <= 1e-13
    assert pde.residual(heston_spec, f).max_abs <= 1e-10
    flat = pde.Field(y=g.y, times=g.times, values=np.full((g.n_t + 1, len(g.x), len(g.y)), 2.0), x=g.x)
    assert pde.residual(heston_spec, flat).max_abs == 0.0


REFLECT = heston(mu0=0.02)
CASES = [(heston(), 0.04), (ABS, 0.04), (HW, 1.0)]
PAIRS = [(P.call(1.2), P.call(1.0)), (P.put(0.8), P.put(1.0))]


def _solve_pair(spec, y_eval, lo, hi, nx=60, ny=30, n_t=50):
    zbc = classify_zero_boundary(spec)
    g = pde.make_grid(1.0, n_t=n_t, nx=nx, ny=ny, x_eval=1.0, y_eval=y_eval, kinks=(0.8, 1.0, 1.2))
    return g, pde.solve_valuation(spec, lo, g, zbc), pde.solve_valuation(spec, hi, g, zbc)


def _with_rho(spec, rho):
    return ModelSpec(spec.mu, spec.sigma, spec.b, rho, spec.name)


@pytest.mark.parametrize("spec,y_eval", CASES, ids=["heston", "absorbing", "hull-white"])
@pytest.mark.parametrize("lo,hi", PAIRS, ids=["call", "put"])
def test_comparison_and_growth_exact_without_mixed_term(spec, y_eval, lo, hi):
    g, v1, v2 = _solve_pair(_with_rho(spec, 0.0), y_eval, lo, hi)
    assert v1.meta["m_matrix"] and v2.meta["m_matrix"]
    assert np.all(v1.values <= v2.values + 1e-14)
    for v, payoff in ((v1, lo), (v2, hi)):
        h = P.concave_majorant(payoff)(g.x)[None, :, None]
        assert v.values.min() >= -1e-14
        assert np.all(v.values <= h + 1e-12)


def _error_budget(spec, payoff, g, v):
    """Nodewise error allowance: fine-vs-coarse change (scalar) plus the change when x_max
    is doubled (nodewise), the two error terms the solver itself reports."""
    zbc = classify_zero_boundary(spec)
    coarse = pde.solve_valuation(spec, payoff, g.coarsened(), zbc)
    wide = pde.solve_valuation(spec, payoff, g.extended_x(), zbc)
    conv = np.max(np.abs(v.values[::2, ::2, ::2] - coarse.values))
    trunc = np.abs(v.values - wide.values[:, :len(g.x), :])
    return conv + trunc


@pytest.mark.parametrize("spec,y_eval", CASES, ids=["heston", "absorbing", "hull-white"])
@pytest.mark.parametrize("lo,hi", PAIRS, ids=["call", "put"])
def test_comparison_and_growth_with_correlation(spec, y_eval, lo, hi):
    """With a mixed term the scheme is not monotone: violations must stay inside the
    solver's own discretization and far-field truncation error."""
    g, v1, v2 = _solve_pair(spec, y_eval, lo, hi)
    b1, b2 = _error_budget(spec, lo, g, v1), _error_budget(spec, hi, g, v2)
    assert np.all(v1.values <= v2.values + b1 + b2)
    for v, payoff, b in ((v1, lo, b1), (v2, hi, b2)):
        h = P.concave_majorant(payoff)(g.x)[None, :, None]
        assert np.all(v.values >= -b)
        assert np.all(v.values <= h + b)


def test_mixed_term_violations_shrink_under_refinement():
    worst = []
    g = pde.make_grid(1.0, n_t=25, nx=30, ny=15, x_eval=1.0, y_eval=0.04, kinks=(1.0, 1.2))
    zbc = classify_zero_boundary(heston())
    for _ in range(3):
        v1 = pde.solve_valuation(heston(), P.call(1.2), g, zbc)
        v2 = pde.solve_valuation(heston(), P.call(1.0), g, zbc)
        worst.append(max(np.max(v1.values - v2.values), -v1.values.min(), 0.0))
        g = g.refined()
    assert worst[2] < worst[0]


def test_I_nonexplosive_is_one(heston_spec):
    y = pde.y_nodes(60, 2.0)
    f = pde.solve_I(heston_spec, y, 1.0, n_t=50)
    assert np.max(np.abs(f.values - 1.0)) < 1e-6
    f0 = pde.solve_I(heston_spec, y, 0.0)
    assert np.all(f0.values == 1.0)


def test_I_explosive_monotone_and_matches_mc():
    y = pde.y_nodes(300, 1e6, anchors=[1.0], scale=1.0)
    f = pde.solve_I(HW, y, 1.0, n_t=400)
    assert f.meta["top"] == "barrier"
    V = f.values
    assert V.min() >= 0.0 and V.max() <= 1.0 + 1e-8
    assert np.all(np.diff(V, axis=0) <= 1e-12)
    assert np.all(V[-1, (f.y >= 20.0) & (f.y < f.y[-1])] < 1.0)
    from bubblepde.model import auxiliary_drift
    e = mc.explosion_probability(auxiliary_drift(HW), HW.sigma, 20.0, 1.0, mc.MCConfig(n_paths=4000, seed=3))
    assert abs((1.0 - f.value(y=20.0)) - e.mean) <= 3 * e.std_error + 0.01


def test_defect_examples():
    ones = pde.Field(y=np.array([0.0, 1.0]), times=np.array([0.0, 1.0]), values=np.ones((2, 2)))
    assert pde.defect(ones, 3.0, 0.5) == 0.0
    nine = pde.Field(y=np.array([0.0, 1.0]), times=np.array([0.0, 1.0]), values=np.full((2, 2), 0.9))
    assert pde.defect(nine, 2.0, 0.5) == pytest.approx(0.2)
    y = pde.y_nodes(100, 1e5, anchors=[1.0], scale=1.0)
    d = pde.defect_surface(pde.solve_I(HW, y, 1.0, n_t=50))
    xs = np.array([0.5, 1.0, 2.0, 7.0])
    surf = d.on_grid(xs)
    assert np.all(surf >= 0)
    ratio = np.broadcast_to(d.profile.values[:, None, :], surf.shape)
    np.testing.assert_allclose(surf / xs[None, :, None], ratio, rtol=1e-15, atol=0)


def test_residual_decreases_under_refinement(heston_spec):
    zbc = classify_zero_boundary(heston_spec)
    g = pde.make_grid(1.0, n_t=100, nx=100, ny=50, x_eval=1.0, y_eval=0.04, kinks=(1.0,))
    r1 = pde.residual(heston_spec, pde.solve_valuation(heston_spec, P.put(1.0), g, zbc), t_min=0.25)
    g2 = g.refined()
    r2 = pde.residual(heston_spec, pde.solve_valuation(heston_spec, P.put(1.0), g2, zbc), t_min=0.25)
    assert r1.max_abs / r2.max_abs >= 1.7


def test_instability_guard_reports_node(heston_spec):
    g = pde.make_grid(1.0, n_t=20, nx=60, ny=30)
    with pytest.raises(pde.PDEInstabilityError) as exc:
        # theta = 0 turns the splitting into forward Euler, far beyond its step limit
        pde.solve_valuation(heston_spec, P.call(1.0), g, classify_zero_boundary(heston_spec),
                            theta=0.0, scheme="adi")
    assert exc.value.node is not None and len(exc.value.node) == 3


def test_binary_and_csv_round_trip(tmp_path, heston_spec):
    g = pde.make_grid(0.5, n_t=4, nx=10, ny=6)
    f = pde.solve_valuation(heston_spec, P.call(1.0), g, classify_zero_boundary(heston_spec))
    f.to_binary(tmp_path / "u.bin")
    back = pde.Field.from_binary(tmp_path / "u.bin")
    assert np.array_equal(back.values, f.values) and np.array_equal(back.x, f.x)
    assert back.meta["equation"] == "valuation"
    I = pde.solve_I(heston_spec, g.y, 0.5, n_t=4)
    assert np.array_equal(pde.Field.from_bytes(I.to_bytes()).values, I.values)
    with pytest.raises(ValueError):
        pde.Field.from_bytes(b"XXXX" + I.to_bytes()[4:])
    f.to_csv(tmp_path / "u.csv")
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert data.shape == (5 * 11 * 7, 4)
    assert np.array_equal(data[:, 3], f.values.ravel())


def test_curvature_diagnostic(heston_spec):
    g = pde.make_grid(1.0, n_t=50, nx=80, ny=40, x_eval=1.0, y_eval=0.04, kinks=(1.0,))
    f = pde.solve_valuation(heston_spec, P.call(1.0), g, classify_zero_boundary(heston_spec))
    c = pde.curvature_near_zero(heston_spec, f)
    assert len(c.y) == 8 and np.all(np.isfinite(c.values))
    assert c.y[0] > 0.0 and np.all(np.diff(c.y) > 0)
    assert "bounded_looking" in c.to_dict()
