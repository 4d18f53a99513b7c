import csv
import math

import numpy as np
import pytest

from bubblepde import mc, pde, payoff as P
from bubblepde.model import ModelSpec, classify_zero_boundary, heston


def test_config_validation():
    with pytest.raises(ValueError):
        mc.MCConfig(n_paths=0)
    with pytest.raises(ValueError):
        mc.MCConfig(barrier_levels=(10.0, 5.0))
    with pytest.raises(ValueError):
        mc.MCConfig(barrier_levels=(1.0, 5.0, 9.0)).barriers_for(2.0)
    assert mc.MCConfig().barriers_for(3.0) == (300.0, 3000.0, 30000.0)


def test_determinism(heston_spec):
    cfg = mc.MCConfig(n_paths=5000, n_steps=50, seed=42)
    a = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0, cfg)
    b = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0, cfg)
    assert a == b
    c = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0, mc.MCConfig(n_paths=5000, n_steps=50, seed=43))
    assert c.mean != a.mean


def test_block_size_does_not_change_prefix(heston_spec):
    e1 = mc.simulate_paths(heston_spec, 0.04, 1.0, 1.0, mc.MCConfig(n_paths=100, n_steps=10, seed=3))
    e2 = mc.simulate_paths(heston_spec, 0.04, 1.0, 1.0, mc.MCConfig(n_paths=300, n_steps=10, seed=3))
    assert np.array_equal(e1.logH_T, e2.logH_T[:100])


def test_std_error_scaling(heston_spec):
    ratios = []
    for seed in range(4):
        s1 = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0, mc.MCConfig(n_paths=4000, n_steps=25, seed=seed))
        s4 = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0,
                      mc.MCConfig(n_paths=16000, n_steps=25, seed=100 + seed))
        ratios.append(s4.std_error / s1.std_error)
    assert abs(np.mean(ratios) - 0.5) <= 0.1


def test_frozen_vol_moments():
    spec = ModelSpec("0", "0.000001*y", "sqrt(y)", 0.0)
    T, n = 1.0, 100_000
    ens = mc.simulate_paths(spec, 0.04, 1.0, T, mc.MCConfig(n_paths=n, n_steps=20, seed=11))
    m, v = ens.logH_T.mean(), ens.logH_T.var(ddof=1)
    assert abs(m - (-0.02 * T)) <= 3 * math.sqrt(0.04 * T / n)
    assert abs(v - 0.04 * T) <= 3 * 0.04 * T * math.sqrt(2.0 / (n - 1))


def test_absorbed_start():
    spec = ModelSpec("-2*y", "0.4*sqrt(y)", "sqrt(y)", -0.5)
    ens = mc.simulate_paths(spec, 0.0, 1.0, 1.0, mc.MCConfig(n_paths=500, n_steps=20), n_record=5)
    assert ens.absorbing
    assert np.all(ens.Y_T == 0.0) and np.all(ens.logH_T == 0.0)
    assert np.all(ens.Y_paths == 0.0)


def test_independent_increments():
    cfg = mc.MCConfig(n_paths=20000, n_steps=5, seed=9)
    dBs, dWs = [], []
    for step in range(cfg.n_steps):
        dB, dW = mc.brownian_increments(cfg, 0.0, 0.01, 0, step, cfg.n_paths)
        dBs.append(dB)
        dWs.append(dW)
    r = np.corrcoef(np.concatenate(dBs), np.concatenate(dWs))[0, 1]
    assert abs(r) <= 3 / math.sqrt(cfg.n_paths * cfg.n_steps)
    dB, dW = mc.brownian_increments(cfg, -0.7, 0.01, 0, 0, cfg.n_paths)
    assert np.corrcoef(dB, dW)[0, 1] == pytest.approx(-0.7, abs=0.02)


def test_identity_in_martingale_model(heston_spec):
    est = mc.price(heston_spec, P.identity(), 1.0, 0.04, 1.0, mc.MCConfig(n_paths=20000, n_steps=100, seed=5))
    assert abs(est.mean - 1.0) <= 3 * est.std_error


def test_constant_payoff_exact(heston_spec):
    est = mc.price(heston_spec, P.constant(2.5), 1.0, 0.04, 1.0, mc.MCConfig(n_paths=100, n_steps=10))
    assert est.mean == 2.5 and est.std_error == 0.0


def test_frozen_vol_call_black_scholes():
    from scipy.stats import norm
    spec = ModelSpec("0", "0.000001*y", "sqrt(y)", 0.0)
    est = mc.price(spec, P.call(1.0), 1.0, 0.04, 1.0, mc.MCConfig(n_paths=50000, n_steps=20, seed=2))
    bs = norm.cdf(0.1) - norm.cdf(-0.1)
    assert abs(est.mean - bs) <= 3 * est.std_error + 1e-4


def test_antithetic_runs(heston_spec):
    est = mc.price(heston_spec, P.call(1.0), 1.0, 0.04, 1.0,
                   mc.MCConfig(n_paths=4000, n_steps=25, antithetic=True))
    assert est.n_effective == 2000 and est.std_error > 0


def test_supermartingale(explosive_spec):
    for spec in (heston(), explosive_spec, ModelSpec("-1*y", "0.5*y", "sqrt(y)", 0.5)):
        est = mc.price(spec, P.identity(), 1.0, 1.0, 1.0, mc.MCConfig(n_paths=5000, n_steps=100, seed=4))
        assert est.mean <= 1.0 + 3 * est.std_error


def test_explosion_examples():
    cfg = mc.MCConfig(n_paths=2000, n_steps=100, seed=1)
    e = mc.explosion_probability("y^2", "0.01*y", 2.0, 1.0, cfg)
    assert e.mean == pytest.approx(1.0, abs=max(3 * e.std_error, 1e-3))
    z = mc.explosion_probability("y^2", "0.01*y", 2.0, 0.0, cfg)
    assert z.mean == 0.0
    h = mc.explosion_probability("0.3-2.2*y", "0.4*sqrt(y)", 1.0, 1.0, cfg)
    assert h.mean <= 3 * h.std_error + 1e-12


def test_explosion_monotone_in_y0():
    cfg = mc.MCConfig(n_paths=2000, n_steps=100, seed=8, barrier_levels=(1e2, 1e3, 1e4))
    est = [mc.explosion_probability("y^2", "0.5*y", y0, 0.3, cfg) for y0 in (1.0, 2.0, 4.0)]
    for a, b in zip(est, est[1:]):
        assert b.mean >= a.mean - 3 * (a.std_error + b.std_error)
    assert est[-1].mean > est[0].mean


def test_local_martingale_diagnostic(heston_spec, explosive_spec):
    cfg = mc.MCConfig(n_paths=4000, n_steps=100, seed=6)
    const = mc.local_martingale_diagnostic(heston_spec, lambda x, y, t: 3.0, 1.0, 0.04, 1.0, cfg)
    assert const.drift.mean == 0.0 and not const.supermartingale_like
    strict = mc.local_martingale_diagnostic(explosive_spec, lambda x, y, t: x, 1.0, 1.0, 1.0,
                                            mc.MCConfig(n_paths=20000, n_steps=100, seed=6))
    assert strict.supermartingale_like
    g = pde.make_grid(1.0, n_t=100, nx=100, ny=50, x_eval=1.0, y_eval=0.04, kinks=(1.0,))
    u = pde.solve_valuation(heston_spec, P.call(1.0), g, classify_zero_boundary(heston_spec))
    d = mc.local_martingale_diagnostic(heston_spec, u, 1.0, 0.04, 1.0, cfg)
    assert abs(d.drift.mean) <= 3 * d.drift.std_error + 1e-3
    assert 0.0 <= d.clamped_fraction < 0.01


def test_path_dump(tmp_path, heston_spec):
    ens = mc.simulate_paths(heston_spec, 0.04, 1.0, 1.0, mc.MCConfig(n_paths=10, n_steps=4), n_record=2)
    out = tmp_path / "paths.csv"
    mc.dump_paths_csv(ens, out)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["path", "t", "Y", "logH"] and len(rows) == 1 + 2 * 5
