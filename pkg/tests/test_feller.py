import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblepde import feller as F
from bubblepde.feller import Verdict


def test_scale_function_closed_forms():
    s = F.scale_function("0", "1", c=1.0)
    assert s(3.0) == pytest.approx(2.0, rel=1e-9)
    s = F.scale_function("y", "y", c=1.0)          # s'(y) = y^-2, s(y) = 1 - 1/y
    for y in (0.5, 2.0, 10.0):
        assert s.derivative(y) == pytest.approx(y ** -2, rel=1e-9)
        assert s(y) == pytest.approx(1.0 - 1.0 / y, rel=1e-8, abs=1e-12)
    assert s(1.0) == 0.0


@pytest.mark.parametrize("mu,sig", [("y^1.5", "y"), ("0.3-2*y", "0.4*sqrt(y)"), ("-1*y", "0.5*y")])
def test_scale_reference_change_is_affine(mu, sig):
    s1 = F.scale_function(mu, sig, c=1.0)
    s2 = F.scale_function(mu, sig, c=2.0)
    for y in (0.7, 1.5, 4.0):
        expected = (s1(y) - s1(2.0)) / s1.derivative(2.0)
        assert s2(y) == pytest.approx(expected, rel=1e-7, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0.2, 2), st.floats(0.5, 2.0), st.floats(0.2, 5), st.floats(0.2, 5))
def test_scale_is_increasing(alpha, beta, p, y1, y2):
    s = F.scale_function(f"{alpha!r}*y^{p!r}", f"{beta!r}*y", c=1.0)
    lo, hi = sorted((y1, y2))
    if hi - lo < 1e-6:
        return
    try:
        assert s(hi) > s(lo)
    except OverflowError:
        pass


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("p", [0.5, 1.5, 2.0])
def test_power_law_explosion(a, b, p):
    r = F.test_explosion_at_infinity(f"{a}*y^{p}", f"{b}*y")
    assert r.verdict is (Verdict.FINITE if p > 1 else Verdict.INFINITE)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_power_law_p1_never_wrong(a):
    r = F.test_explosion_at_infinity(f"{a}*y", "y")
    assert r.verdict in (Verdict.INFINITE, Verdict.INCONCLUSIVE)


def test_negative_drift_does_not_explode():
    assert F.test_explosion_at_infinity("-1*y^2", "y").verdict is Verdict.INFINITE


@pytest.mark.parametrize("mu,sig,att", [
    ("0.02-2*y", "0.4*sqrt(y)", Verdict.FINITE),
    ("0.3-2*y", "0.4*sqrt(y)", Verdict.INFINITE),
    ("0", "y", Verdict.INFINITE),
])
def test_attainability_at_zero(mu, sig, att):
    assert F.test_attainability_at_zero(mu, sig).verdict is att


@pytest.mark.parametrize("mu,sig", [("y^1.5", "y"), ("y^2", "0.5*y"), ("0.5*y^0.5", "y"), ("-1*y", "y")])
def test_cross_check_agrees(mu, sig):
    r = F.test_explosion_at_infinity(mu, sig, cross_check=True)
    assert r.cross_check is not None
    assert r.cross_check["verdict"] in (r.verdict.value, "Inconclusive")


def test_report_is_json_ready():
    import json
    r = F.test_explosion_at_infinity("y^2", "y")
    json.dumps(r.to_dict())
    assert r.decisive and math.isfinite(r.tail_exponent)
