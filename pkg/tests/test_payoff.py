import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblepde import payoff as P


def test_eval_examples():
    assert P.call(1.0)(1.5) == 0.5
    assert P.put(2.0)(3.0) == 0.0
    assert P.identity()(7.0) == 7.0
    assert P.constant(2.5)(np.array([0.0, 10.0])).tolist() == [2.5, 2.5]


def test_majorant_examples():
    h = P.concave_majorant(P.call(1.0))
    xs = np.linspace(0, 10, 101)
    assert np.allclose(h(xs), xs) and h.eta == 1.0
    h = P.concave_majorant(P.put(1.5))
    assert np.allclose(h(xs), 1.5) and h.eta == 0.0


def test_digital_majorant_matches_dense_envelope():
    K, c = 2.0, 3.0
    g = P.digital(K, c)
    h = P.concave_majorant(g)
    xs = np.linspace(0, 10, 2001)
    assert np.allclose(h(xs), np.minimum(c * xs / K, c), atol=1e-12)
    # brute-force: smallest concave nondecreasing majorant over dense points = min over supporting lines
    gx = g(xs)
    brute = np.array([min(max(gx[j] for j in range(len(xs)) if xs[j] <= x) if x > 0 else gx[0], c)
                      for x in xs[::100]])
    assert np.all(h(xs[::100]) >= brute - 1e-12)
    assert P.eta(g) == 0.0


def test_eta_examples():
    assert P.eta(P.identity()) == 1.0
    assert P.eta(P.put(1.0)) == 0.0
    assert P.eta(P.piecewise([(0, 0), (1, 1)], slope=0.4)) == 0.4


def test_piecewise_validation():
    with pytest.raises(ValueError):
        P.piecewise([(1, 0), (0.5, 1)])
    with pytest.raises(ValueError):
        P.piecewise([(0, -1), (1, 1)])
    with pytest.raises(ValueError):
        P.from_dict({"type": "straddle", "strike": 1})
    assert P.from_dict({"type": "call", "strike": 2}).strike == 2.0




@st.composite
def piecewise_payoffs(draw):
    n = draw(st.integers(1, 8))
    steps = draw(st.lists(st.floats(0.05, 3.0), min_size=n, max_size=n))
    xs = np.cumsum(steps) - steps[0] + draw(st.sampled_from([0.0, 0.3]))
    gs = draw(st.lists(st.floats(0.0, 5.0), min_size=n, max_size=n))
    s = draw(st.floats(0.0, 2.0))
    return P.piecewise(list(zip(xs.tolist(), gs)), s)


@settings(max_examples=300, deadline=None)
@given(piecewise_payoffs())
def test_majorant_invariants(g):
    m = P.concave_majorant(g)
    h = m.h
    pts = np.unique(np.concatenate([np.linspace(0, 2 * max(g.pl.xs) + 5, 4001), g.pl.xs, h.xs]))
    assert np.all(h(pts) >= g(pts) - 1e-9)                       # domination
    slopes = np.append(h.segment_slopes(), h.slope)
    assert np.all(slopes >= -1e-12)                               # nondecreasing
    assert np.all(np.diff(slopes) <= 1e-9)                        # concave
    assert m.eta == P.eta(g) == h.slope                           # same asymptotic slope
    assert np.all(h(pts) <= m.M_fit * (1 + pts) + 1e-9)
    # minimality: every breakpoint of h touches g, so lowering it by 1e-9 breaks domination
    for x, v in zip(h.xs, h.gs):
        assert g(x) >= v - 1e-9
