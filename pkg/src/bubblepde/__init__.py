"""Bubbles in stochastic volatility models: explosion tests, valuation PDEs and Monte Carlo."""
__version__ = "0.1.0"

from .exprdsl import parse, evaluate, differentiate, simplify, to_string  # noqa: E402
from .model import ModelSpec, validate, classify_zero_boundary, auxiliary_drift  # noqa: E402
from .feller import test_explosion_at_infinity, test_attainability_at_zero, scale_function  # noqa: E402
from .payoff import call, put, digital, identity, constant, piecewise, concave_majorant, eta  # noqa: E402
from .mc import MCConfig, price, explosion_probability, local_martingale_diagnostic  # noqa: E402
from .pde import Grid, Field, make_grid, solve_valuation, solve_I, defect_surface, residual  # noqa: E402
from .analysis import classify, demo_nonuniqueness, cross_validate  # noqa: E402
