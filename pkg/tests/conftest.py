import math

import pytest

from hestoncoevo.params import HestonParams, MarketContext, ParamBox
from hestoncoevo.pricing import QuadratureSpec, default_grid


@pytest.fixture
def box():
    return ParamBox.default()


@pytest.fixture
def ctx():
    return MarketContext(spot=100.0, rate=0.03)


@pytest.fixture
def quad():
    return QuadratureSpec()


@pytest.fixture
def small_grid():
    return default_grid(100.0, 4, 3)


@pytest.fixture
def demo_params():
    # Feller-violating but otherwise tame point used across modules.
    return HestonParams(kappa=1.5, lam=0.08, sigma=0.5, rho=-0.6, v0=0.06)


def bs_call(spot, strike, rate, tau, vol):
    """Black-Scholes closed form, written independently of the library."""
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / (vol * math.sqrt(tau))
    d2 = d1 - vol * math.sqrt(tau)
    n = lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
    return spot * n(d1) - strike * math.exp(-rate * tau) * n(d2)


@pytest.fixture
def bs_oracle():
    return bs_call


def random_box_params(rng, box):
    lo, hi = box.lower_array(), box.upper_array()
    a = lo + rng.random(5) * (hi - lo)
    # keep variance components clear of the degenerate floor for pricing tests
    a[1] = max(a[1], 0.01)
    a[4] = max(a[4], 0.01)
    return HestonParams.from_array(a)


@pytest.fixture
def draw_params():
    return random_box_params
