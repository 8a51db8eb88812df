import math

import numpy as np
import pytest

from hestoncoevo.params import HestonParams, MarketContext
from hestoncoevo.pricing import (NonConvergentError, PriceSurface, QuadratureSpec,
                                 SurfaceGrid, call_price, characteristic_fn,
                                 default_grid, mc_price_oracle, price_surface, put_price)


class TestCharacteristicFunction:
    def test_unit_at_zero(self, ctx, box, draw_params):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            p = draw_params(rng, box)
            tau = rng.uniform(0.05, 1.0)
            assert characteristic_fn(p, ctx, tau, 0.0) == pytest.approx(1.0 + 0.0j, abs=1e-12)

    def test_martingale_at_minus_i(self, ctx, box, draw_params):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p = draw_params(rng, box)
            tau = rng.uniform(0.05, 1.0)
            expected = ctx.spot * math.exp(ctx.rate_at(tau) * tau)
            val = characteristic_fn(p, ctx, tau, -1j)
            assert val.real == pytest.approx(expected, rel=1e-10)
            assert abs(val.imag) < 1e-8 * expected

    def test_matches_empirical_mc_characteristic_function(self, ctx, demo_params):
        # E[exp(i u ln S_tau)] estimated from Euler paths of the dynamics
        tau, n_paths, n_steps = 0.25, 200_000, 200
        rng = np.random.default_rng(12)
        p = demo_params
        r = ctx.rate_at(tau)
        dt = tau / n_steps
        v = np.full(n_paths, p.v0)
        log_s = np.full(n_paths, math.log(ctx.spot))
        for _ in range(n_steps):
            z1 = rng.standard_normal(n_paths)
            z2 = rng.standard_normal(n_paths)
            zs = p.rho * z1 + math.sqrt(1 - p.rho ** 2) * z2
            vp = np.maximum(v, 0.0)
            log_s += (r - 0.5 * vp) * dt + np.sqrt(vp * dt) * zs
            v += p.kappa * (p.lam - vp) * dt + p.sigma * np.sqrt(vp * dt) * z1
        for u in (0.5, 1.0, 5.0):
            draws = np.exp(1j * u * log_s)
            est = draws.mean()
            se_re = draws.real.std(ddof=1) / math.sqrt(n_paths)
            se_im = draws.imag.std(ddof=1) / math.sqrt(n_paths)
            exact = characteristic_fn(p, ctx, tau, u)
            assert abs(exact.real - est.real) < 3 * se_re + 5e-4  # small Euler bias allowance
            assert abs(exact.imag - est.imag) < 3 * se_im + 5e-4

    def test_vectorized_matches_scalar(self, ctx, demo_params):
        us = np.array([0.3, 1.7, 12.0])
        vec = characteristic_fn(demo_params, ctx, 0.5, us)
        for u, val in zip(us, vec):
            assert characteristic_fn(demo_params, ctx, 0.5, float(u)) == pytest.approx(val)


class TestCallPrice:
    def test_black_scholes_degenerate_limit(self, ctx, bs_oracle):
        p = HestonParams(kappa=2.0, lam=0.04, sigma=1e-4, rho=0.0, v0=0.04)
        c = call_price(p, ctx, 0.5, 100.0)
        assert c == pytest.approx(bs_oracle(100.0, 100.0, 0.03, 0.5, 0.20), abs=1e-4)

    def test_bs_limit_across_strikes_and_maturities(self, ctx, bs_oracle):
        p = HestonParams(kappa=2.0, lam=0.09, sigma=1e-4, rho=0.0, v0=0.09)
        for strike in (80.0, 95.0, 110.0, 125.0):
            for tau in (0.1, 0.5, 1.0):
                c = call_price(p, ctx, tau, strike)
                assert c == pytest.approx(bs_oracle(100.0, strike, 0.03, tau, 0.30), abs=1e-4)

    def test_deep_itm_limit(self, ctx, demo_params):
        tau = 0.5
        c = call_price(demo_params, ctx, tau, 1e-6)
        expected = ctx.spot - 1e-6 * math.exp(-ctx.rate_at(tau) * tau)
        assert c == pytest.approx(expected, rel=1e-9)

    def test_against_mc_oracle(self, ctx, demo_params):
        ctx2 = MarketContext(100.0, 0.02)
        an = call_price(demo_params, ctx2, 1.0, 110.0)
        mc, se = mc_price_oracle(demo_params, ctx2, 1.0, 110.0, n_paths=400_000,
                                 rng=np.random.default_rng(13))
        assert abs(an - mc) < 3 * se

    def test_strict_mode_passes_on_tame_point(self, ctx, demo_params):
        quad = QuadratureSpec(strict=True)
        assert call_price(demo_params, ctx, 0.5, 100.0, quad) > 0

    def test_rejects_nonpositive_inputs(self, ctx, demo_params):
        with pytest.raises(ValueError):
            call_price(demo_params, ctx, 0.5, -1.0)
        with pytest.raises(ValueError):
            call_price(demo_params, ctx, 0.0, 100.0)


class TestPutPrice:
    def test_parity_exact(self, ctx, box, draw_params):
        rng = np.random.default_rng(14)
        for _ in range(100):
            p = draw_params(rng, box)
            tau = rng.uniform(0.05, 1.0)
            strike = 100.0 * math.exp(rng.uniform(-0.3, 0.2))
            c = call_price(p, ctx, tau, strike)
            q = put_price(p, ctx, tau, strike)
            lhs = c - q
            rhs = ctx.spot - strike * math.exp(-ctx.rate_at(tau) * tau)
            assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_tiny_strike_put_worthless(self, ctx, demo_params):
        assert put_price(demo_params, ctx, 0.5, 1e-6) == pytest.approx(0.0, abs=1e-9)

    def test_put_against_mc(self, demo_params):
        ctx2 = MarketContext(100.0, 0.02)
        an = put_price(demo_params, ctx2, 1.0, 90.0)
        rng = np.random.default_rng(15)
        # oracle prices the call; parity converts (independent arithmetic path)
        mc_call, se = mc_price_oracle(demo_params, ctx2, 1.0, 90.0, n_paths=400_000, rng=rng)
        mc_put = mc_call - 100.0 + 90.0 * math.exp(-0.02)
        assert abs(an - mc_put) < 3 * se


class TestSurface:
    def test_one_by_one_grid_reduces_to_call_price(self, ctx, demo_params):
        grid = SurfaceGrid((100.0,), (0.5,))
        surf = price_surface(demo_params, ctx, grid)
        assert surf.prices[0, 0] == call_price(demo_params, ctx, 0.5, 100.0)

    def test_monotone_in_strike(self, ctx, box, draw_params):
        rng = np.random.default_rng(16)
        grid = default_grid(100.0, 12, 3)
        for _ in range(20):
            p = draw_params(rng, box)
            surf = price_surface(p, ctx, grid)
            assert np.all(np.diff(surf.prices, axis=0) <= 1e-8)

    def test_convex_in_strike(self, ctx, box, draw_params):
        rng = np.random.default_rng(17)
        strikes = tuple(np.linspace(70.0, 130.0, 25))
        grid = SurfaceGrid(strikes, (0.25, 0.75))
        for _ in range(20):
            p = draw_params(rng, box)
            prices = price_surface(p, ctx, grid).prices
            second_diff = prices[2:] - 2 * prices[1:-1] + prices[:-2]
            assert np.all(second_diff >= -1e-6 * ctx.spot)

    def test_flatten_row_major(self):
        grid = SurfaceGrid((90.0, 110.0), (0.25, 0.5, 1.0))
        prices = np.arange(6.0).reshape(2, 3)
        surf = PriceSurface(grid, prices)
        assert surf.flatten().tolist() == [0, 1, 2, 3, 4, 5]
        assert surf.strikes_flat.tolist() == [90, 90, 90, 110, 110, 110]
        assert surf.taus_flat.tolist() == [0.25, 0.5, 1.0, 0.25, 0.5, 1.0]

    def test_csv_roundtrip(self, tmp_path, ctx, demo_params, small_grid):
        surf = price_surface(demo_params, ctx, small_grid)
        path = tmp_path / "surface.csv"
        surf.to_csv(path)
        loaded = PriceSurface.from_csv(path)
        assert loaded.grid == surf.grid
        np.testing.assert_array_equal(loaded.prices, surf.prices)

    def test_json_roundtrip(self, ctx, demo_params, small_grid):
        surf = price_surface(demo_params, ctx, small_grid)
        loaded = PriceSurface.from_json_dict(surf.to_json_dict())
        np.testing.assert_array_equal(loaded.prices, surf.prices)

    def test_quadrature_convergence_on_box_interior(self, ctx, box, draw_params, quad):
        rng = np.random.default_rng(18)
        grid = default_grid(100.0, 3, 2)
        n_violations = 0
        for _ in range(200):
            p = draw_params(rng, box)
            base = price_surface(p, ctx, grid, quad).prices
            fine = price_surface(p, ctx, grid, quad.doubled()).prices
            worst = np.max(np.abs(fine - base))
            if worst >= 1e-6 * ctx.spot:
                n_violations += 1
                strict = QuadratureSpec(quad.u_max, quad.n_nodes, quad.n_panels, strict=True)
                with pytest.raises(NonConvergentError):
                    price_surface(p, ctx, grid, strict)
        assert n_violations <= 10  # >= 95% of interior draws converge

    def test_surface_against_mc_per_cell(self, ctx, demo_params):
        grid = default_grid(100.0, 4, 2)
        surf = price_surface(demo_params, ctx, grid)
        rng_root = np.random.SeedSequence(19)
        n_outside = 0
        for i, k in enumerate(grid.strikes):
            for j, t in enumerate(grid.maturities):
                mc, se = mc_price_oracle(demo_params, ctx, t, k, n_paths=100_000,
                                         rng=np.random.default_rng(rng_root.spawn(1)[0]))
                if abs(surf.prices[i, j] - mc) >= 3 * se:
                    n_outside += 1
        assert n_outside <= 1  # 8 cells, allow one 3-sigma excursion

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            SurfaceGrid((100.0, 90.0), (0.5,))
        with pytest.raises(ValueError):
            SurfaceGrid((100.0,), (0.5, 0.5))
        with pytest.raises(ValueError):
            SurfaceGrid((-1.0,), (0.5,))


class TestMcOracle:
    def test_bs_limit(self, bs_oracle):
        ctx = MarketContext(100.0, 0.03)
        p = HestonParams(2.0, 0.04, 1e-4, 0.0, 0.04)
        mc, se = mc_price_oracle(p, ctx, 0.5, 100.0, n_paths=200_000,
                                 rng=np.random.default_rng(20))
        assert abs(mc - bs_oracle(100.0, 100.0, 0.03, 0.5, 0.2)) < 3 * se

    def test_zero_rate_tiny_strike_is_forward(self, demo_params):
        ctx = MarketContext(100.0, 0.0)
        mc, se = mc_price_oracle(demo_params, ctx, 0.5, 1e-6, n_paths=100_000,
                                 rng=np.random.default_rng(21))
        assert abs(mc - 100.0) < 3 * se

    def test_se_shrinks_with_paths(self, demo_params, ctx):
        _, se1 = mc_price_oracle(demo_params, ctx, 0.25, 100.0, n_paths=50_000,
                                 rng=np.random.default_rng(22))
        _, se2 = mc_price_oracle(demo_params, ctx, 0.25, 100.0, n_paths=100_000,
                                 rng=np.random.default_rng(23))
        ratio = se2 / se1
        assert 0.8 * (1 / math.sqrt(2)) < ratio < 1.2 * (1 / math.sqrt(2))

    def test_path_floor_enforced(self, demo_params, ctx):
        with pytest.raises(ValueError):
            mc_price_oracle(demo_params, ctx, 0.5, 100.0, n_paths=100)
