import math

import numpy as np
import pytest

from hestoncoevo.market import (OptionQuote, RateCurve, assemble_target, load_chain,
                                make_synthetic_chain, nn_input_from_scatter, rate_at,
                                save_chain_csv)
from hestoncoevo.params import HestonParams
from hestoncoevo.pricing import call_price, default_grid

WEEK_YEARS = 7.0 / 365.0


class TestRateCurve:
    def test_exact_at_knots(self):
        curve = RateCurve.default()
        for weeks, pct in zip(curve.weeks, curve.rates_percent):
            assert rate_at(curve, weeks * WEEK_YEARS) == pytest.approx(pct / 100.0, abs=1e-15)

    def test_four_week_knot(self):
        assert rate_at(RateCurve.default(), 4 * WEEK_YEARS) == pytest.approx(0.0424)

    def test_linear_midpoint(self):
        assert rate_at(RateCurve.default(), 5 * WEEK_YEARS) == pytest.approx(0.04235)

    def test_flat_extrapolation(self):
        curve = RateCurve.default()
        assert rate_at(curve, 2.0) == pytest.approx(0.0377)
        assert rate_at(curve, 1e-4) == pytest.approx(0.0424)

    def test_piecewise_linear_continuity(self):
        curve = RateCurve.default()
        taus = np.linspace(0.01, 1.2, 400)
        rates = np.array([rate_at(curve, t) for t in taus])
        assert np.max(np.abs(np.diff(rates))) < 1e-3  # no jumps at knots

    def test_csv_roundtrip(self, tmp_path):
        curve = RateCurve.default()
        path = tmp_path / "rates.csv"
        curve.save_csv(path)
        loaded = RateCurve.load_csv(path)
        assert loaded == curve

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            RateCurve((4, 4), (1.0, 2.0))


class TestLoadChain:
    def _write(self, path, text):
        path.write_text(text)
        return path

    def test_empty_file(self, tmp_path):
        path = self._write(tmp_path / "chain.csv", "type,strike,expiry_days,bid,ask\n")
        assert load_chain(path, 100.0) == []

    def test_mid_from_bid_ask(self, tmp_path):
        path = self._write(tmp_path / "chain.csv",
                           "type,strike,expiry_days,bid,ask\ncall,100,30,10,12\n")
        (quote,) = load_chain(path, 100.0)
        assert quote.mid == 11.0

    def test_mid_column_direct(self, tmp_path):
        path = self._write(tmp_path / "chain.csv",
                           "type,strike,expiry_days,mid\nput,90,60,4.5\n")
        (quote,) = load_chain(path, 100.0)
        assert quote.mid == 4.5 and quote.option_type == "put"

    def test_crossed_and_nonpositive_dropped(self, tmp_path):
        path = self._write(tmp_path / "chain.csv",
                           "type,strike,expiry_days,bid,ask\n"
                           "call,100,30,12,10\n"      # crossed
                           "call,100,30,0,0\n"        # mid <= 0
                           "call,100,30,3,5\n")
        quotes = load_chain(path, 100.0)
        assert len(quotes) == 1 and quotes[0].mid == 4.0

    def test_malformed_rows_skipped_not_fatal(self, tmp_path):
        path = self._write(tmp_path / "chain.csv",
                           "type,strike,expiry_days,bid,ask\n"
                           "call,abc,30,3,5\n"
                           "call,100,30,3,5\n"
                           "call,100,,3,5\n")
        quotes = load_chain(path, 100.0)
        assert len(quotes) == 1

    def test_envelope_filters(self, tmp_path):
        rows = ["type,strike,expiry_days,mid"]
        rows.append("call,100,1,5")      # too short-dated
        rows.append("call,100,300,5")    # too long-dated
        rows.append("call,250,30,5")     # moneyness ln(2.5) > 0.774
        rows.append("call,100,30,5")     # keeper
        path = self._write(tmp_path / "chain.csv", "\n".join(rows) + "\n")
        quotes = load_chain(path, 100.0, maturity_days=(3, 255), moneyness=(-3.31, 0.774))
        assert len(quotes) == 1 and quotes[0].expiry_days == 30


class TestAssembleTarget:
    def test_single_call(self):
        target, ctx = assemble_target([OptionQuote(100.0, 30, 5.0, "call")], 100.0,
                                      RateCurve.default())
        assert target.size == 1
        assert target.prices[0] == 5.0
        assert target.taus[0] == pytest.approx(30 / 365)

    def test_put_parity_conversion(self):
        curve = RateCurve.default()
        tau = 45 / 365
        r = curve.rate_at(tau)
        put_price_val = 4.0
        target, _ = assemble_target([OptionQuote(95.0, 45, put_price_val, "put")], 100.0, curve)
        expected = put_price_val + 100.0 - 95.0 * math.exp(-r * tau)
        assert target.prices[0] == pytest.approx(expected, abs=1e-12)

    def test_parity_roundtrip(self):
        curve = RateCurve.default()
        tau = 45 / 365
        r = curve.rate_at(tau)
        target, _ = assemble_target([OptionQuote(95.0, 45, 4.0, "put")], 100.0, curve)
        back = target.prices[0] - 100.0 + 95.0 * math.exp(-r * tau)
        assert back == pytest.approx(4.0, abs=1e-12)

    def test_paper_scale_snapshot_cell_count(self):
        theta = HestonParams(2.0, 0.09, 0.4, -0.7, 0.06)
        quotes = make_synthetic_chain(theta, 5000.0, RateCurve.default(),
                                      expiry_days=(7, 21, 45, 90, 150, 255),
                                      strikes_per_expiry=26)
        assert len(quotes) == 156
        target, ctx = assemble_target(quotes, 5000.0, RateCurve.default())
        assert target.size == 156
        assert ctx.spot == 5000.0

    def test_empty_quotes_rejected(self):
        with pytest.raises(ValueError):
            assemble_target([], 100.0, RateCurve.default())


class TestSyntheticChain:
    def test_roundtrip_preserves_model_prices(self, tmp_path):
        theta = HestonParams(1.8, 0.07, 0.45, -0.65, 0.05)
        curve = RateCurve.default()
        spot = 100.0
        quotes = make_synthetic_chain(theta, spot, curve, expiry_days=(30, 90),
                                      strikes_per_expiry=5)
        path = tmp_path / "chain.csv"
        save_chain_csv(quotes, path)
        loaded = load_chain(path, spot)
        target, ctx = assemble_target(loaded, spot, curve)
        for k, tau, price in zip(target.strikes, target.taus, target.prices):
            model = call_price(theta, ctx, float(tau), float(k))
            assert price == pytest.approx(model, abs=1e-9)

    def test_nn_input_interpolation_matches_rectangular_case(self, ctx):
        # a scattered target that actually lies on a rectangular grid must
        # interpolate back to (nearly) itself
        theta = HestonParams(1.8, 0.07, 0.45, -0.65, 0.05)
        grid = default_grid(100.0, 5, 3, moneyness=(-0.2, 0.15), maturity_span=(0.1, 0.9))
        from hestoncoevo.pricing import price_surface
        surf = price_surface(theta, ctx, grid)
        from hestoncoevo.market import ScatterTarget
        target = ScatterTarget(surf.strikes_flat, surf.taus_flat, surf.prices_flat)
        flat = nn_input_from_scatter(target, grid)
        np.testing.assert_allclose(flat, surf.flatten(), rtol=1e-9)
