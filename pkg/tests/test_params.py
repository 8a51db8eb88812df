import math

import numpy as np
import pytest

from hestoncoevo.params import (HestonParams, MarketContext, ParamBox, clamp,
                                feller_satisfied, lhs_strata_counts, sample_lhs,
                                sample_uniform)


class TestClamp:
    def test_inside_box_is_identity(self, box):
        p = HestonParams(2.0, 0.5, 0.5, -0.5, 0.5)
        assert clamp(p, box) == p

    def test_kappa_clipped_to_upper_bound(self, box):
        p = HestonParams(7.0, 0.5, 0.5, -0.5, 0.5)
        assert clamp(p, box).kappa == 5.0

    def test_zero_v0_floored(self, box):
        p = HestonParams(2.0, 0.5, 0.5, -0.5, 0.0)
        assert clamp(p, box).v0 == 1e-6

    def test_zero_lam_floored(self, box):
        p = HestonParams(2.0, 0.0, 0.5, -0.5, 0.5)
        assert clamp(p, box).lam == 1e-6

    def test_idempotent(self, box):
        rng = np.random.default_rng(0)
        for _ in range(200):
            raw = HestonParams.from_array(rng.uniform(-2, 8, size=5))
            once = clamp(raw, box)
            assert clamp(once, box) == once


class TestFeller:
    def test_satisfied(self):
        assert feller_satisfied(HestonParams(2.0, 0.5, 1.0, 0.0, 0.1)) is True

    def test_violated(self):
        assert feller_satisfied(HestonParams(0.005, 0.1, 0.5, 0.0, 0.1)) is False

    def test_boundary_is_strict(self):
        # 2*1*0.5 == 1.0 == sigma^2 exactly: strict inequality fails
        assert feller_satisfied(HestonParams(1.0, 0.5, 1.0, 0.0, 0.1)) is False

    def test_agrees_with_direct_evaluation(self, box):
        rng = np.random.default_rng(1)
        lo, hi = box.lower_array(), box.upper_array()
        for _ in range(100_000):
            a = lo + rng.random(5) * (hi - lo)
            p = HestonParams.from_array(a)
            assert feller_satisfied(p) == (2 * a[0] * a[1] - a[2] ** 2 > 0)


class TestSampleUniform:
    def test_degenerate_box_returns_the_point(self):
        p = HestonParams(2.0, 0.5, 0.5, -0.5, 0.5)
        degenerate = ParamBox(p, p)
        assert sample_uniform(degenerate, 1, np.random.default_rng(0)) == [p]

    def test_containment(self, box):
        samples = sample_uniform(box, 1000, np.random.default_rng(2))
        assert all(box.contains(p) for p in samples)

    def test_mean_near_midpoint(self, box):
        n = 1000
        samples = sample_uniform(box, n, np.random.default_rng(3))
        arr = np.array([p.as_array() for p in samples])
        mid = 0.5 * (box.lower_array() + box.upper_array())
        tol = 3.0 * box.ranges() / math.sqrt(12.0 * n)  # 3 standard errors of a uniform mean
        # lam and v0 means shift up by at most the 1e-6 clamp floor
        assert np.all(np.abs(arr.mean(axis=0) - mid) <= tol + 1e-6)

    def test_n_must_be_positive(self, box):
        with pytest.raises(ValueError):
            sample_uniform(box, 0, np.random.default_rng(0))


class TestSampleLhs:
    def test_single_sample_in_range(self, box):
        (p,) = sample_lhs(box, 1, np.random.default_rng(4))
        assert box.contains(p)

    @pytest.mark.parametrize("n", [1, 10, 100, 1000])
    def test_exact_stratification(self, box, n):
        samples = sample_lhs(box, n, np.random.default_rng(5))
        counts = lhs_strata_counts(samples, box, n)
        assert np.all(counts == 1)

    def test_decile_occupancy(self, box):
        samples = sample_lhs(box, 10, np.random.default_rng(6))
        counts = lhs_strata_counts(samples, box, 10)
        assert np.all(counts == 1)

    def test_cdf_deviation_bound(self, box):
        # with one point per stratum, the empirical CDF at stratum boundaries
        # matches the uniform CDF exactly; deviation within a stratum <= 1/n
        n = 100
        samples = sample_lhs(box, n, np.random.default_rng(7))
        lo, rng_ = box.lower_array(), box.ranges()
        for d in range(5):
            u = np.sort([(p.as_array()[d] - lo[d]) / rng_[d] for p in samples])
            for i, boundary in enumerate(np.arange(1, n + 1) / n):
                ecdf = np.searchsorted(u, boundary, side="right") / n
                assert abs(ecdf - boundary) <= 1.0 / n + 1e-12

    def test_deterministic_under_seed(self, box):
        a = sample_lhs(box, 50, np.random.default_rng(8))
        b = sample_lhs(box, 50, np.random.default_rng(8))
        assert a == b


class TestBoxIO:
    def test_roundtrip(self, tmp_path, box):
        path = tmp_path / "box.txt"
        box.save(path)
        loaded = ParamBox.load(path)
        assert loaded == box

    def test_lambda_keyword_accepted(self, tmp_path):
        path = tmp_path / "box.txt"
        path.write_text("kappa = [0.1, 2.0]\nlambda = [0.01, 1.0]\n"
                        "sigma = [0.1, 1.0]\nrho = [-0.9, 0.0]\nv0 = [0.01, 1.0]\n")
        loaded = ParamBox.load(path)
        assert loaded.lower.lam == 0.01

    def test_missing_param_rejected(self, tmp_path):
        path = tmp_path / "box.txt"
        path.write_text("kappa = [0.1, 2.0]\n")
        with pytest.raises(ValueError, match="missing"):
            ParamBox.load(path)

    def test_invalid_bounds_rejected(self):
        lo = HestonParams(1.0, 0.5, 0.5, -0.5, 0.5)
        hi = HestonParams(0.5, 0.5, 0.5, -0.5, 0.5)
        with pytest.raises(ValueError):
            ParamBox(lo, hi)


class TestMarketContext:
    def test_flat_rate(self):
        ctx = MarketContext(100.0, 0.05)
        assert ctx.rate_at(0.3) == 0.05

    def test_callable_rate(self):
        ctx = MarketContext(100.0, lambda tau: 0.01 + 0.01 * tau)
        assert ctx.rate_at(2.0) == pytest.approx(0.03)

    def test_spot_must_be_positive(self):
        with pytest.raises(ValueError):
            MarketContext(0.0, 0.05)
