import numpy as np
import pytest

from hestoncoevo.coevo import InjectionConfig, run_coevolution
from hestoncoevo.datasets import (build_ga_history_dataset, build_lhs_dataset,
                                  overfitting_experiment, split)
from hestoncoevo.ga import GaConfig
from hestoncoevo.mlp import NeuroConfig
from hestoncoevo.params import lhs_strata_counts
from hestoncoevo.pricing import price_surface


@pytest.fixture
def target(ctx, small_grid, demo_params):
    return price_surface(demo_params, ctx, small_grid)


class TestLhsDataset:
    def test_empty_request(self, box, ctx, small_grid, quad):
        assert build_lhs_dataset(box, 0, ctx, small_grid, quad,
                                 np.random.default_rng(0)) == []

    def test_pairs_self_consistent_under_repricing(self, box, ctx, small_grid, quad):
        data = build_lhs_dataset(box, 20, ctx, small_grid, quad, np.random.default_rng(1))
        for flat, theta in data:
            again = price_surface(theta, ctx, small_grid, quad).flatten()
            np.testing.assert_array_equal(flat, again)

    def test_parameter_side_stratification(self, box, ctx, quad):
        from hestoncoevo.pricing import SurfaceGrid
        tiny = SurfaceGrid((100.0,), (0.25,))
        n = 500
        data = build_lhs_dataset(box, n, ctx, tiny, quad, np.random.default_rng(2))
        params = [theta for _, theta in data]
        counts = lhs_strata_counts(params, box, n)
        assert np.all(counts == 1)


class TestGaHistoryDataset:
    def test_size_bound(self, box, ctx, target, small_grid):
        generations = 5
        run = run_coevolution(target, ctx, small_grid, box, GaConfig(),
                              NeuroConfig(population_size=4), InjectionConfig(),
                              generations, seed=3)
        hist = build_ga_history_dataset(run)
        assert len(hist) <= 10 * generations

    def test_duplicates_retained(self, box, ctx, target, small_grid):
        run = run_coevolution(target, ctx, small_grid, box,
                              GaConfig(population_size=10, crossover_prob=0.0,
                                       mutation_prob=0.0),
                              NeuroConfig(population_size=3),
                              InjectionConfig(inject_fraction=0.1), 4, seed=4)
        hist = build_ga_history_dataset(run)
        thetas = [tuple(theta.as_array()) for _, theta in hist]
        assert len(thetas) > len(set(thetas))  # elites persist across generations

    def test_all_params_in_box(self, box, ctx, target, small_grid):
        run = run_coevolution(target, ctx, small_grid, box, GaConfig(population_size=12),
                              NeuroConfig(population_size=3), InjectionConfig(), 3, seed=5)
        for _, theta in build_ga_history_dataset(run):
            assert box.contains(theta)


class TestSplit:
    def test_seven_three(self):
        data = list(range(10))
        train, val = split(data, 0.7, np.random.default_rng(6))
        assert len(train) == 7 and len(val) == 3

    def test_degenerate_single_point_warns(self):
        with pytest.warns(UserWarning):
            train, val = split([1], 0.7, np.random.default_rng(7))
        assert train == [1] and val == []

    def test_partition(self):
        data = list(range(37))
        train, val = split(data, 0.7, np.random.default_rng(8))
        assert sorted(train + val) == data
        assert set(train).isdisjoint(val)

    def test_deterministic(self):
        data = list(range(20))
        a = split(data, 0.7, np.random.default_rng(9))
        b = split(data, 0.7, np.random.default_rng(9))
        assert a == b


class TestOverfittingExperiment:
    def test_identical_dataset_control(self, box, ctx, target, small_grid, quad):
        data = build_lhs_dataset(box, 40, ctx, small_grid, quad, np.random.default_rng(10))
        cfg = NeuroConfig()
        out1 = overfitting_experiment(target, box, ctx, small_grid, cfg, mode="lhs",
                                      seeded=True, budget_epochs=20, seed=11,
                                      dataset_override=data, heldout_size=30)
        out2 = overfitting_experiment(target, box, ctx, small_grid, cfg, mode="ga_history",
                                      seeded=False, budget_epochs=20, seed=11,
                                      dataset_override=data, heldout_size=30,
                                      ga_cfg=GaConfig(population_size=8))
        assert out1.curve == out2.curve
        assert out1.heldout_mse == out2.heldout_mse

    def test_train_not_worse_than_val_in_median(self, box, ctx, small_grid, quad, draw_params):
        # over several seeds, median training MSE of a history-trained net
        # stays at or below its validation MSE
        diffs = []
        for seed in range(5):
            rng = np.random.default_rng(200 + seed)
            theta = draw_params(rng, box)
            target = price_surface(theta, ctx, small_grid, quad)
            out = overfitting_experiment(target, box, ctx, small_grid,
                                         NeuroConfig(), mode="ga_history", seeded=True,
                                         budget_epochs=60, seed=300 + seed,
                                         ga_cfg=GaConfig(population_size=20),
                                         history_generations=8, heldout_size=40)
            diffs.append(out.final_val_mse - out.final_train_mse)
        assert float(np.median(diffs)) >= 0.0

    def test_unknown_mode_rejected(self, box, ctx, target, small_grid):
        with pytest.raises(ValueError):
            overfitting_experiment(target, box, ctx, small_grid, NeuroConfig(),
                                   mode="bogus", seeded=True, budget_epochs=1, seed=0)
