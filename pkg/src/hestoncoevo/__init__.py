"""Heston surface calibration with a co-evolutionary loop: a genetic algorithm
over model parameters paired with a population of evolving inverse networks
that learn to map option surfaces back to parameters and seed the search.
"""

from .baselines import LbfgsConfig, run_lbfgs, run_plain_ga, time_to_threshold
from .coevo import InjectionConfig, build_elite_dataset, inject_seeds, run_coevolution
from .datasets import build_ga_history_dataset, build_lhs_dataset, overfitting_experiment, split
from .ga import GaConfig, GaIndividual, calibration_loss, crossover, mutate, select_elites, step_generation
from .market import OptionQuote, RateCurve, assemble_target, load_chain
from .mlp import MlpGenome, NeuroConfig, NormalizationSpec, architecture_stats, forward, train_epochs
from .params import HestonParams, MarketContext, ParamBox, clamp, feller_satisfied, sample_lhs, sample_uniform
from .pricing import (PriceSurface, PricingError, QuadratureSpec, SurfaceGrid, call_price,
                      characteristic_fn, default_grid, mc_price_oracle, price_surface, put_price)

__all__ = [
    "HestonParams", "ParamBox", "MarketContext", "clamp", "feller_satisfied",
    "sample_uniform", "sample_lhs",
    "SurfaceGrid", "PriceSurface", "QuadratureSpec", "PricingError",
    "characteristic_fn", "call_price", "put_price", "price_surface",
    "mc_price_oracle", "default_grid",
    "GaConfig", "GaIndividual", "calibration_loss", "select_elites",
    "crossover", "mutate", "step_generation",
    "MlpGenome", "NeuroConfig", "NormalizationSpec", "forward", "train_epochs",
    "architecture_stats",
    "InjectionConfig", "build_elite_dataset", "inject_seeds", "run_coevolution",
    "run_plain_ga", "run_lbfgs", "LbfgsConfig", "time_to_threshold",
    "build_lhs_dataset", "build_ga_history_dataset", "split", "overfitting_experiment",
    "OptionQuote", "RateCurve", "load_chain", "assemble_target",
]

__version__ = "0.1.0"
