"""Elitist real-valued genetic algorithm over Heston parameters.

Fitness is the mean squared misfit between a candidate's model surface and the
target quotes. Variation is arithmetic crossover between elite parents plus
component-wise Gaussian mutation scaled by the box range, with every offspring
clamped back into the feasible box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import HestonParams, MarketContext, ParamBox, clamp, feller_satisfied, sample_lhs, sample_uniform
from .pricing import PricingError, QuadratureSpec, price_cells


@dataclass
class GaConfig:
    population_size: int = 50
    generations: int = 10
    elite_fraction: float = 0.2
    mutation_prob_per_param: float = 0.1   # per-component probability inside the mutation operator
    crossover_prob: float = 0.3            # probability an offspring is a parent blend
    mutation_prob: float = 0.2             # probability the mutation operator fires at all
    mutation_scale: float = 0.05           # Gaussian std as a fraction of each parameter's range
    lhs_init: bool = False

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 < self.elite_fraction < 1:
            raise ValueError("elite_fraction must be in (0, 1)")
        for name in ("mutation_prob_per_param", "crossover_prob", "mutation_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass
class GaIndividual:
    params: HestonParams
    fitness: float = math.inf   # +inf doubles as the unstable-pricing sentinel
    feller: bool = False


@dataclass
class GaState:
    individuals: list
    generation: int = 0

    def best(self) -> GaIndividual:
        return min(self.individuals, key=lambda ind: ind.fitness)


def calibration_loss(p: HestonParams, target, ctx: MarketContext,
                     quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Mean squared price misfit over the target cells; +inf when pricing
    fails so the search survives pathological candidates.

    ``target`` is anything exposing ``strikes_flat``, ``taus_flat`` and
    ``prices_flat`` (rectangular surfaces and scattered quote sets both do).
    """
    try:
        model = price_cells(p, ctx, target.strikes_flat, target.taus_flat, quad)
    except PricingError:
        return math.inf
    diff = model - target.prices_flat
    return float(np.mean(diff * diff))


def evaluate_individual(ind: GaIndividual, target, ctx, quad) -> None:
    ind.fitness = calibration_loss(ind.params, target, ctx, quad)
    ind.feller = feller_satisfied(ind.params)


def init_population(box: ParamBox, cfg: GaConfig, rng: np.random.Generator) -> GaState:
    sampler = sample_lhs if cfg.lhs_init else sample_uniform
    points = sampler(box, cfg.population_size, rng)
    return GaState([GaIndividual(p) for p in points], generation=0)


def evaluate_population(state: GaState, target, ctx, quad) -> None:
    for ind in state.individuals:
        evaluate_individual(ind, target, ctx, quad)


def select_elites(pop: list, elite_fraction: float) -> list:
    """Top ``ceil(elite_fraction * N)`` individuals by fitness, ties broken by
    earlier index, sorted ascending. Sentinel (+inf) individuals are only
    included when there are not enough finite ones."""
    if not pop:
        raise ValueError("population is empty")
    k = math.ceil(elite_fraction * len(pop))
    order = sorted(range(len(pop)), key=lambda i: (pop[i].fitness, i))
    return [pop[i] for i in order[:k]]


def crossover(p1: HestonParams, p2: HestonParams, box: ParamBox) -> HestonParams:
    """Arithmetic mean of the parents, clamped."""
    return clamp(HestonParams.from_array(0.5 * (p1.as_array() + p2.as_array())), box)


def mutate(p: HestonParams, box: ParamBox, prob_per_param: float, scale: float,
           rng: np.random.Generator) -> HestonParams:
    """Perturb each component independently with probability ``prob_per_param``
    by Gaussian noise with std ``scale * (upper - lower)``; clamp afterwards.

    The mask and noise draws are made unconditionally so the random stream
    does not depend on which components fire.
    """
    mask = rng.random(5) < prob_per_param
    noise = rng.standard_normal(5) * scale * box.ranges()
    return clamp(HestonParams.from_array(p.as_array() + mask * noise), box)


def step_generation(state: GaState, cfg: GaConfig, target, ctx: MarketContext,
                    box: ParamBox, rng: np.random.Generator,
                    quad: QuadratureSpec = QuadratureSpec()) -> GaState:
    """One elitist generation: copy elites, refill from elite parents via
    (optional) crossover then (optional) mutation, evaluate the offspring.

    Requires every current individual to carry a fitness (evaluated or
    sentinel). Returns the same state object, advanced in place.
    """
    pop = state.individuals
    elites = select_elites(pop, cfg.elite_fraction)
    new_pop = [GaIndividual(e.params, e.fitness, e.feller) for e in elites]
    while len(new_pop) < cfg.population_size:
        i1, i2 = rng.integers(0, len(elites), size=2)
        if rng.random() < cfg.crossover_prob:
            child = crossover(elites[i1].params, elites[i2].params, box)
        else:
            child = elites[i1].params
        if rng.random() < cfg.mutation_prob:
            child = mutate(child, box, cfg.mutation_prob_per_param, cfg.mutation_scale, rng)
        else:
            child = clamp(child, box)
        ind = GaIndividual(child)
        evaluate_individual(ind, target, ctx, quad)
        new_pop.append(ind)
    state.individuals = new_pop
    state.generation += 1
    return state


def telemetry_row(state: GaState, generation: int | None = None) -> dict:
    """Per-generation summary: best MSE/RMSE, mean RMSE over finite-fitness
    individuals, best parameters and its Feller flag."""
    best = state.best()
    finite = [ind.fitness for ind in state.individuals if math.isfinite(ind.fitness)]
    mean_rmse = float(np.mean(np.sqrt(finite))) if finite else math.inf
    g = state.generation if generation is None else generation
    row = {"generation": g,
           "best_mse": best.fitness,
           "best_rmse": math.sqrt(best.fitness) if math.isfinite(best.fitness) else math.inf,
           "mean_rmse": mean_rmse,
           "feller_flag": best.feller}
    row.update({k: float(v) for k, v in zip(("kappa", "lambda", "sigma", "rho", "v0"),
                                            best.params.as_array())})
    return row
