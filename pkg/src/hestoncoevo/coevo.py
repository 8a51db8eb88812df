"""The closed feedback loop between the parameter GA and the inverse-network
population.

Per generation: GA elites are priced into (surface, params) training pairs
appended to a growing dataset; every network trains a few epochs on the
cumulative data plus a short burst on the newest increment; networks are
scored both by surrogate prediction error on the increment and by directly
pricing their prediction against the target; the network population evolves;
the best networks' predictions (plus exploration noise) replace the worst GA
individuals; and the GA takes its elitist step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import ga as ga_mod
from .ga import GaConfig, GaIndividual, GaState, calibration_loss, select_elites
from .mlp import (AdamState, MlpGenome, NeuroConfig, NormalizationSpec, TrainingDiverged,
                  _dataset_arrays as _pairs_to_arrays, architecture_stats, forward,
                  hybrid_crossover, mutate_architecture, mutate_weights, prediction_mse,
                  train_epochs, weight_crossover)
from .params import HestonParams, MarketContext, ParamBox, clamp
from .pricing import PricingError, QuadratureSpec, SurfaceGrid, price_surface

log = logging.getLogger(__name__)


@dataclass
class InjectionConfig:
    inject_fraction: float = 0.2
    inject_noise_std: float = 0.01  # fraction of each parameter's box range


@dataclass
class NetMember:
    """A network plus its optimizer state and latest scores."""

    genome: MlpGenome
    adam: AdamState
    net_id: int
    surrogate_mse: float = math.nan
    direct_score: float = math.inf
    prediction: HestonParams | None = None

    def sort_key(self):
        # Selection is on the direct calibration score with the surrogate
        # loss as tie-breaker; ids keep exact ties deterministic.
        surr = self.surrogate_mse if math.isfinite(self.surrogate_mse) else math.inf
        return (self.direct_score, surr, self.net_id)


@dataclass
class CoevoTelemetry:
    ga_rows: list = field(default_factory=list)
    nn_rows: list = field(default_factory=list)
    arch_rows: list = field(default_factory=list)
    curve_rows: list = field(default_factory=list)
    dataset_rows: list = field(default_factory=list)
    increments: list = field(default_factory=list)   # per-generation elite pairs


@dataclass
class CoevoState:
    ga: GaState
    nets: list
    cumulative_dataset: list
    generation: int
    norm: NormalizationSpec | None
    telemetry: CoevoTelemetry
    next_net_id: int = 0


def build_elite_dataset(ga_pop: list, elite_fraction: float, ctx: MarketContext,
                        grid: SurfaceGrid, quad: QuadratureSpec) -> list:
    """Price each elite's model surface on the shared grid and pair the
    row-major flattened prices with the elite's parameters. Elites whose
    pricing fails are skipped (logged), so the increment can be smaller than
    the elite count."""
    pairs = []
    skipped = 0
    for ind in select_elites(ga_pop, elite_fraction):
        try:
            surf = price_surface(ind.params, ctx, grid, quad)
        except PricingError:
            skipped += 1
            continue
        pairs.append((surf.flatten(), ind.params))
    if skipped:
        log.info("build_elite_dataset: skipped %d unstable elite(s)", skipped)
    return pairs


def score_network(member: NetMember, target, nn_input: np.ndarray, increment: list,
                  ctx: MarketContext, quad: QuadratureSpec, norm: NormalizationSpec,
                  box: ParamBox) -> None:
    """Update a member's surrogate MSE (on the increment, unit-cube
    coordinates) and direct calibration score (pricing its prediction against
    the target with the same loss as GA individuals). An empty increment
    leaves the previous surrogate in place."""
    if increment:
        member.surrogate_mse = prediction_mse(member.genome, increment, norm, box)
    member.prediction = forward(member.genome, nn_input, norm, box)
    member.direct_score = calibration_loss(member.prediction, target, ctx, quad)


def init_networks(input_dim: int, cfg: NeuroConfig, rng: np.random.Generator,
                  start_id: int = 0) -> list:
    nets = []
    for i in range(cfg.population_size):
        genome = MlpGenome.create(input_dim, cfg.initial_widths, cfg.initial_activation, rng)
        nets.append(NetMember(genome, AdamState.for_net(genome), net_id=start_id + i))
    return nets


def evolve_networks(nets: list, cfg: NeuroConfig, rng: np.random.Generator,
                    next_id: int) -> tuple:
    """Keep the top survivors unchanged (scores and Adam state intact) and
    refill the population from survivor parents: weight crossover when the
    architectures match, hybrid crossover otherwise, then weight mutation and
    a possible structural mutation. Returns (new_nets, next_id)."""
    n_survive = math.ceil(cfg.survive_fraction * cfg.population_size)
    ranked = sorted(nets, key=NetMember.sort_key)
    survivors = ranked[:n_survive]
    new_nets = list(survivors)
    while len(new_nets) < cfg.population_size:
        i1, i2 = rng.integers(0, len(survivors), size=2)
        pa, pb = survivors[i1].genome, survivors[i2].genome
        if pa.arch_key() == pb.arch_key():
            child = weight_crossover(pa, pb)
        else:
            child = hybrid_crossover(pa, pb, rng)
        child = mutate_weights(child, cfg.weight_mut_prob, cfg.weight_mut_std, rng)
        mutated = mutate_architecture(child, cfg, rng)
        new_nets.append(NetMember(mutated, AdamState.for_net(mutated), net_id=next_id))
        next_id += 1
    return new_nets, next_id


def inject_seeds(ga_pop: list, scored: list, inj: InjectionConfig, box: ParamBox,
                 rng: np.random.Generator, target, ctx: MarketContext,
                 quad: QuadratureSpec) -> list:
    """Replace the worst ``ceil(inject_fraction * N)`` GA individuals with
    noise-perturbed predictions from the best-scoring networks (cycling
    through the ranking when more seeds than networks are needed). Replaced
    individuals are re-evaluated immediately.

    ``scored`` must be the network members as scored this generation; members
    without a prediction are ignored.
    """
    usable = [m for m in sorted(scored, key=NetMember.sort_key) if m.prediction is not None]
    if not usable:
        return ga_pop
    k = math.ceil(inj.inject_fraction * len(ga_pop))
    ranges = box.ranges()
    worst_order = sorted(range(len(ga_pop)),
                         key=lambda i: (ga_pop[i].fitness, i), reverse=True)
    new_pop = list(ga_pop)
    for j in range(k):
        donor = usable[j % len(usable)]
        noise = rng.standard_normal(5) * inj.inject_noise_std * ranges
        seed = clamp(HestonParams.from_array(donor.prediction.as_array() + noise), box)
        ind = GaIndividual(seed)
        ga_mod.evaluate_individual(ind, target, ctx, quad)
        new_pop[worst_order[j]] = ind
    return new_pop


def _nn_telemetry(nets: list, generation: int) -> list:
    rows = []
    for m in sorted(nets, key=NetMember.sort_key):
        rows.append({"generation": generation, "net_id": m.net_id,
                     "direct_mse": m.direct_score,
                     "surrogate_mse": m.surrogate_mse,
                     "widths": "[" + ",".join(str(w) for w in m.genome.widths) + "]",
                     "activation": m.genome.activation})
    return rows


def run_coevolution(target, ctx: MarketContext, grid: SurfaceGrid, box: ParamBox,
                    ga_cfg: GaConfig, nn_cfg: NeuroConfig, inj_cfg: InjectionConfig,
                    generations: int, seed,
                    quad: QuadratureSpec = QuadratureSpec(),
                    nn_input: np.ndarray | None = None,
                    nn_enabled: bool = True,
                    collect_history: bool = True,
                    arch_checkpoints: tuple = (),
                    curve_checkpoints: tuple | None = None,
                    net_snapshot_hook=None,
                    ga_pop_hook=None) -> CoevoState:
    """Drive the full loop for ``generations`` generations.

    ``seed`` is an int or a ``numpy.random.SeedSequence``; the GA, the network
    machinery and the injection noise each get an independent child stream, so
    a run with ``nn_enabled=False`` follows the exact same GA trajectory as a
    plain GA run with the same seed.

    ``nn_input`` is the flattened surface shown to the inverse networks; it
    defaults to the target's own flattened prices and must be supplied for
    scattered (non-rectangular) targets.

    Telemetry rows are recorded per generation *after* evaluating the
    population and before the reproduction step, so row g describes the
    population produced by generation g-1's variation and injection.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ga_seq, nn_seq, inj_seq = ss.spawn(3)
    ga_rng = np.random.default_rng(ga_seq)
    nn_rng = np.random.default_rng(nn_seq)
    inj_rng = np.random.default_rng(inj_seq)

    if nn_input is None:
        nn_input = np.asarray(target.prices_flat, dtype=float).copy()
    else:
        nn_input = np.asarray(nn_input, dtype=float)

    state = CoevoState(
        ga=ga_mod.init_population(box, ga_cfg, ga_rng),
        nets=init_networks(len(nn_input), nn_cfg, nn_rng) if nn_enabled else [],
        cumulative_dataset=[],
        generation=0,
        norm=None,
        telemetry=CoevoTelemetry(),
        next_net_id=nn_cfg.population_size if nn_enabled else 0,
    )
    ga_mod.evaluate_population(state.ga, target, ctx, quad)

    # The cumulative dataset is converted to arrays once per generation and
    # shared by every network's training call.
    cum_x = cum_y = None

    for g in range(1, generations + 1):
        state.generation = g
        state.telemetry.ga_rows.append(ga_mod.telemetry_row(state.ga, generation=g))
        if ga_pop_hook is not None:
            ga_pop_hook(g, "evaluated", state.ga.individuals)

        if nn_enabled or collect_history:
            increment = build_elite_dataset(state.ga.individuals, ga_cfg.elite_fraction,
                                            ctx, grid, quad)
            state.cumulative_dataset.extend(increment)
            state.telemetry.increments.append(increment)
            state.telemetry.dataset_rows.append(
                {"generation": g, "increment": len(increment),
                 "cumulative": len(state.cumulative_dataset)})
        else:
            increment = []

        if nn_enabled and state.cumulative_dataset:
            if state.norm is None:
                state.norm = NormalizationSpec.fit(
                    np.asarray([s for s, _ in state.cumulative_dataset]))
            if increment:
                inc_x, inc_y = _pairs_to_arrays(increment, box)
                cum_x = inc_x if cum_x is None else np.concatenate([cum_x, inc_x])
                cum_y = inc_y if cum_y is None else np.concatenate([cum_y, inc_y])
                inc_arrays = (inc_x, inc_y)
            else:
                inc_arrays = []
            record_curves = curve_checkpoints is None or g in curve_checkpoints
            for m in state.nets:
                try:
                    curve = train_epochs(m.genome, m.adam, (cum_x, cum_y),
                                         nn_cfg, nn_rng, state.norm, box,
                                         epochs=nn_cfg.epochs_per_gen)
                    if increment and nn_cfg.feedback_epochs:
                        curve += train_epochs(m.genome, m.adam, inc_arrays, nn_cfg,
                                              nn_rng, state.norm, box,
                                              epochs=nn_cfg.feedback_epochs)
                except TrainingDiverged:
                    m.direct_score = math.inf
                    m.surrogate_mse = math.inf
                    m.prediction = None
                    continue
                if record_curves:
                    for ep, (tr, va) in enumerate(curve):
                        state.telemetry.curve_rows.append(
                            {"generation": g, "epoch": ep, "train_mse": tr,
                             "val_mse": va, "net_id": m.net_id})
                score_network(m, target, nn_input, inc_arrays, ctx, quad, state.norm, box)
            state.telemetry.nn_rows.extend(_nn_telemetry(state.nets, g))
            if not arch_checkpoints or g in arch_checkpoints:
                row = {"generation": g}
                row.update(architecture_stats([m.genome for m in state.nets]))
                state.telemetry.arch_rows.append(row)
            if net_snapshot_hook is not None:
                net_snapshot_hook(g, state.nets)

            scored = [m for m in state.nets if m.prediction is not None]
            state.nets, state.next_net_id = evolve_networks(state.nets, nn_cfg,
                                                            nn_rng, state.next_net_id)
            state.ga.individuals = inject_seeds(state.ga.individuals, scored, inj_cfg,
                                                box, inj_rng, target, ctx, quad)
            if ga_pop_hook is not None:
                ga_pop_hook(g, "post_injection", state.ga.individuals)

        ga_mod.step_generation(state.ga, ga_cfg, target, ctx, box, ga_rng, quad)

    return state


def best_mse_per_generation(state: CoevoState) -> list:
    """Best-so-far GA MSE sequence from recorded telemetry (1-based rows)."""
    best = math.inf
    out = []
    for row in state.telemetry.ga_rows:
        best = min(best, row["best_mse"])
        out.append(best)
    return out
