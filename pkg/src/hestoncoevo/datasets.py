"""Training-set builders for the inverse networks and the overfitting
diagnostic comparing space-filling LHS data against optimizer-history data.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .baselines import run_plain_ga
from .coevo import CoevoState, InjectionConfig, run_coevolution
from .ga import GaConfig
from .mlp import AdamState, MlpGenome, NeuroConfig, NormalizationSpec, prediction_mse, train_epochs
from .params import MarketContext, ParamBox, sample_lhs, sample_uniform
from .pricing import PricingError, QuadratureSpec, SurfaceGrid, price_surface

log = logging.getLogger(__name__)


def build_lhs_dataset(box: ParamBox, n: int, ctx: MarketContext, grid: SurfaceGrid,
                      quad: QuadratureSpec, rng: np.random.Generator) -> list:
    """n LHS parameter draws paired with their model surfaces on the shared
    grid. Draws whose pricing fails are replaced by fresh uniform draws (the
    count is logged); with the default box this is essentially never hit."""
    if n == 0:
        return []
    samples = sample_lhs(box, n, rng)
    pairs = []
    resampled = 0
    for p in samples:
        while True:
            try:
                surf = price_surface(p, ctx, grid, quad)
                break
            except PricingError:
                resampled += 1
                p = sample_uniform(box, 1, rng)[0]
        pairs.append((surf.flatten(), p))
    if resampled:
        log.info("build_lhs_dataset: resampled %d unstable draw(s)", resampled)
    return pairs


def build_ga_history_dataset(run: CoevoState) -> list:
    """All per-generation elite (surface, params) increments of a completed
    run, concatenated in order. Duplicate elites that survived several
    generations are retained: this is a history, not a set."""
    pairs = []
    for increment in run.telemetry.increments:
        pairs.extend(increment)
    return pairs


def split(dataset: list, train_ratio: float, rng: np.random.Generator) -> tuple:
    """Uniform shuffle, then cut at ``ceil(train_ratio * n)``."""
    n = len(dataset)
    order = rng.permutation(n)
    cut = math.ceil(train_ratio * n)
    train = [dataset[i] for i in order[:cut]]
    val = [dataset[i] for i in order[cut:]]
    if n and not val:
        warnings.warn("validation split is empty", stacklevel=2)
    return train, val


@dataclass
class OverfitOutcome:
    """Learning curves and generalization summary for one (seeding, dataset)
    mode of the overfitting diagnostic.

    The validation curve is measured on the common held-out bed of fresh LHS
    surfaces, not on a split of the (possibly concentrated) training
    distribution: out-of-sample stability across held-out surfaces is the
    quantity the diagnostic is about, and it is the only validation measure
    comparable between the two dataset modes. The 7:3 train ratio still
    governs which pairs are trained on.
    """

    mode: str                       # "lhs" or "ga_history"
    seeded: bool
    dataset_size: int
    curve: list                     # (train_mse, heldout_val_mse) per epoch
    final_train_mse: float
    final_val_mse: float            # final held-out MSE
    generalization_gap: float       # held-out val - train
    heldout_mse: float              # same bed as the val curve, final epoch
    curve_rows: list = field(default_factory=list)


def _train_fixed_net(dataset, heldout, box, cfg: NeuroConfig, epochs: int,
                     arch, activation, seed) -> tuple:
    """Train one fixed-architecture net on a dataset, tracking held-out MSE
    per epoch; returns (curve, heldout_mse)."""
    rng = np.random.default_rng(seed)
    norm = NormalizationSpec.fit(np.asarray([s for s, _ in dataset]))
    net = MlpGenome.create(len(dataset[0][0]), arch, activation, rng)
    adam = AdamState.for_net(net)
    curve = train_epochs(net, adam, dataset, cfg, rng, norm, box, epochs=epochs,
                         val_dataset=heldout)
    heldout_mse = prediction_mse(net, heldout, norm, box)
    return curve, heldout_mse


def overfitting_experiment(target, box: ParamBox, ctx: MarketContext, grid: SurfaceGrid,
                           nn_cfg: NeuroConfig, mode: str, seeded: bool,
                           budget_epochs: int, seed,
                           quad: QuadratureSpec = QuadratureSpec(),
                           ga_cfg: GaConfig | None = None,
                           inj_cfg: InjectionConfig | None = None,
                           history_generations: int = 40,
                           lhs_size: int = 2000,
                           heldout_size: int = 300,
                           arch=(128, 64), activation: str = "relu",
                           dataset_override: list | None = None) -> OverfitOutcome:
    """One cell of the 2x2 diagnostic: train a matched-architecture network
    under a fixed epoch budget on either an LHS dataset or the GA-history
    dataset of a run against ``target``, then measure generalization on fresh
    LHS surfaces.

    ``seeded`` selects whether the history-producing run uses network seeding
    (the full loop) or a plain GA; it does not change the LHS dataset beyond
    stream derivation. ``dataset_override`` bypasses dataset construction so
    both modes can be forced onto identical data as a control.
    """
    if mode not in ("lhs", "ga_history"):
        raise ValueError(f"unknown mode {mode!r}")
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    data_seq, run_seq, train_seq, held_seq = ss.spawn(4)

    if dataset_override is not None:
        dataset = list(dataset_override)
    elif mode == "lhs":
        dataset = build_lhs_dataset(box, lhs_size, ctx, grid, quad,
                                    np.random.default_rng(data_seq))
    else:
        if ga_cfg is None:
            ga_cfg = GaConfig()
        if seeded:
            run = run_coevolution(target, ctx, grid, box, ga_cfg, nn_cfg,
                                  inj_cfg or InjectionConfig(), history_generations,
                                  run_seq, quad=quad)
        else:
            run = run_plain_ga(target, ctx, grid, box, ga_cfg, history_generations,
                               run_seq, quad=quad, collect_history=True)
        dataset = build_ga_history_dataset(run)
    if not dataset:
        raise ValueError("dataset construction produced no pairs")

    heldout = build_lhs_dataset(box, heldout_size, ctx, grid, quad,
                                np.random.default_rng(held_seq))
    curve, heldout_mse = _train_fixed_net(dataset, heldout, box, nn_cfg,
                                          budget_epochs, arch, activation, train_seq)
    final_train, final_val = curve[-1]
    rows = [{"mode": mode, "seeded": seeded, "epoch": ep, "train_mse": tr, "val_mse": va}
            for ep, (tr, va) in enumerate(curve)]
    return OverfitOutcome(mode=mode, seeded=seeded, dataset_size=len(dataset),
                          curve=curve, final_train_mse=final_train,
                          final_val_mse=final_val,
                          generalization_gap=final_val - final_train,
                          heldout_mse=heldout_mse, curve_rows=rows)
