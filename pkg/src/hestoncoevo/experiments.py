"""Experiment drivers behind the CLI: each produces tidy CSVs (plus a JSON
sidecar of the fully resolved configuration) that any plotting tool can
consume. All runs are deterministic under a seed; multi-trial experiments
derive one child random stream per trial from the root seed, so results do
not depend on scheduling.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import LbfgsConfig, run_lbfgs, run_plain_ga, time_to_threshold
from .coevo import InjectionConfig, best_mse_per_generation, run_coevolution
from .datasets import build_ga_history_dataset, build_lhs_dataset, overfitting_experiment
from .ga import GaConfig
from .market import (RateCurve, assemble_target, load_chain, nn_input_from_scatter,
                     save_target_manifest)
from .mlp import (AdamState, MlpGenome, NeuroConfig, NormalizationSpec, forward,
                  train_epochs)
from .params import PARAM_NAMES, HestonParams, MarketContext, ParamBox, sample_uniform
from .pricing import QuadratureSpec, SurfaceGrid, default_grid, price_surface

ARCH_STATS_HEADER = ["Generation", "Avg layers", "Avg nodes", "Std nodes",
                     "Min nodes", "Max nodes", "Most common arch.", "Frequency",
                     "Primary act.", "Act. div."]
SAMPLES_HEADER = ["Generation", "NN ID", "Architecture", "Num layers",
                  "Total nodes", "Activation"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in fieldnames])


def write_sidecar(path, settings: dict) -> None:
    with open(path, "w") as f:
        json.dump(settings, f, indent=1, sort_keys=True, default=str)


@dataclass
class ExperimentSettings:
    """Fully resolved run settings; precedence is CLI flags over config file
    over built-in defaults."""

    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    generations: int = 10
    grid_strikes: int = 8
    grid_maturities: int = 5
    spot: float = 100.0
    ga: GaConfig = field(default_factory=GaConfig)
    neuro: NeuroConfig = field(default_factory=NeuroConfig)
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    box: ParamBox = field(default_factory=ParamBox.default)

    def grid(self, spot: float | None = None) -> SurfaceGrid:
        return default_grid(self.spot if spot is None else spot,
                            self.grid_strikes, self.grid_maturities)

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "out_dir": self.out_dir, "threads": self.threads,
             "generations": self.generations,
             "grid": f"{self.grid_strikes}x{self.grid_maturities}",
             "spot": self.spot,
             "ga": asdict(self.ga), "neuro": asdict(self.neuro),
             "injection": asdict(self.injection), "lbfgs": asdict(self.lbfgs),
             "quadrature": asdict(self.quad),
             "box": {n: [lo, hi] for n, lo, hi in zip(
                 ("kappa", "lambda", "sigma", "rho", "v0"),
                 self.box.lower_array(), self.box.upper_array())}}
        return d


_CFG_SECTIONS = {"ga": ("ga", GaConfig), "neuroevolution": ("neuro", NeuroConfig),
                 "injection": ("injection", InjectionConfig),
                 "lbfgs": ("lbfgs", LbfgsConfig),
                 "quadrature": ("quad", QuadratureSpec)}


def apply_config_file(settings: ExperimentSettings, path) -> ExperimentSettings:
    """Overlay a plain-text key=value config (sections [ga], [neuroevolution],
    [injection], [lbfgs], [quadrature], [run]) onto the settings."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    for section, (attr, cls) in _CFG_SECTIONS.items():
        if not parser.has_section(section):
            continue
        current = getattr(settings, attr)
        kwargs = {f: getattr(current, f) for f in current.__dataclass_fields__}
        for key, raw in parser.items(section):
            if key not in kwargs:
                raise ValueError(f"unknown key {key!r} in section [{section}] of {path}")
            old = kwargs[key]
            if isinstance(old, bool):
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(old, int):
                kwargs[key] = int(raw)
            elif isinstance(old, float):
                kwargs[key] = float(raw)
            elif isinstance(old, tuple):
                kwargs[key] = tuple(int(x) for x in raw.replace("[", "").replace("]", "").split(","))
            else:
                kwargs[key] = raw.strip()
        setattr(settings, attr, cls(**kwargs))
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key == "seed":
                settings.seed = int(raw)
            elif key == "generations":
                settings.generations = int(raw)
            elif key == "spot":
                settings.spot = float(raw)
            elif key == "grid":
                ks, ts = raw.lower().split("x")
                settings.grid_strikes, settings.grid_maturities = int(ks), int(ts)
            elif key == "threads":
                settings.threads = int(raw)
            else:
                raise ValueError(f"unknown key {key!r} in section [run] of {path}")
    return settings


def load_params_file(path) -> HestonParams:
    values = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key = key.strip().lower()
            if key == "lambda":
                key = "lam"
            if key not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {key!r} in {path}")
            values[key] = float(val)
    missing = [n for n in PARAM_NAMES if n not in values]
    if missing:
        raise ValueError(f"params file {path} is missing: {missing}")
    return HestonParams(**values)


def synthetic_scenario(settings: ExperimentSettings, seq: np.random.SeedSequence):
    """Draw a ground truth, a flat rate in [0, 0.10], and price the target
    surface; returns (theta_star, ctx, grid, target)."""
    rng = np.random.default_rng(seq)
    theta = sample_uniform(settings.box, 1, rng)[0]
    rate = rng.uniform(0.0, 0.10)
    ctx = MarketContext(spot=settings.spot, rate=rate)
    grid = settings.grid()
    target = price_surface(theta, ctx, grid, settings.quad)
    return theta, ctx, grid, target


def cmd_price(settings: ExperimentSettings, params_path=None) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    theta = (load_params_file(params_path) if params_path
             else settings.box.midpoint())
    rng = np.random.default_rng(np.random.SeedSequence(settings.seed))
    rate = rng.uniform(0.0, 0.10)
    ctx = MarketContext(spot=settings.spot, rate=rate)
    grid = settings.grid()
    surface = price_surface(theta, ctx, grid, settings.quad)
    csv_path = os.path.join(settings.out_dir, "surface.csv")
    json_path = os.path.join(settings.out_dir, "surface.json")
    surface.to_csv(csv_path)
    surface.to_json(json_path)
    sidecar = settings.to_dict()
    sidecar["params"] = theta.as_dict()
    sidecar["rate"] = rate
    write_sidecar(os.path.join(settings.out_dir, "price_config.json"), sidecar)
    return {"surface_csv": csv_path, "surface_json": json_path}


def _convergence_trial(args):
    settings, trial_id, child_seq = args
    theta, ctx, grid, target = synthetic_scenario(settings, child_seq)
    run_seqs = child_seq.spawn(2)
    plain = run_plain_ga(target, ctx, grid, settings.box, settings.ga,
                         settings.generations, run_seqs[0], quad=settings.quad)
    coevo = run_coevolution(target, ctx, grid, settings.box, settings.ga,
                            settings.neuro, settings.injection,
                            settings.generations, run_seqs[1], quad=settings.quad)
    rows = []
    for method, state in (("plain_ga", plain), ("coevo", coevo)):
        best = math.inf
        for row in state.telemetry.ga_rows:
            best = min(best, row["best_mse"])
            rows.append({"trial": trial_id, "method": method,
                         "generation": row["generation"],
                         "best_rmse": math.sqrt(best)})
    return rows


def _run_trials(fn, arg_list, threads: int) -> list:
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, arg_list))
    return [fn(a) for a in arg_list]


def cmd_convergence(settings: ExperimentSettings, trials: int = 1) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    children = np.random.SeedSequence(settings.seed).spawn(trials)
    results = _run_trials(_convergence_trial,
                          [(settings, i, children[i]) for i in range(trials)],
                          settings.threads)
    rows = [r for trial_rows in results for r in trial_rows]
    path = os.path.join(settings.out_dir, "convergence.csv")
    write_csv(path, ["trial", "method", "generation", "best_rmse"], rows)
    sidecar = settings.to_dict()
    sidecar["trials"] = trials
    write_sidecar(os.path.join(settings.out_dir, "convergence_config.json"), sidecar)
    return {"convergence_csv": path}


def _ttt_trial(args):
    settings, trial_id, child_seq, max_generations = args
    theta, ctx, grid, target = synthetic_scenario(settings, child_seq)
    lb = run_lbfgs(target, ctx, settings.box.midpoint(), settings.box,
                   settings.lbfgs, settings.quad)
    run_seq = child_seq.spawn(1)[0]
    state = run_coevolution(target, ctx, grid, settings.box, settings.ga,
                            settings.neuro, settings.injection, max_generations,
                            run_seq, quad=settings.quad)
    g = time_to_threshold(best_mse_per_generation(state), lb.final_mse)
    return {"trial_id": trial_id, "lbfgs_mse": lb.final_mse,
            "lbfgs_iters": lb.iters,
            "ttt_generation": g if g is not None else "NA",
            "lbfgs_start_mse": lb.start_mse}


def cmd_ttt(settings: ExperimentSettings, trials: int = 5,
            max_generations: int | None = None) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    if max_generations is None:
        max_generations = settings.generations
    children = np.random.SeedSequence(settings.seed).spawn(trials)
    rows = _run_trials(_ttt_trial,
                       [(settings, i, children[i], max_generations) for i in range(trials)],
                       settings.threads)
    path = os.path.join(settings.out_dir, "ttt.csv")
    write_csv(path, ["trial_id", "lbfgs_mse", "lbfgs_iters", "ttt_generation",
                     "lbfgs_start_mse"], rows)
    sidecar = settings.to_dict()
    sidecar.update({"trials": trials, "max_generations": max_generations})
    write_sidecar(os.path.join(settings.out_dir, "ttt_config.json"), sidecar)
    return {"ttt_csv": path}


def _overfit_cell(args):
    settings, seed_seq, mode, seeded, budget, lhs_size, history_generations = args
    theta, ctx, grid, target = synthetic_scenario(settings, seed_seq)
    out = overfitting_experiment(target, settings.box, ctx, grid, settings.neuro,
                                 mode=mode, seeded=seeded, budget_epochs=budget,
                                 seed=seed_seq.spawn(1)[0], quad=settings.quad,
                                 ga_cfg=settings.ga, inj_cfg=settings.injection,
                                 history_generations=history_generations,
                                 lhs_size=lhs_size)
    return out


def cmd_overfit(settings: ExperimentSettings, seeds: int = 1, budget_epochs: int = 150,
                lhs_size: int = 2000, history_generations: int = 40) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    children = np.random.SeedSequence(settings.seed).spawn(seeds)
    modes = [("lhs", True), ("lhs", False), ("ga_history", True), ("ga_history", False)]
    curve_rows, summary_rows = [], []
    arg_list = []
    for s in range(seeds):
        for mode, seeded in modes:
            arg_list.append((settings, children[s], mode, seeded, budget_epochs,
                             lhs_size, history_generations))
    outcomes = _run_trials(_overfit_cell, arg_list, settings.threads)
    for (s, (mode, seeded)), out in zip(
            ((s, m) for s in range(seeds) for m in modes), outcomes):
        for row in out.curve_rows:
            curve_rows.append({"seed_index": s, **row})
        summary_rows.append({"seed_index": s, "mode": mode, "seeded": seeded,
                             "dataset_size": out.dataset_size,
                             "final_train_mse": out.final_train_mse,
                             "final_val_mse": out.final_val_mse,
                             "generalization_gap": out.generalization_gap,
                             "heldout_mse": out.heldout_mse})
    curves_path = os.path.join(settings.out_dir, "learning_curves.csv")
    write_csv(curves_path, ["seed_index", "mode", "seeded", "epoch",
                            "train_mse", "val_mse"], curve_rows)
    summary_path = os.path.join(settings.out_dir, "overfit_summary.csv")
    write_csv(summary_path, ["seed_index", "mode", "seeded", "dataset_size",
                             "final_train_mse", "final_val_mse",
                             "generalization_gap", "heldout_mse"], summary_rows)
    sidecar = settings.to_dict()
    sidecar.update({"seeds": seeds, "budget_epochs": budget_epochs,
                    "lhs_size": lhs_size, "history_generations": history_generations})
    write_sidecar(os.path.join(settings.out_dir, "overfit_config.json"), sidecar)
    return {"learning_curves_csv": curves_path, "summary_csv": summary_path}


def cmd_archstats(settings: ExperimentSettings, checkpoints=(20, 40, 60, 80, 100),
                  samples_per_checkpoint: int = 5) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    checkpoints = tuple(sorted(checkpoints))
    generations = max(checkpoints)
    root = np.random.SeedSequence(settings.seed)
    scen_seq, run_seq, sample_seq = root.spawn(3)
    theta, ctx, grid, target = synthetic_scenario(settings, scen_seq)

    # Pull the population snapshot at each checkpoint via telemetry.
    snapshots = {}

    state = run_coevolution(target, ctx, grid, settings.box, settings.ga,
                            settings.neuro, settings.injection, generations,
                            run_seq, quad=settings.quad,
                            arch_checkpoints=checkpoints,
                            curve_checkpoints=checkpoints,
                            net_snapshot_hook=lambda g, nets:
                                snapshots.__setitem__(g, [m.genome.clone() for m in nets])
                                if g in checkpoints else None)

    stats_rows = []
    for row in state.telemetry.arch_rows:
        stats_rows.append({
            "Generation": row["generation"],
            "Avg layers": row["avg_layers"],
            "Avg nodes": row["avg_nodes"],
            "Std nodes": row["std_nodes"],
            "Min nodes": row["min_nodes"],
            "Max nodes": row["max_nodes"],
            "Most common arch.": row["most_common_arch"],
            "Frequency": row["frequency"],
            "Primary act.": row["primary_activation"],
            "Act. div.": row["activation_diversity"],
        })
    stats_path = os.path.join(settings.out_dir, "arch_stats.csv")
    write_csv(stats_path, ARCH_STATS_HEADER, stats_rows)

    sample_rng = np.random.default_rng(sample_seq)
    sample_rows = []
    for g in checkpoints:
        genomes = snapshots.get(g, [])
        if not genomes:
            continue
        picks = sample_rng.choice(len(genomes), size=min(samples_per_checkpoint,
                                                         len(genomes)), replace=False)
        for rank, idx in enumerate(sorted(int(i) for i in picks), start=1):
            gnm = genomes[idx]
            sample_rows.append({
                "Generation": g,
                "NN ID": f"NN-{rank}",
                "Architecture": "[" + ",".join(str(w) for w in gnm.widths) + "]",
                "Num layers": gnm.n_hidden_layers,
                "Total nodes": gnm.total_nodes,
                "Activation": gnm.activation,
            })
    samples_path = os.path.join(settings.out_dir, "samples.csv")
    write_csv(samples_path, SAMPLES_HEADER, sample_rows)

    curves_path = os.path.join(settings.out_dir, "learning_curves.csv")
    write_csv(curves_path, ["generation", "epoch", "train_mse", "val_mse", "net_id"],
              state.telemetry.curve_rows)
    sidecar = settings.to_dict()
    sidecar["checkpoints"] = list(checkpoints)
    write_sidecar(os.path.join(settings.out_dir, "archstats_config.json"), sidecar)
    return {"arch_stats_csv": stats_path, "samples_csv": samples_path,
            "learning_curves_csv": curves_path}


def cmd_calibrate_real(settings: ExperimentSettings, chain_path, spot: float,
                       rates_path=None, truth_path=None,
                       checkpoints=(20, 40, 60, 80, 100),
                       maturity_days=(3, 255), moneyness=(-3.31, 0.774),
                       lhs_size: int = 400, slice_train_epochs: int = 150) -> dict:
    os.makedirs(settings.out_dir, exist_ok=True)
    curve = RateCurve.load_csv(rates_path) if rates_path else RateCurve.default()
    quotes = load_chain(chain_path, spot, maturity_days=maturity_days,
                        moneyness=moneyness)
    target, ctx = assemble_target(quotes, spot, curve)
    truth = load_params_file(truth_path) if truth_path else None

    # The fixed-width network input interpolates the scattered quotes onto a
    # rectangular grid; building that grid inside the observed quote envelope
    # keeps the interpolation away from nearest-neighbour extrapolation.
    log_m = np.log(np.asarray(target.strikes) / spot)
    grid = default_grid(spot, settings.grid_strikes, settings.grid_maturities,
                        moneyness=(float(log_m.min()), float(log_m.max())),
                        maturity_span=(float(target.taus.min()), float(target.taus.max())))
    nn_input = nn_input_from_scatter(target, grid)
    checkpoints = tuple(sorted(c for c in checkpoints if c <= settings.generations)) \
        or (settings.generations,)
    root = np.random.SeedSequence(settings.seed)
    run_seq, lhs_seq, train_seq = root.spawn(3)
    state = run_coevolution(target, ctx, grid, settings.box, settings.ga,
                            settings.neuro, settings.injection,
                            settings.generations, run_seq, quad=settings.quad,
                            nn_input=nn_input)

    rows = []
    best = math.inf
    best_params = None
    by_gen = {}
    for row in state.telemetry.ga_rows:
        if row["best_mse"] < best:
            best = row["best_mse"]
            best_params = HestonParams(row["kappa"], row["lambda"], row["sigma"],
                                       row["rho"], row["v0"])
        by_gen[row["generation"]] = (best, best_params)
    for g in checkpoints:
        mse, params = by_gen[g]
        row = {"generation": g, "loss": mse}
        if truth is not None and params is not None:
            true_arr = truth.as_array()
            est_arr = params.as_array()
            for name, t, e in zip(("kappa", "lambda", "sigma", "rho", "v0"),
                                  true_arr, est_arr):
                row[f"{name}_rel_err_pct"] = abs(e - t) / abs(t) * 100.0
        rows.append(row)
    fields = ["generation", "loss"]
    if truth is not None:
        fields += [f"{n}_rel_err_pct" for n in ("kappa", "lambda", "sigma", "rho", "v0")]
    progress_path = os.path.join(settings.out_dir, "progress.csv")
    write_csv(progress_path, fields, rows)

    # Strike slice: inverse nets trained on GA history vs fresh LHS data, both
    # predicting from the same interpolated target input.
    history = build_ga_history_dataset(state)
    lhs_data = build_lhs_dataset(settings.box, lhs_size, ctx, grid, settings.quad,
                                 np.random.default_rng(lhs_seq))
    slice_rows = []
    if history:
        train_children = train_seq.spawn(2)
        model_params = {}
        for name, data, child in (("ga_history", history, train_children[0]),
                                  ("lhs", lhs_data, train_children[1])):
            rng = np.random.default_rng(child)
            norm = NormalizationSpec.fit(np.asarray([s for s, _ in data]))
            net = MlpGenome.create(len(nn_input), settings.neuro.initial_widths,
                                   settings.neuro.initial_activation, rng)
            adam = AdamState.for_net(net)
            train_epochs(net, adam, data, settings.neuro, rng, norm, settings.box,
                         epochs=slice_train_epochs)
            model_params[name] = forward(net, nn_input, norm, settings.box)
        taus = np.asarray(target.taus)
        uniq_taus = np.unique(taus)
        slice_tau = float(uniq_taus[np.argmin(np.abs(uniq_taus - np.median(uniq_taus)))])
        mask = np.isclose(taus, slice_tau)
        ks = np.asarray(target.strikes)[mask]
        order = np.argsort(ks)
        from .pricing import price_cells
        model_prices = {name: price_cells(p, ctx, ks[order],
                                          np.full(mask.sum(), slice_tau), settings.quad)
                        for name, p in model_params.items()}
        market = np.asarray(target.prices)[mask][order]
        for i, k in enumerate(ks[order]):
            slice_rows.append({"strike": float(k), "tau": slice_tau,
                               "market": float(market[i]),
                               "ga_history_model": float(model_prices["ga_history"][i]),
                               "lhs_model": float(model_prices["lhs"][i])})
    slice_path = os.path.join(settings.out_dir, "slice.csv")
    write_csv(slice_path, ["strike", "tau", "market", "ga_history_model", "lhs_model"],
              slice_rows)

    save_target_manifest(target, spot, os.path.join(settings.out_dir, "target_manifest.json"))
    sidecar = settings.to_dict()
    sidecar.update({"chain": str(chain_path), "spot": spot,
                    "checkpoints": list(checkpoints),
                    "maturity_days": list(maturity_days),
                    "moneyness": list(moneyness), "n_quotes": len(quotes),
                    "n_cells": int(target.size)})
    write_sidecar(os.path.join(settings.out_dir, "calibrate_real_config.json"), sidecar)
    return {"progress_csv": progress_path, "slice_csv": slice_path,
            "final_loss": best, "best_params": best_params}
