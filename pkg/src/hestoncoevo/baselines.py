"""Reference calibrators: a plain GA (no network seeding) and a projected
L-BFGS local optimizer with finite-difference gradients, plus the
time-to-threshold harness that compares the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coevo import CoevoState, InjectionConfig, run_coevolution
from .ga import GaConfig, calibration_loss
from .mlp import NeuroConfig
from .params import HestonParams, MarketContext, ParamBox, clamp
from .pricing import QuadratureSpec, SurfaceGrid


def run_plain_ga(target, ctx: MarketContext, grid: SurfaceGrid, box: ParamBox,
                 ga_cfg: GaConfig, generations: int, seed,
                 quad: QuadratureSpec = QuadratureSpec(),
                 collect_history: bool = False) -> CoevoState:
    """Plain elitist GA baseline: the co-evolution driver with every network
    phase disabled, so a matching seed reproduces the coevolutionary run's GA
    trajectory exactly up to the first injection. Telemetry schema is shared.

    ``collect_history=True`` still prices elite surfaces each generation so
    the optimizer-history dataset of an unseeded run can be assembled.
    """
    # The network/injection configs are never consulted with nn_enabled=False.
    return run_coevolution(target, ctx, grid, box, ga_cfg, NeuroConfig(), InjectionConfig(),
                           generations, seed, quad=quad, nn_enabled=False,
                           collect_history=collect_history)


@dataclass
class LbfgsConfig:
    max_iters: int = 200
    memory: int = 10
    fd_step: float = 1e-5          # relative to each parameter's box range
    c1: float = 1e-4               # Armijo constant
    c2: float = 0.9                # curvature threshold for history updates
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    max_halvings: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class LbfgsResult:
    params: HestonParams
    final_mse: float
    iters: int
    start_mse: float
    converged_on: str


def _fd_gradient(f, x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 steps: np.ndarray) -> np.ndarray:
    """Central finite differences with per-parameter steps; points are kept
    inside the box, so the stencil shrinks one-sidedly at active bounds.
    Degenerate (zero-range) dimensions get zero gradient."""
    g = np.zeros_like(x)
    for i in range(len(x)):
        h = steps[i]
        if h == 0.0:
            continue
        x_hi = min(x[i] + h, hi[i])
        x_lo = max(x[i] - h, lo[i])
        if x_hi <= x_lo:
            continue
        xp = x.copy(); xp[i] = x_hi
        xm = x.copy(); xm[i] = x_lo
        fp, fm = f(xp), f(xm)
        if math.isfinite(fp) and math.isfinite(fm):
            g[i] = (fp - fm) / (x_hi - x_lo)
    return g


def run_lbfgs(target, ctx: MarketContext, start: HestonParams, box: ParamBox,
              cfg: LbfgsConfig = LbfgsConfig(),
              quad: QuadratureSpec = QuadratureSpec()) -> LbfgsResult:
    """Box-constrained L-BFGS on the surface-misfit MSE.

    Two-loop recursion builds the search direction; a backtracking line
    search enforces the projected Armijo condition (the iterate is clamped
    into the box after every trial step); curvature pairs are only stored
    when they keep the implicit Hessian positive. Pricing failures during the
    line search reject the trial step and halve it; if every trial fails the
    run terminates at the current iterate.
    """
    lo, hi = box.lower_array(), box.upper_array()
    ranges = box.ranges()
    steps = cfg.fd_step * ranges

    def f(x: np.ndarray) -> float:
        return calibration_loss(HestonParams.from_array(x), target, ctx, quad)

    x = clamp(start, box).as_array()
    fx = f(x)
    start_mse = fx
    s_hist: list = []
    y_hist: list = []
    rho_hist: list = []
    g = _fd_gradient(f, x, lo, hi, steps)
    n_iters = 0
    reason = "max_iters"

    for _ in range(cfg.max_iters):
        if np.linalg.norm(g) < cfg.grad_tol:
            reason = "grad_tol"
            break
        # Two-loop recursion.
        q = g.copy()
        alpha_stack = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alpha_stack.append((a, s, y, rho))
            q -= a * y
        if y_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        for a, s, y, rho in reversed(alpha_stack):
            b = rho * (y @ q)
            q += (a - b) * s
        direction = -q

        if direction @ g >= 0:
            direction = -g  # fall back to steepest descent on a bad pair

        alpha = 1.0
        accepted = False
        x_new = x
        f_new = fx
        for _ in range(cfg.max_halvings):
            cand = np.clip(x + alpha * direction, lo, hi)
            fc = f(cand)
            if math.isfinite(fc) and fc <= fx + cfg.c1 * (g @ (cand - x)):
                x_new, f_new, accepted = cand, fc, True
                break
            alpha *= 0.5
        if not accepted:
            reason = "line_search_failed"
            break

        step = x_new - x
        if np.linalg.norm(step) < cfg.step_tol:
            x, fx = x_new, f_new
            n_iters += 1
            reason = "step_tol"
            break
        g_new = _fd_gradient(f, x_new, lo, hi, steps)
        y_vec = g_new - g
        sy = step @ y_vec
        curvature_ok = abs(g_new @ direction) <= cfg.c2 * abs(g @ direction)
        if sy > 1e-12 and curvature_ok:
            s_hist.append(step)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0); y_hist.pop(0); rho_hist.pop(0)
        x, fx, g = x_new, f_new, g_new
        n_iters += 1

    final = clamp(HestonParams.from_array(x), box)
    return LbfgsResult(final, fx, n_iters, start_mse, reason)


def time_to_threshold(best_mse_per_gen, reference_mse: float):
    """First 1-based generation whose best-so-far MSE is no worse than the
    reference; None when the budget never reaches it."""
    best = math.inf
    for g, mse in enumerate(best_mse_per_gen, start=1):
        best = min(best, mse)
        if best <= reference_mse:
            return g
    return None
