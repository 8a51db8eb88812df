"""Heston parameter vector, feasible box, constraint checks and samplers.

The calibration genome is the 5-vector (kappa, lam, sigma, rho, v0):

- kappa: mean-reversion speed of the variance process (1/years)
- lam:   long-run variance level
- sigma: volatility of variance ("vol of vol")
- rho:   correlation between price and variance shocks
- v0:    initial variance

Everything here is an immutable value type; all randomness flows through an
injected ``numpy.random.Generator`` so experiments replay exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

PARAM_NAMES = ("kappa", "lam", "sigma", "rho", "v0")

# Floor applied to lam and v0 at clamp time: the semi-analytical pricer divides
# by sigma^2 and degenerates when the variance process starts (or reverts to)
# exactly zero, so box lower bounds of 0 are nudged up.
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class HestonParams:
    """The five Heston parameters. Instances are plain values; feasibility is
    enforced by :func:`clamp`, not the constructor."""

    kappa: float
    lam: float
    sigma: float
    rho: float
    v0: float

    def as_array(self) -> np.ndarray:
        return np.array([self.kappa, self.lam, self.sigma, self.rho, self.v0])

    @staticmethod
    def from_array(a) -> "HestonParams":
        k, l, s, r, v = (float(x) for x in a)
        return HestonParams(k, l, s, r, v)

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "lambda": self.lam, "sigma": self.sigma,
                "rho": self.rho, "v0": self.v0}


@dataclass(frozen=True)
class ParamBox:
    """Component-wise feasibility box ``[lower, upper]`` for HestonParams.

    Degenerate boxes (lower == upper in some components) are allowed; they pin
    those components, which restricted optimization tests rely on.
    """

    lower: HestonParams
    upper: HestonParams

    def __post_init__(self):
        lo, hi = self.lower.as_array(), self.upper.as_array()
        if np.any(lo > hi):
            raise ValueError(f"box lower bound exceeds upper bound: {lo} vs {hi}")

    @staticmethod
    def default() -> "ParamBox":
        return ParamBox(
            lower=HestonParams(kappa=0.005, lam=0.0, sigma=0.1, rho=-0.95, v0=0.0),
            upper=HestonParams(kappa=5.0, lam=1.0, sigma=1.0, rho=0.0, v0=1.0),
        )

    def lower_array(self) -> np.ndarray:
        return self.lower.as_array()

    def upper_array(self) -> np.ndarray:
        return self.upper.as_array()

    def ranges(self) -> np.ndarray:
        return self.upper_array() - self.lower_array()

    def midpoint(self) -> HestonParams:
        return HestonParams.from_array(0.5 * (self.lower_array() + self.upper_array()))

    def contains(self, p: HestonParams, tol: float = 0.0) -> bool:
        a = p.as_array()
        return bool(np.all(a >= self.lower_array() - tol) and np.all(a <= self.upper_array() + tol))

    def to_unit(self, p: HestonParams) -> np.ndarray:
        """Map params to the unit cube; degenerate dimensions map to 0."""
        rng_ = self.ranges()
        safe = np.where(rng_ > 0, rng_, 1.0)
        return (p.as_array() - self.lower_array()) / safe

    def from_unit(self, u) -> HestonParams:
        return HestonParams.from_array(self.lower_array() + np.asarray(u, dtype=float) * self.ranges())

    def save(self, path) -> None:
        """Write the box as plain text, one ``name = [low, high]`` line per parameter."""
        arr_lo, arr_hi = self.lower_array(), self.upper_array()
        with open(path, "w") as f:
            for name, lo, hi in zip(("kappa", "lambda", "sigma", "rho", "v0"), arr_lo, arr_hi):
                f.write(f"{name} = [{float(lo)!r}, {float(hi)!r}]\n")

    @staticmethod
    def load(path) -> "ParamBox":
        values = {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, rest = line.partition("=")
                key = key.strip().lower()
                if key == "lambda":
                    key = "lam"
                if key not in PARAM_NAMES:
                    raise ValueError(f"unknown parameter {key!r} in box file {path}")
                body = rest.strip().strip("[]")
                lo_s, hi_s = body.split(",")
                values[key] = (float(lo_s), float(hi_s))
        missing = [n for n in PARAM_NAMES if n not in values]
        if missing:
            raise ValueError(f"box file {path} is missing parameters: {missing}")
        lo = HestonParams(**{n: values[n][0] for n in PARAM_NAMES})
        hi = HestonParams(**{n: values[n][1] for n in PARAM_NAMES})
        return ParamBox(lo, hi)


RateLike = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class MarketContext:
    """Spot level and risk-free curve shared by all pricings of one surface.

    ``rate`` is either a flat continuously-compounded rate or a callable
    ``tau_years -> rate`` (e.g. ``RateCurve.rate_at``).
    """

    spot: float
    rate: RateLike = 0.0

    def __post_init__(self):
        if not self.spot > 0:
            raise ValueError(f"spot must be positive, got {self.spot}")

    def rate_at(self, tau: float) -> float:
        if callable(self.rate):
            return float(self.rate(tau))
        return float(self.rate)


def clamp(p: HestonParams, box: ParamBox) -> HestonParams:
    """Clip each component into the box, then floor lam and v0 at
    ``VARIANCE_FLOOR``. Idempotent."""
    a = np.clip(p.as_array(), box.lower_array(), box.upper_array())
    a[1] = max(a[1], VARIANCE_FLOOR)
    a[4] = max(a[4], VARIANCE_FLOOR)
    return HestonParams.from_array(a)


def feller_satisfied(p: HestonParams) -> bool:
    """Strict Feller check ``2*kappa*lam > sigma**2``.

    Advisory only: the default box admits violations and neither sampling nor
    the GA enforces it; callers log the flag per candidate.
    """
    return bool(2.0 * p.kappa * p.lam > p.sigma ** 2)


def sample_uniform(box: ParamBox, n: int, rng: np.random.Generator) -> list[HestonParams]:
    """``n`` i.i.d. component-wise uniform draws in the box, clamped."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.random((n, 5))
    points = box.lower_array() + u * box.ranges()
    return [clamp(HestonParams.from_array(row), box) for row in points]


def sample_lhs(box: ParamBox, n: int, rng: np.random.Generator) -> list[HestonParams]:
    """Latin hypercube sample of size ``n``.

    Each dimension independently gets one uniform draw per stratum
    ``[i/n, (i+1)/n)`` under a random permutation, then the unit cube is
    mapped affinely onto the box.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    unit = np.empty((n, 5))
    for d in range(5):
        strata = rng.permutation(n)
        unit[:, d] = (strata + rng.random(n)) / n
    points = box.lower_array() + unit * box.ranges()
    return [clamp(HestonParams.from_array(row), box) for row in points]


def lhs_strata_counts(samples: list[HestonParams], box: ParamBox, n_strata: int) -> np.ndarray:
    """Occupancy count per (dimension, stratum); a valid LHS design of size
    ``n_strata`` has every count equal to one. Degenerate dimensions are
    reported as all-ones."""
    counts = np.zeros((5, n_strata), dtype=int)
    lo, rng_ = box.lower_array(), box.ranges()
    for d in range(5):
        if rng_[d] == 0:
            counts[d, :] = 1
            continue
        for p in samples:
            u = (p.as_array()[d] - lo[d]) / rng_[d]
            idx = min(int(u * n_strata), n_strata - 1)
            counts[d, idx] += 1
    return counts


def warn_if_feller_violated(p: HestonParams) -> bool:
    """Convenience wrapper used by loaders: warns (once per call site) and
    returns the flag."""
    ok = feller_satisfied(p)
    if not ok:
        warnings.warn(f"Feller condition violated: 2*kappa*lam={2 * p.kappa * p.lam:.6g} "
                      f"<= sigma^2={p.sigma ** 2:.6g}", stacklevel=2)
    return ok
