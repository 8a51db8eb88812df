"""File-based ingestion of option-chain snapshots and rate curves, and
assembly of real calibration targets.

Real chains arrive as scattered (strike, expiry, price) quotes rather than a
rectangular lattice; the mean-squared calibration loss does not care, so the
assembled target keeps the quotes scattered. The inverse networks do need a
fixed-width input, which :func:`nn_input_from_scatter` provides by
interpolating the quotes onto a standard grid in (log-strike, maturity).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import griddata

from .params import HestonParams, MarketContext
from .pricing import QuadratureSpec, SurfaceGrid, price_cells

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0
WEEKS_PER_YEAR = DAYS_PER_YEAR / 7.0


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    expiry_days: int
    mid: float
    option_type: str  # "call" or "put"

    def __post_init__(self):
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if self.expiry_days < 1:
            raise ValueError("expiry_days must be >= 1")
        if self.mid < 0:
            raise ValueError("mid must be non-negative")
        if self.option_type not in ("call", "put"):
            raise ValueError(f"option_type must be call/put, got {self.option_type!r}")


@dataclass(frozen=True)
class RateCurve:
    """Risk-free curve quoted at weekly maturities in percent."""

    weeks: tuple
    rates_percent: tuple

    def __post_init__(self):
        w = np.asarray(self.weeks, dtype=float)
        if np.any(np.diff(w) <= 0):
            raise ValueError("curve maturities must be strictly ascending")
        if len(self.weeks) != len(self.rates_percent):
            raise ValueError("weeks and rates must have equal length")

    @staticmethod
    def default() -> "RateCurve":
        # Treasury-bill style curve used for the real-surface experiments.
        return RateCurve(weeks=(4, 6, 13, 17, 26, 52),
                         rates_percent=(4.24, 4.23, 4.23, 4.19, 4.07, 3.77))

    def rate_at(self, tau_years: float) -> float:
        """Linear interpolation in maturity with flat extrapolation beyond the
        knots; returns a decimal (4.24% -> 0.0424)."""
        weeks = tau_years * WEEKS_PER_YEAR
        return float(np.interp(weeks, np.asarray(self.weeks, dtype=float),
                               np.asarray(self.rates_percent, dtype=float))) / 100.0

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["weeks", "rate_percent"])
            for wk, rp in zip(self.weeks, self.rates_percent):
                w.writerow([repr(float(wk)), repr(float(rp))])

    @staticmethod
    def load_csv(path) -> "RateCurve":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        weeks = tuple(float(r["weeks"]) for r in rows)
        rates = tuple(float(r["rate_percent"]) for r in rows)
        return RateCurve(weeks, rates)


def rate_at(curve: RateCurve, tau_years: float) -> float:
    return curve.rate_at(tau_years)


def load_chain(path, spot: float, maturity_days: tuple | None = None,
               moneyness: tuple | None = None) -> list:
    """Read an option-chain CSV into quotes.

    Expected columns: ``type, strike, expiry_days`` plus either ``bid, ask``
    or ``mid``. Mid is (bid+ask)/2 when both sides are present. Rows with
    non-positive mid, crossed markets (bid > ask), or unparseable fields are
    dropped and counted; optional maturity-day and log-moneyness windows
    filter the sample envelope.
    """
    quotes = []
    dropped = {"malformed": 0, "nonpositive": 0, "crossed": 0, "filtered": 0}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return []
        cols = {c.strip().lower(): c for c in reader.fieldnames}
        for row in reader:
            try:
                opt_type = row[cols["type"]].strip().lower()
                strike = float(row[cols["strike"]])
                days = int(float(row[cols["expiry_days"]]))
                if "mid" in cols and row[cols["mid"]] not in (None, ""):
                    mid = float(row[cols["mid"]])
                else:
                    bid = float(row[cols["bid"]])
                    ask = float(row[cols["ask"]])
                    if bid > ask:
                        dropped["crossed"] += 1
                        continue
                    mid = 0.5 * (bid + ask)
                if mid <= 0:
                    dropped["nonpositive"] += 1
                    continue
                if maturity_days is not None and not (maturity_days[0] <= days <= maturity_days[1]):
                    dropped["filtered"] += 1
                    continue
                if moneyness is not None:
                    m = math.log(strike / spot)
                    if not (moneyness[0] <= m <= moneyness[1]):
                        dropped["filtered"] += 1
                        continue
                quotes.append(OptionQuote(strike, days, mid, opt_type))
            except (KeyError, ValueError, TypeError):
                dropped["malformed"] += 1
    if any(dropped.values()):
        log.info("load_chain(%s): kept %d quotes, dropped %s", path, len(quotes), dropped)
    return quotes


@dataclass(frozen=True)
class ScatterTarget:
    """Scattered calibration cells: paired strike/maturity/price vectors."""

    strikes: np.ndarray
    taus: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        t = np.asarray(self.taus, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        if not (k.shape == t.shape == p.shape) or k.ndim != 1 or len(k) == 0:
            raise ValueError("strikes, taus, prices must be equal-length 1-d arrays")
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "taus", t)
        object.__setattr__(self, "prices", p)

    @property
    def size(self) -> int:
        return len(self.strikes)

    @property
    def strikes_flat(self) -> np.ndarray:
        return self.strikes

    @property
    def taus_flat(self) -> np.ndarray:
        return self.taus

    @property
    def prices_flat(self) -> np.ndarray:
        return self.prices

    def manifest(self) -> dict:
        return {"n_cells": int(self.size),
                "maturity_days": [float(self.taus.min() * DAYS_PER_YEAR),
                                  float(self.taus.max() * DAYS_PER_YEAR)],
                "strike_range": [float(self.strikes.min()), float(self.strikes.max())]}


def assemble_target(quotes: list, spot: float, curve: RateCurve) -> tuple:
    """Turn raw quotes into a scattered call-price target and its market
    context. Calls are kept as-is; puts become synthetic calls through parity
    ``C = P + S0 - K e^{-r tau}`` using the curve rate at each maturity.
    Synthetic calls that parity sends negative are floored at zero (deep OTM
    puts below carry)."""
    if not quotes:
        raise ValueError("no usable quotes to assemble a target from")
    strikes, taus, prices = [], [], []
    for q in quotes:
        tau = q.expiry_days / DAYS_PER_YEAR
        r = curve.rate_at(tau)
        if q.option_type == "call":
            price = q.mid
        else:
            price = q.mid + spot - q.strike * math.exp(-r * tau)
        strikes.append(q.strike)
        taus.append(tau)
        prices.append(max(price, 0.0))
    target = ScatterTarget(np.asarray(strikes), np.asarray(taus), np.asarray(prices))
    ctx = MarketContext(spot=spot, rate=curve.rate_at)
    return target, ctx


def nn_input_from_scatter(target: ScatterTarget, grid: SurfaceGrid) -> np.ndarray:
    """Interpolate a scattered target onto a rectangular grid for the
    fixed-width network input: piecewise-linear in (log K, tau) with
    nearest-neighbour fill outside the quote hull. Returns the row-major
    flattened prices."""
    pts = np.column_stack([np.log(target.strikes), target.taus])
    want_k = np.log(grid.strikes_flat())
    want_t = grid.taus_flat()
    want = np.column_stack([want_k, want_t])
    vals = griddata(pts, target.prices, want, method="linear")
    holes = ~np.isfinite(vals)
    if np.any(holes):
        vals[holes] = griddata(pts, target.prices, want[holes], method="nearest")
    return np.asarray(vals, dtype=float)


def make_synthetic_chain(theta: HestonParams, spot: float, curve: RateCurve,
                         expiry_days: tuple = (7, 21, 45, 90, 150, 255),
                         moneyness_span: tuple = (-0.25, 0.15),
                         strikes_per_expiry: int = 26,
                         put_fraction: float = 0.3,
                         quad: QuadratureSpec = QuadratureSpec(),
                         rng: np.random.Generator | None = None) -> list:
    """Build an as-if-real chain from known parameters: per expiry, strikes
    log-spaced around spot, priced with the same engine; the lowest-strike
    fraction is emitted as puts (via parity back from the call) to exercise
    the put-conversion path. Intended for pipeline validation where ground
    truth must be known."""
    if rng is None:
        rng = np.random.default_rng(0)
    ctx = MarketContext(spot=spot, rate=curve.rate_at)
    quotes = []
    for days in expiry_days:
        tau = days / DAYS_PER_YEAR
        r = curve.rate_at(tau)
        ks = spot * np.exp(np.linspace(moneyness_span[0], moneyness_span[1],
                                       strikes_per_expiry))
        calls = price_cells(theta, ctx, ks, np.full(len(ks), tau), quad)
        n_puts = int(put_fraction * strikes_per_expiry)
        for i, (k, c) in enumerate(zip(ks, calls)):
            if i < n_puts:
                put = c - spot + k * math.exp(-r * tau)
                quotes.append(OptionQuote(float(k), int(days), max(float(put), 0.0), "put"))
            else:
                quotes.append(OptionQuote(float(k), int(days), float(c), "call"))
    return quotes


def save_chain_csv(quotes: list, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["type", "strike", "expiry_days", "mid"])
        for q in quotes:
            w.writerow([q.option_type, repr(q.strike), q.expiry_days, repr(q.mid)])


def save_target_manifest(target: ScatterTarget, spot: float, path) -> None:
    doc = {"spot": spot}
    doc.update(target.manifest())
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
