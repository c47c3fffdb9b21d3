"""Decay-rate extraction and log-log power-law fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .lg_model import ANSATZ_DEFAULTS, Ansatz

SCHEMAS = ("fidelity_trace", "k_trace")


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("t and y must be one-dimensional and of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(t)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class FitResult:
    """``y = prefactor * x**exponent`` fitted over ``window``."""

    prefactor: float
    exponent: float
    rms_log_residual: float
    window: tuple[float, float]
    points: int = 0

    def __call__(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent

    @property
    def rate(self) -> float:
        """Rate ``r`` in the equivalent form ``y = (r x)**exponent``."""
        return self.prefactor ** (1.0 / self.exponent)


def log_derivative(f: TimeSeries, signed: bool = False) -> TimeSeries:
    """Instantaneous decay rate of ``log f``.

    Second-order central differences inside the grid, one-sided at the ends
    (``numpy.gradient``).  The default returns the decay magnitude ``-d log f / dt``;
    ``signed=True`` returns ``d log f / dt``.
    """
    if np.any(f.y <= 0):
        bad = int(np.flatnonzero(f.y <= 0)[0])
        raise ValueError(f"nonpositive value {f.y[bad]!r} at t = {f.t[bad]!r}; log-derivative undefined")
    if len(f) < 2:
        raise ValueError("need at least two samples")
    d = np.gradient(np.log(f.y), f.t)
    return TimeSeries(f.t, d if signed else -d)


def _window_mask(x: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones(x.size, dtype=bool)
    lo, hi = window
    lo = -np.inf if lo is None else lo
    hi = np.inf if hi is None else hi
    return (x >= lo) & (x <= hi)


def powerlaw_fit(x, y, window=None) -> FitResult:
    """Least squares on ``(log x, log y)``; ``window`` bounds ``x`` inclusively."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    m = _window_mask(x, window)
    xs, ys = x[m], y[m]
    if xs.size < 3:
        raise ValueError(f"power-law fit needs at least 3 points in the window, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    a = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(a, ly, rcond=None)
    res = ly - (slope * lx + icpt)
    rms = float(math.sqrt(np.mean(res**2)))
    return FitResult(float(math.exp(icpt)), float(slope), rms, (float(xs.min()), float(xs.max())), int(xs.size))


def growth_window(t, k, n: int, k_lo: float = 2.0, sat_frac: float = 0.5) -> tuple[float, float]:
    """Times bracketing the clean growth stage: from ``K >= k_lo`` until just before ``K`` reaches ``sat_frac * n``."""
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    above = np.flatnonzero(k >= k_lo)
    if above.size == 0:
        raise ValueError(f"cluster size never reaches {k_lo}")
    i0 = int(above[0])
    sat = np.flatnonzero(k >= sat_frac * n)
    i1 = int(sat[0]) - 1 if sat.size else k.size - 1
    if i1 <= i0:
        raise ValueError("no growth window before saturation")
    return float(t[i0]), float(t[i1])


def saturation_time(t, k, n: int, sat_frac: float = 0.5) -> float:
    """First time ``K`` reaches ``sat_frac * n`` (``inf`` if never)."""
    k = np.asarray(k, dtype=float)
    sat = np.flatnonzero(k >= sat_frac * n)
    return float(np.asarray(t)[sat[0]]) if sat.size else math.inf


def fit_growth(t, k, n: int, k_lo: float = 2.0, sat_frac: float = 0.5) -> FitResult:
    """Fit ``K = K1 t**a`` over :func:`growth_window`."""
    return powerlaw_fit(t, k, growth_window(t, k, n, k_lo, sat_frac))


def ansatz_rate(p: float, k, **params) -> np.ndarray | float:
    """Leakage rate of the critical ansatz at cluster size ``k``."""
    kk = np.asarray(k, dtype=float)
    if np.any(kk < 1):
        raise ValueError("cluster size must be >= 1")
    vals = Ansatz(p, **{**ANSATZ_DEFAULTS, **params}).rates(kk)
    return float(vals) if np.ndim(k) == 0 else vals


def fit_decay_scaling(fid: TimeSeries, k: TimeSeries, k_window=None) -> FitResult:
    """Fit ``chi'(K) = chi'(1) K**alpha`` from a fidelity trace and a cluster-size trace.

    ``k`` is interpolated onto the fidelity times.  ``k_window`` bounds ``K``.
    """
    rate = log_derivative(fid)
    kk = np.interp(fid.t, k.t, k.y)
    return powerlaw_fit(kk, rate.y, k_window)


def synthetic_fidelity(k: TimeSeries, chi1: float, alpha: float) -> TimeSeries:
    """Fidelity ``exp(-int chi1 K(t)**alpha dt)`` consistent with a given decay law."""
    rate = chi1 * np.maximum(k.y, 0.0) ** alpha
    chi = cumulative_trapezoid(rate, k.t, initial=0.0)
    return TimeSeries(k.t, np.exp(-chi))


# -- CSV I/O ------------------------------------------------------------------


def ingest_series(path: str | Path, schema: str = "k_trace") -> TimeSeries:
    """Read a ``t_ms,value`` CSV.  Lines starting with ``#`` are skipped.

    Rows must be strictly increasing in time; the first offending line is named
    in the error.  ``k_trace`` values must be nonnegative.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    ts, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        header = None
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = [h.strip() for h in row]
                if header != ["t_ms", "value"]:
                    raise ValueError(f"{path}:{lineno}: expected header t_ms,value, got {line}")
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                t, y = float(row[0]), float(row[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {line!r}") from exc
            if not (math.isfinite(t) and math.isfinite(y)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if ts and t == ts[-1]:
                raise ValueError(f"{path}:{lineno}: duplicate time {t!r}")
            if ts and t < ts[-1]:
                raise ValueError(f"{path}:{lineno}: time {t!r} is earlier than the previous row")
            if schema == "k_trace" and y < 0:
                raise ValueError(f"{path}:{lineno}: negative cluster size")
            ts.append(t)
            ys.append(y)
    if header is None:
        raise ValueError(f"{path}: empty file")
    return TimeSeries(np.array(ts), np.array(ys))


def write_series(path: str | Path, series: TimeSeries, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ms", "value"])
        for t, y in zip(series.t, series.y):
            w.writerow([repr(float(t)), repr(float(y))])


def write_fit_report(path: str | Path, rows: Sequence[tuple[str, FitResult | None]], header: Sequence[str] = ()) -> None:
    """One row per named fit; a ``None`` fit leaves the numeric fields empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "prefactor", "exponent", "residual", "window_lo", "window_hi"])
        for name, fit in rows:
            if fit is None:
                w.writerow([name, "", "", "", "", ""])
            else:
                w.writerow([name, repr(fit.prefactor), repr(fit.exponent), repr(fit.rms_log_residual),
                            repr(fit.window[0]), repr(fit.window[1])])
