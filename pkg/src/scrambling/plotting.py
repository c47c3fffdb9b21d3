"""Static figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _new(figsize=(5.0, 3.6)):
    fig = Figure(figsize=figsize)
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path: str | Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return Path(path)


def growth(path, curves: Mapping[str, tuple[np.ndarray, np.ndarray]], title: str = "", fit=None) -> Path:
    """Log-log cluster size against time, one line per label."""
    fig = _new()
    ax = fig.add_subplot()
    for label, (t, k) in curves.items():
        m = t > 0
        ax.loglog(t[m], k[m], label=label)
    if fit is not None:
        lo, hi = fit.window
        tt = np.geomspace(lo, hi, 50)
        ax.loglog(tt, fit(tt), "k--", lw=1, label=f"fit a={fit.exponent:.2f}")
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("K")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    return _save(fig, path)


def spectrum_scan(path, gammas: np.ndarray, lambdas: np.ndarray, gamma_crit: float | None = None) -> Path:
    """Real and imaginary parts of the eigenvalues against gamma1 (``lambdas`` is (n_gamma, n))."""
    fig = _new((7.0, 3.2))
    ax1, ax2 = fig.subplots(1, 2)
    for i in range(lambdas.shape[1]):
        ax1.plot(gammas, lambdas[:, i].real, ".", ms=2, color="C0")
        ax2.plot(gammas, lambdas[:, i].imag, ".", ms=2, color="C1")
    for ax, lab in ((ax1, "Re lambda"), (ax2, "Im lambda")):
        ax.set_xlabel("gamma1 (1/ms)")
        ax.set_ylabel(lab)
        if gamma_crit is not None:
            ax.axvline(gamma_crit, color="k", lw=0.8, ls="--")
    return _save(fig, path)


def kloc_scan(path, p: Sequence[float], kloc: Sequence[float | None], p_c: float | None = None, fit=None) -> Path:
    fig = _new()
    ax = fig.add_subplot()
    pp = np.array([x for x, k in zip(p, kloc) if k is not None])
    kk = np.array([k for k in kloc if k is not None])
    ax.loglog(pp, kk, "o", ms=3)
    if p_c is not None:
        ax.axvline(p_c, color="k", lw=0.8, ls="--")
    if fit is not None:
        lo, hi = fit.window
        xx = np.geomspace(lo, hi, 20)
        ax.loglog(xx, fit(xx), "r-", lw=1, label=f"slope {fit.exponent:.2f}")
        ax.legend(fontsize=7)
    ax.set_xlabel("p")
    ax.set_ylabel("K_loc")
    return _save(fig, path)


def decay_rates(path, curves: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> Path:
    """Decay rate against cluster size, one line per perturbation label."""
    fig = _new()
    ax = fig.add_subplot()
    for label, (k, rate) in curves.items():
        m = (k > 0) & (rate > 0)
        ax.loglog(k[m], rate[m], label=label)
    ax.set_xlabel("K")
    ax.set_ylabel("decay rate (1/ms)")
    ax.legend(fontsize=7)
    return _save(fig, path)
