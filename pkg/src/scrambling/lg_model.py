"""Levy-Gleason rate model for the amplitude of L-active-spin clusters.

The amplitudes ``C_L`` (``L = 1..n``) obey ``dC/dt = -Upsilon C`` with the
tridiagonal generator

    Upsilon_LL = Gamma_L,   Upsilon_{L,L+1} = Upsilon_{L+1,L} = i W_L / 4,

``W_L = d L**delta`` and leakage rates ``Gamma_L >= 0``.  Conjugating by
``D = diag(i**(L-1))`` turns Upsilon into the *real* matrix

    A_LL = Gamma_L,   A_{L,L+1} = -W_L / 4,   A_{L+1,L} = +W_L / 4,

with ``C = D v`` and ``|C_L| = |v_L|``.  Time stepping, eigenvalue checks and
inverse iteration all work with ``A``, which keeps real eigenvalues exactly
real and halves the arithmetic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.integrate import DOP853

DENSE_EIGEN_MAX = 4096
NORM_FLOOR = 1e-300

# Critical-ansatz constants fitted to the simulated rates (the values quoted
# with the model); p_c is the critical perturbation strength.
ANSATZ_DEFAULTS = dict(p_c=0.026, s=-0.911, nu=-0.57, alpha0=0.48, alpha_inf=0.96)


# -- rate laws ----------------------------------------------------------------


@dataclass(frozen=True)
class PowerLaw:
    """``Gamma_L = gamma1 * L**alpha``."""

    gamma1: float = 0.0
    alpha: float = 1.0

    def rates(self, levels: np.ndarray) -> np.ndarray:
        if self.gamma1 == 0:
            return np.zeros(levels.size)
        return self.gamma1 * levels**self.alpha

    def effective(self) -> tuple[float, float]:
        return self.gamma1, self.alpha


@dataclass(frozen=True)
class Ansatz:
    """Single-parameter critical ansatz for the asymptotic leakage rate.

    ``scale * (p_c - p)**s * L**alpha0`` below ``p_c`` and
    ``scale * (p - p_c)**(-2 nu) * L**alpha_inf`` above it.
    """

    p: float
    p_c: float = ANSATZ_DEFAULTS["p_c"]
    s: float = ANSATZ_DEFAULTS["s"]
    nu: float = ANSATZ_DEFAULTS["nu"]
    alpha0: float = ANSATZ_DEFAULTS["alpha0"]
    alpha_inf: float = ANSATZ_DEFAULTS["alpha_inf"]
    scale: float = 1.0

    def effective(self) -> tuple[float, float]:
        """``(Gamma at L = 1, exponent)`` on the branch selected by ``p``."""
        if self.p == self.p_c:
            raise ValueError(f"ansatz is undefined at the critical point p = p_c = {self.p_c}")
        if self.p < self.p_c:
            return self.scale * (self.p_c - self.p) ** self.s, self.alpha0
        return self.scale * (self.p - self.p_c) ** (-2 * self.nu), self.alpha_inf

    def rates(self, levels: np.ndarray) -> np.ndarray:
        g1, a = self.effective()
        return g1 * levels**a


@dataclass(frozen=True)
class CustomRates:
    """Explicit ``Gamma_L`` table, or a callable of the level array."""

    table: Union[Sequence[float], Callable[[np.ndarray], np.ndarray]]

    def rates(self, levels: np.ndarray) -> np.ndarray:
        if callable(self.table):
            g = np.asarray(self.table(levels), dtype=float)
        else:
            g = np.asarray(self.table, dtype=float)
        if g.shape != levels.shape:
            raise ValueError(f"custom rate table has {g.size} entries, model has {levels.size} levels")
        return g

    def effective(self) -> tuple[float, float]:
        return float("nan"), float("nan")


def log_rates(gamma1: float) -> CustomRates:
    """Slowly growing law ``Gamma_L = gamma1 * log(1 + L)``."""
    return CustomRates(lambda L: gamma1 * np.log1p(L))


RateLaw = Union[PowerLaw, Ansatz, CustomRates]


@dataclass(frozen=True)
class LgParams:
    n: int
    d: float = 1.0
    delta: float = 0.66
    rate_law: RateLaw = field(default_factory=PowerLaw)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.d < 0:
            raise ValueError("coupling d must be nonnegative")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta={self.delta} outside [0, 1]")

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=float)

    def with_rates(self, rate_law: RateLaw) -> "LgParams":
        return LgParams(self.n, self.d, self.delta, rate_law)


def transition_rates(params: LgParams) -> np.ndarray:
    """``W_L = d L**delta`` for ``L = 1..n-1``."""
    return params.d * params.levels[:-1] ** params.delta


def decoherence_rates(params: LgParams) -> np.ndarray:
    g = params.rate_law.rates(params.levels)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("leakage rates must be finite and nonnegative")
    return g


# -- the generator ------------------------------------------------------------


@dataclass(frozen=True)
class UpsilonMatrix:
    """Tridiagonal generator stored as ``w`` (W_L, length n-1) and ``g`` (Gamma_L, length n)."""

    w: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def diag(self) -> np.ndarray:
        return self.g.astype(complex)

    @property
    def offdiag(self) -> np.ndarray:
        return 1j * self.w / 4

    def dense(self) -> np.ndarray:
        """Complex generator as a dense array."""
        u = np.diag(self.diag)
        if self.n > 1:
            idx = np.arange(self.n - 1)
            u[idx, idx + 1] = self.offdiag
            u[idx + 1, idx] = self.offdiag
        return u

    def real_form(self) -> np.ndarray:
        a = np.diag(self.g.astype(float))
        if self.n > 1:
            idx = np.arange(self.n - 1)
            a[idx, idx + 1] = -self.w / 4
            a[idx + 1, idx] = self.w / 4
        return a

    def banded(self, shift: float = 0.0) -> np.ndarray:
        """``A - shift`` in LAPACK banded layout for :func:`scipy.linalg.solve_banded`."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = -self.w / 4
        ab[1] = self.g - shift
        ab[2, :-1] = self.w / 4
        return ab

    def matvec_real(self, v: np.ndarray) -> np.ndarray:
        q = self.w / 4
        out = self.g * v
        out[:-1] -= q * v[1:]
        out[1:] += q * v[:-1]
        return out

    def scale(self) -> float:
        """Infinity-norm bound used for relative tolerances."""
        q = np.abs(self.w) / 4
        row = np.abs(self.g).copy()
        row[:-1] += q
        row[1:] += q
        return float(row.max()) if row.size else 0.0

    def phase(self) -> np.ndarray:
        """Diagonal of ``D``: ``C = D v``."""
        return 1j ** (np.arange(self.n) % 4)


def build_upsilon(w, g) -> UpsilonMatrix:
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValueError("Gamma vector must be one-dimensional and nonempty")
    if w.shape != (g.size - 1,):
        raise ValueError(f"need {g.size - 1} transition rates for {g.size} levels, got {w.size}")
    return UpsilonMatrix(w, g)


def upsilon_from_params(params: LgParams) -> UpsilonMatrix:
    return build_upsilon(transition_rates(params), decoherence_rates(params))


# -- observables --------------------------------------------------------------


def k_of_t(c) -> float:
    """``K = sum L |C_L|^2 / sum |C_L|^2``."""
    p = np.abs(np.asarray(c)) ** 2
    tot = p.sum()
    if not tot > NORM_FLOOR:
        raise ValueError("amplitude vector has decayed to zero; cluster size undefined")
    return float(np.arange(1, p.size + 1) @ p / tot)


def unit_vector(n: int, level: int = 1) -> np.ndarray:
    c = np.zeros(n, dtype=complex)
    c[level - 1] = 1.0
    return c


# -- time stepping ------------------------------------------------------------


@dataclass
class Trajectory:
    """Output of :func:`evolve_amplitudes`.

    ``log_norm`` is ``log(sum |C_L|^2)``; it stays finite long after the norm
    itself underflows.  ``amplitudes`` is only filled on request.
    """

    times: np.ndarray
    K: np.ndarray
    log_norm: np.ndarray
    amplitudes: np.ndarray | None = None
    final: np.ndarray | None = None
    steps: int = 0

    @property
    def norm(self) -> np.ndarray:
        return np.exp(self.log_norm)


class StepSizeError(RuntimeError):
    pass


def evolve_amplitudes(
    u: UpsilonMatrix,
    c0,
    times,
    rtol: float = 1e-10,
    keep_amplitudes: bool = False,
    tail_tol: float = 1e-20,
    margin: int = 64,
    renorm_below: float = 1e-4,
) -> Trajectory:
    """Integrate ``dC/dt = -Upsilon C`` with an adaptive 8th-order Runge-Kutta scheme.

    Only the leading block of levels that carries amplitude is stepped; the
    block grows by ``margin`` levels whenever its last ``margin`` entries exceed
    ``tail_tol`` relative to the current norm.  The smallest leakage rate is
    removed as an exact integrating factor, and the state is rescaled whenever
    its norm falls by ``renorm_below``; both corrections are carried in
    ``log_norm``.  ``times`` must be nondecreasing and start at or after 0.
    """
    n = u.n
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a one-dimensional, nonempty time grid")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("time grid must be nondecreasing and start at t >= 0")
    c0 = np.asarray(c0, dtype=complex)
    if c0.shape != (n,):
        raise ValueError(f"initial vector has {c0.size} entries, model has {n} levels")
    nrm0 = float(np.vdot(c0, c0).real)
    if not nrm0 > 0:
        raise ValueError("initial vector is zero")

    phase = u.phase()
    v0 = c0 * phase.conj()
    cols = [v0.real]
    if np.any(v0.imag != 0):
        cols.append(v0.imag)
    state = np.array(cols)  # (k, n) real
    k = state.shape[0]

    g_min = float(u.g.min())
    g = u.g - g_min
    q = u.w / 4
    levels = np.arange(1, n + 1, dtype=float)

    nz = np.flatnonzero(np.any(state != 0, axis=0))
    hi = min(n, int(nz[-1]) + 1 + margin)
    log_scale = 0.0

    out_k = np.empty(times.size)
    out_ln = np.empty(times.size)
    out_amp = np.empty((times.size, n), dtype=complex) if keep_amplitudes else None

    def record(i: int, t: float, y: np.ndarray) -> None:
        v = y.reshape(k, -1)
        w = v.shape[1]
        pop = (v * v).sum(axis=0)
        tot = pop.sum()
        out_k[i] = levels[:w] @ pop / tot
        out_ln[i] = math.log(tot) + log_scale - 2 * g_min * t
        if out_amp is not None:
            full = np.zeros(n, dtype=complex)
            cplx = v[0] + 1j * v[1] if k == 2 else v[0].astype(complex)
            full[:w] = cplx * phase[:w] * math.exp(0.5 * (log_scale - 2 * g_min * t))
            out_amp[i] = full

    def make_rhs(m: int):
        gm = g[:m]
        qm = q[: m - 1]

        def rhs(_t, y):
            v = y.reshape(k, m)
            dv = -gm * v
            dv[:, :-1] += qm * v[:, 1:]
            dv[:, 1:] -= qm * v[:, :-1]
            return dv.ravel()

        return rhs

    t_end = float(times[-1])
    t = 0.0
    i = 0
    y = state[:, :hi].ravel().copy()
    while i < times.size and times[i] == 0.0:
        record(i, 0.0, y)
        i += 1
    ref_norm = float(y @ y)
    steps = 0
    solver = None
    while i < times.size:
        if solver is None:
            scale = math.sqrt(ref_norm)
            solver = DOP853(make_rhs(hi), t, y, t_end, rtol=rtol, atol=tail_tol * 1e-2 * scale)
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            raise StepSizeError(f"integration failed at t = {solver.t:.6g} ms: {msg}")
        t_new = solver.t
        y_new = solver.y
        if t_new > t:
            dense = None
            while i < times.size and times[i] <= t_new:
                if times[i] == t_new:
                    yi = y_new
                else:
                    dense = dense or solver.dense_output()
                    yi = dense(times[i])
                record(i, times[i], yi)
                i += 1
        t, y = t_new, y_new
        if solver.status == "finished":
            break
        restart = False
        cur = float(y @ y)
        v = y.reshape(k, hi)
        if hi < n:
            tail = float(np.abs(v[:, max(0, hi - margin):]).max())
            if tail > tail_tol * math.sqrt(cur):
                new_hi = min(n, hi + margin)
                padded = np.zeros((k, new_hi))
                padded[:, :hi] = v
                hi = new_hi
                y = padded.ravel()
                restart = True
        if cur < renorm_below * ref_norm:
            log_scale += math.log(cur)
            y = y / math.sqrt(cur)
            restart = True
        if restart:
            ref_norm = float(y @ y)
            solver = None

    # normalised state at the last output time
    v = y.reshape(k, hi)
    final = np.zeros(n, dtype=complex)
    final[:hi] = (v[0] + 1j * v[1] if k == 2 else v[0].astype(complex)) * phase[:hi]
    final /= np.linalg.norm(final)
    return Trajectory(times, out_k, out_ln, out_amp, final, steps)


# -- spectral route -----------------------------------------------------------


@dataclass
class EigenSolution:
    """Eigenpairs of Upsilon sorted by ascending real part, ties by imaginary part.

    ``vectors[:, i]`` is the right eigenvector ``c_{L i}`` for ``lambdas[i]``.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    scale: float

    def initial_weights(self, c0) -> np.ndarray:
        """Components of ``c0`` in the eigenbasis."""
        return np.linalg.solve(self.vectors, np.asarray(c0, dtype=complex))

    def amplitudes(self, c0, times) -> tuple[np.ndarray, np.ndarray]:
        """``C(t) = V exp(-Lambda t) V^-1 c0``, returned with the dominant decay
        ``exp(-gamma_1 t)`` factored out, plus that log factor per time."""
        w = self.initial_weights(c0)
        times = np.asarray(times, dtype=float)
        g1 = float(self.lambdas.real.min())
        shifted = self.lambdas - g1
        out = np.exp(-np.outer(times, shifted)) * w @ self.vectors.T
        return out, -g1 * times

    def k_trace(self, c0, times) -> np.ndarray:
        amps, _ = self.amplitudes(c0, times)
        p = np.abs(amps) ** 2
        return p @ np.arange(1, p.shape[1] + 1) / p.sum(axis=1)

    def residuals(self, u: UpsilonMatrix) -> np.ndarray:
        up = u.dense()
        return np.linalg.norm(up @ self.vectors - self.vectors * self.lambdas, axis=0)


def _sort_eigen(lam: np.ndarray, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((lam.imag, lam.real))
    return lam[order], vec[:, order]


def eigensolve(u: UpsilonMatrix, check: bool = True) -> EigenSolution:
    """Full eigendecomposition (dense, ``n <= DENSE_EIGEN_MAX``)."""
    n = u.n
    if n > DENSE_EIGEN_MAX:
        raise ValueError(f"dense eigensolve limited to n <= {DENSE_EIGEN_MAX}")
    scale = max(u.scale(), 1e-300)
    phase = u.phase()
    if np.all(u.g == u.g[0]):
        # Upsilon = g + i T with T real symmetric: Hermitian solver, exact structure.
        if n == 1:
            t_vals, t_vecs = np.zeros(1), np.ones((1, 1))
        else:
            t_vals, t_vecs = sla.eigh_tridiagonal(np.zeros(n), u.w / 4)
        lam = u.g[0] + 1j * t_vals
        vec = t_vecs.astype(complex)
    else:
        lam, va = sla.eig(u.real_form())
        vec = phase[:, None] * va
        vec = vec / np.linalg.norm(vec, axis=0)
    lam, vec = _sort_eigen(lam, vec)
    sol = EigenSolution(lam, vec, scale)
    if check:
        res = sol.residuals(u).max()
        if res > 1e-8 * scale:
            raise np.linalg.LinAlgError(f"eigendecomposition did not converge: residual {res:.3e}")
    return sol


def eigenvalues(u: UpsilonMatrix) -> np.ndarray:
    """Sorted eigenvalues only (cheaper than :func:`eigensolve`)."""
    if u.n > DENSE_EIGEN_MAX:
        raise ValueError(f"dense eigensolve limited to n <= {DENSE_EIGEN_MAX}")
    if np.all(u.g == u.g[0]):
        t_vals = sla.eigh_tridiagonal(np.zeros(u.n), u.w / 4, eigvals_only=True) if u.n > 1 else np.zeros(1)
        lam = u.g[0] + 1j * t_vals
    else:
        lam = sla.eigvals(u.real_form())
    return lam[np.lexsort((lam.imag, lam.real))]


def is_localized(u: UpsilonMatrix, tol_rel: float = 1e-10, lam: np.ndarray | None = None) -> bool:
    """True when the slowest mode is real and separated from the next one."""
    lam = eigenvalues(u) if lam is None else lam
    tol = tol_rel * max(u.scale(), 1e-300)
    if abs(lam[0].imag) > tol:
        return False
    if lam.size == 1:
        return True
    return lam[1].real - lam[0].real > tol


def k_trace_eigen(u: UpsilonMatrix, c0, times) -> np.ndarray:
    return eigensolve(u).k_trace(c0, times)


# -- localization -------------------------------------------------------------


class LocalizationError(RuntimeError):
    """Raised when the slowest mode is not a real, isolated eigenvalue."""


@dataclass
class LocalizedMode:
    k_loc: float
    lam: float
    vector: np.ndarray
    iterations: int
    residual: float


def slowest_mode(u: UpsilonMatrix, max_iter: int = 300, tol: float = 1e-12, verify: bool | None = None) -> LocalizedMode:
    """Real slowest mode of Upsilon by inverse iteration on the real form.

    Starts at shift 0 and switches to Rayleigh-quotient shifts once the
    eigenvalue estimate settles.  If the smallest eigenvalue is part of a
    complex pair the real iteration cannot settle and
    :class:`LocalizationError` is raised.  For ``n <= 2000`` (or with
    ``verify=True``) the result is also checked against the dense spectrum.
    """
    n = u.n
    if n == 1:
        return LocalizedMode(1.0, float(u.g[0]), np.ones(1, dtype=complex), 0, 0.0)
    scale = max(u.scale(), 1e-300)
    if verify is None:
        verify = n <= 2000
    if verify and not is_localized(u):
        raise LocalizationError("slowest eigenvalue is complex or degenerate; the system does not localize")
    v = np.ones(n) / math.sqrt(n)
    mu = 0.0
    lam_old = None
    lam = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        try:
            x = sla.solve_banded((1, 1), u.banded(mu), v, check_finite=False)
        except np.linalg.LinAlgError:
            # shift hit an eigenvalue exactly; nudge it
            mu += 1e-12 * scale
            continue
        nx = np.linalg.norm(x)
        if not np.isfinite(nx) or nx == 0:
            mu += 1e-12 * scale
            continue
        v = x / nx
        av = u.matvec_real(v)
        lam = float(v @ av)
        res = float(np.linalg.norm(av - lam * v))
        if res <= tol * scale:
            break
        if lam_old is not None and abs(lam - lam_old) < 1e-3 * scale:
            mu = lam
        lam_old = lam
    else:
        raise LocalizationError(
            f"inverse iteration did not converge after {max_iter} sweeps (residual {res:.3e}); "
            "the slowest eigenvalue is probably complex"
        )
    pop = v * v
    k = float(np.arange(1, n + 1) @ pop / pop.sum())
    return LocalizedMode(k, lam, v * u.phase(), it, res)


def k_loc(u: UpsilonMatrix, **kw) -> float:
    """Localization cluster size from the slowest eigenvector."""
    return slowest_mode(u, **kw).k_loc


def gamma_crit(params: LgParams, bracket: tuple[float, float] | None = None, rtol: float = 1e-3, tol_im: float = 1e-10) -> float:
    """Threshold ``gamma1`` at which the slowest eigenvalue becomes real.

    ``params.rate_law`` must be a :class:`PowerLaw`; its ``gamma1`` is varied.
    Without a bracket the upper end is found by doubling from ``d``.
    """
    law = params.rate_law
    if not isinstance(law, PowerLaw):
        raise TypeError("gamma_crit needs a power-law leakage rate")
    w = transition_rates(params)
    shape = params.levels**law.alpha

    def localized(g1: float) -> bool:
        return is_localized(build_upsilon(w, g1 * shape), tol_im)

    if params.n == 1:
        return 0.0
    if bracket is None:
        # the threshold shrinks roughly like d / n; search outward from there
        guess = max(params.d, 1e-12) / params.n
        if localized(guess):
            lo, hi = guess / 2, guess
            while localized(lo):
                if lo < 1e-300:
                    raise ValueError("could not find a delocalized lower bracket")
                lo, hi = lo / 2, lo
        else:
            lo, hi = guess, 2 * guess
            for _ in range(200):
                if localized(hi):
                    break
                lo, hi = hi, 2 * hi
            else:
                raise ValueError("could not find a localized upper bracket")
    else:
        lo, hi = map(float, bracket)
        if not 0 <= lo < hi:
            raise ValueError("bracket must satisfy 0 <= lo < hi")
        if localized(lo) or not localized(hi):
            raise ValueError(f"invalid bracket [{lo}, {hi}]: need delocalized at lo and localized at hi")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if localized(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def prepare_initial_cluster(params: LgParams, t_ini: float) -> np.ndarray:
    """Spread ``e_1`` under the leak-free generator for ``t_ini`` and renormalise."""
    if t_ini < 0:
        raise ValueError("t_ini must be nonnegative")
    c = unit_vector(params.n)
    if t_ini == 0:
        return c
    u = build_upsilon(transition_rates(params), np.zeros(params.n))
    tr = evolve_amplitudes(u, c, [t_ini])
    return tr.final


# -- CSV output ---------------------------------------------------------------


def _open_csv(path, header: Sequence[str], columns: Sequence[str]):
    fh = open(path, "w", newline="", encoding="utf-8")
    for line in header:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    return fh, w


def write_trajectory_csv(path: str | Path, traj: Trajectory, header: Sequence[str] = ()) -> None:
    fh, w = _open_csv(path, header, ["t_ms", "K", "norm"])
    with fh:
        for t, k, ln in zip(traj.times, traj.K, traj.log_norm):
            w.writerow([repr(float(t)), repr(float(k)), repr(math.exp(ln))])


def write_eigen_csv(path: str | Path, lambdas, header: Sequence[str] = ()) -> None:
    fh, w = _open_csv(path, header, ["index", "re_lambda", "im_lambda"])
    with fh:
        for i, lam in enumerate(lambdas, start=1):
            w.writerow([i, repr(float(lam.real)), repr(float(lam.imag))])


def write_kloc_csv(path: str | Path, rows, header: Sequence[str] = ()) -> None:
    """``rows`` holds ``(p, K_loc, gamma1_eff, alpha_eff)``; K_loc may be None."""
    fh, w = _open_csv(path, header, ["p", "K_loc", "gamma1_eff", "alpha_eff"])
    with fh:
        for p, k, g1, a in rows:
            w.writerow([repr(float(p)), "" if k is None else repr(float(k)), repr(float(g1)), repr(float(a))])
