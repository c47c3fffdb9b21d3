"""Quantities measured by the MQC / Loschmidt-echo protocol.

All traces are taken at infinite temperature and normalised by ``Tr(Iz^2)``,
so the ideal spectrum at ``t = 0`` is ``f_0 = 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import exact

FIDELITY_FLOOR = 1e-12


def iz_norm(n: int) -> float:
    """``Tr(Iz^2) = n 2**n / 4``."""
    return n * 2**n / 4


def _spins(op: np.ndarray) -> int:
    n = int(round(math.log2(op.shape[0])))
    if op.shape != (2**n, 2**n):
        raise ValueError("operator is not a square 2**n matrix")
    return n


def order_matrix(n: int) -> np.ndarray:
    """Integer matrix of coherence orders ``M = m(row) - m(col)``."""
    m = exact.magnetization(n)
    return np.rint(m[:, None] - m[None, :]).astype(int)


def coherence_decompose(obs: np.ndarray) -> dict[int, np.ndarray]:
    """Split ``obs`` into blocks of fixed coherence order.

    Only orders with a nonzero element are returned; the blocks sum to ``obs``.
    """
    n = _spins(obs)
    orders = order_matrix(n)
    out = {}
    for m in range(-n, n + 1):
        mask = orders == m
        if np.any(obs[mask] != 0):
            out[m] = np.where(mask, obs, 0)
    return out


@dataclass
class MqcSpectrum:
    """Coherence-order amplitudes ``f_M`` for ``M = -n..n``."""

    amplitudes: dict[int, complex]
    norm: float

    @property
    def orders(self) -> list[int]:
        return sorted(self.amplitudes)

    def __getitem__(self, m: int) -> complex:
        return self.amplitudes.get(m, 0j)

    def total(self) -> complex:
        """Sum of all amplitudes, i.e. the echo at ``phi = 0``."""
        return complex(sum(self.amplitudes.values()))

    def second_moment(self) -> float:
        return float(sum(m * m * f for m, f in self.amplitudes.items()).real)


def mqc_spectrum(ideal: np.ndarray, perturbed: np.ndarray) -> MqcSpectrum:
    """``f_M = Tr[ideal_M perturbed_M^dagger] / Tr(Iz^2)``."""
    if ideal.shape != perturbed.shape:
        raise ValueError("ideal and perturbed operators have different dimensions")
    n = _spins(ideal)
    orders = order_matrix(n)
    # Tr[A_M B_M^+] = sum over elements of order M of A_ij conj(B_ij)
    prod = ideal * perturbed.conj()
    norm = iz_norm(n)
    amps = {m: complex(prod[orders == m].sum() / norm) for m in range(-n, n + 1)}
    return MqcSpectrum(amps, norm)


# -- the echo protocol ---------------------------------------------------------


class EchoProtocol:
    """Forward evolution under ``(1-p) H0 + p Sigma``, backward under ``-H0``.

    Both Hamiltonians are diagonalised once, so many ``(t, phi)`` points are cheap.
    ``sigma`` defaults to the dipolar Hamiltonian of the same couplings.
    """

    def __init__(self, c, p: float = 0.0, sigma: np.ndarray | None = None):
        c = exact.check_couplings(c)
        self.n = c.shape[0]
        self.p = p
        h0 = exact.build_double_quantum(c)
        if sigma is None:
            sigma = exact.build_dipolar(c)
        self.h0 = exact.diagonalize(h0)
        self.hf = self.h0 if p == 0 else exact.diagonalize(exact.build_forward(p, h0, sigma))
        self.iz = exact.collective_z(self.n)
        self.norm = iz_norm(self.n)

    def ideal(self, t: float) -> np.ndarray:
        """``I_z^0(t) = U0 Iz U0^dagger``."""
        return exact.evolve(self.h0, self.iz, t)

    def perturbed(self, t: float) -> np.ndarray:
        return exact.evolve(self.hf, self.iz, t)

    def spectrum(self, t: float) -> MqcSpectrum:
        return mqc_spectrum(self.ideal(t), self.perturbed(t))

    def signal(self, t: float, phis: Iterable[float]) -> np.ndarray:
        """Echo ``Tr[Iz U0^+ phi_z Up Iz Up^+ phi_z^+ U0] / Tr(Iz^2)`` for each angle."""
        a = self.ideal(t)
        b = self.perturbed(t)
        m = exact.magnetization(self.n)
        out = []
        for phi in phis:
            ph = np.exp(-1j * phi * m)
            rotated = ph[:, None] * b * ph.conj()[None, :]
            out.append(np.sum(a.T * rotated) / self.norm)
        return np.array(out, dtype=complex)

    def trace(self, t: float, n_phi: int | None = None) -> "EchoTrace":
        n_phi = default_phi_count(self.n) if n_phi is None else n_phi
        phis = phi_grid(n_phi)
        return EchoTrace(phis, self.signal(t, phis), t, self.p, self.n)


def echo_signal(c, p: float, t: float, phi: float, sigma_kind: str = "dipolar", sigma: np.ndarray | None = None) -> complex:
    """Single point of the simulated protocol.  ``sigma_kind="custom"`` uses ``sigma``."""
    if sigma_kind == "dipolar":
        sigma = None
    elif sigma_kind == "custom":
        if sigma is None:
            raise ValueError("sigma_kind='custom' needs a sigma operator")
    else:
        raise ValueError(f"unknown sigma_kind {sigma_kind!r}")
    return complex(EchoProtocol(c, p, sigma).signal(t, [phi])[0])


def default_phi_count(n: int) -> int:
    return 2 * n + 2


def phi_grid(count: int) -> np.ndarray:
    return 2 * np.pi * np.arange(count) / count


@dataclass
class EchoTrace:
    phis: np.ndarray
    signal: np.ndarray
    t: float = 0.0
    p: float = 0.0
    n: int | None = None

    def max_imag(self) -> float:
        return float(np.abs(np.imag(self.signal)).max())


def fourier_extract(trace: EchoTrace, n: int | None = None) -> MqcSpectrum:
    """Recover ``f_M`` from an echo trace on a uniform grid over ``[0, 2 pi)``.

    The grid must hold at least ``2 n + 2`` angles so orders ``|M| <= n`` do not alias.
    """
    n = trace.n if n is None else n
    phis = np.asarray(trace.phis, dtype=float)
    k = phis.size
    if n is None:
        n = (k - 2) // 2
    if k < default_phi_count(n):
        raise ValueError(f"{k} angles cannot resolve coherence orders up to {n}; need at least {2 * n + 2}")
    if not np.allclose(phis, phi_grid(k), atol=1e-12):
        raise ValueError("phi grid must be uniform on [0, 2pi) starting at 0")
    sig = np.asarray(trace.signal, dtype=complex)
    amps = {m: complex(np.mean(sig * np.exp(1j * m * phis))) for m in range(-n, n + 1)}
    return MqcSpectrum(amps, iz_norm(n))


def cluster_size(spec: MqcSpectrum) -> float:
    """``K = sum M^2 f_M / sum f_M`` using real parts."""
    total = spec.total().real
    if abs(total) < FIDELITY_FLOOR:
        raise ZeroDivisionError(f"echo fidelity {total:.3e} is too small to normalise the cluster size")
    return spec.second_moment() / total


def fidelity(spec: MqcSpectrum) -> float:
    return spec.total().real


def _commutator_z(op: np.ndarray) -> np.ndarray:
    m = exact.magnetization(_spins(op))
    return m[:, None] * op - op * m[None, :]


def oto_commutator(a_t: np.ndarray, b_t: np.ndarray) -> float:
    """``Tr{[Iz, a_t][Iz, b_t]^dagger} / Tr(Iz^2)`` (real part)."""
    if a_t.shape != b_t.shape:
        raise ValueError("operators have different dimensions")
    n = _spins(a_t)
    ca = _commutator_z(a_t)
    cb = _commutator_z(b_t)
    return float(np.real(np.sum(ca * cb.conj())) / iz_norm(n))


def otoc_general(a: np.ndarray, b: np.ndarray, h, t: float) -> complex:
    """Infinite-temperature OTOC ``Tr(A(t)^+ B^+ A(t) B) / (|A| |B|)``.

    ``|X| = sqrt(Tr[(X^+ X)^2])``.  With this choice the value is bounded by 1
    in modulus and equals 1 for ``A = B`` Hermitian at ``t = 0``.
    """
    if a.shape != b.shape:
        raise ValueError("operators have different dimensions")
    na = math.sqrt(np.real(np.trace((a.conj().T @ a) @ (a.conj().T @ a))))
    nb = math.sqrt(np.real(np.trace((b.conj().T @ b) @ (b.conj().T @ b))))
    if na == 0 or nb == 0:
        raise ZeroDivisionError("zero-norm operator in OTOC")
    at = exact.evolve(h, a, t)
    val = np.trace(at.conj().T @ b.conj().T @ at @ b)
    return complex(val / (na * nb))


# -- CSV output ---------------------------------------------------------------


def write_spectrum_csv(path: str | Path, spec: MqcSpectrum, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "re_fM", "im_fM"])
        for m in spec.orders:
            f = spec[m]
            w.writerow([m, repr(f.real), repr(f.imag)])


def write_k_trace_csv(path: str | Path, times, ks, fids, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ms", "K", "fidelity"])
        for t, k, f in zip(times, ks, fids):
            w.writerow([repr(float(t)), repr(float(k)), repr(float(f))])
