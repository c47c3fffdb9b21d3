"""Dense exact dynamics for small spin-1/2 systems.

Operators are dense ``2**n x 2**n`` arrays in the Zeeman product basis.  Basis
state ``k`` has spin ``j`` up (m = +1/2) when bit ``n - 1 - j`` of ``k`` is 0,
so spin 0 is the most significant bit, matching ``np.kron`` ordering.

Couplings are angular frequencies in rad/ms and times are in ms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .product_basis import SYMBOLS, ProductIndex, decode

MAX_EXACT_N = 12
MAX_EXPAND_N = 8

# Adamantane line width; the unit convention is not fixed by the source data.
ADAMANTANE_D_KHZ = 13.0

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_SP = np.array([[0, 1], [0, 0]], dtype=complex)
_SM = np.array([[0, 0], [1, 0]], dtype=complex)
_ID = np.eye(2, dtype=complex)
SINGLE_SPIN = {"id": _ID, "x": _SX, "y": _SY, "z": _SZ, "+": _SP, "-": _SM}


UNIT_CONVENTIONS = ("angular", "cyclic")


def khz_to_rad_per_ms(f_khz: float, convention: str = "angular") -> float:
    """Convert a coupling quoted in kHz to the value used in the equations of motion.

    ``"angular"`` reads the number as a cyclic frequency and returns
    ``2 pi f`` rad/ms; ``"cyclic"`` plugs ``f`` in directly as 1/ms.
    """
    if convention == "angular":
        return 2 * math.pi * f_khz
    if convention == "cyclic":
        return float(f_khz)
    raise ValueError(f"unknown unit convention {convention!r}; expected one of {UNIT_CONVENTIONS}")


def adamantane_coupling(convention: str = "angular") -> float:
    return khz_to_rad_per_ms(ADAMANTANE_D_KHZ, convention)


# -- coupling matrices -------------------------------------------------------


def check_couplings(d, max_n: int = MAX_EXACT_N) -> np.ndarray:
    """Validate a coupling matrix and return it as a float array."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("coupling matrix must be square")
    n = d.shape[0]
    if not 1 <= n <= max_n:
        raise ValueError(f"spin count {n} outside supported range 1..{max_n}")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12 * max(1.0, np.abs(d).max())):
        raise ValueError("coupling matrix must be symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("coupling matrix must have a zero diagonal")
    return d


def all_to_all(n: int, d: float = 1.0) -> np.ndarray:
    c = np.full((n, n), float(d))
    np.fill_diagonal(c, 0.0)
    return c


def chain(n: int, d: float = 1.0) -> np.ndarray:
    """Open nearest-neighbour chain."""
    c = np.zeros((n, n))
    i = np.arange(n - 1)
    c[i, i + 1] = c[i + 1, i] = d
    return c


def random_gaussian(n: int, scale: float = 1.0, seed: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = np.triu(rng.normal(0.0, scale, (n, n)), 1)
    return c + c.T


def load_couplings(path: str | Path, n: int | None = None) -> np.ndarray:
    """Read a coupling CSV with header ``i,j,d_rad_per_ms`` (0-based spin indices).

    Missing pairs are zero.  ``n`` defaults to one more than the largest index.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["i", "j", "d_rad_per_ms"]:
            raise ValueError(f"{path}: expected header i,j,d_rad_per_ms, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            try:
                i, j, val = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if i == j or i < 0 or j < 0:
                raise ValueError(f"{path}:{lineno}: invalid pair ({i}, {j})")
            rows.append((i, j, val))
    size = n if n is not None else 1 + max((max(i, j) for i, j, _ in rows), default=0)
    c = np.zeros((size, size))
    for i, j, val in rows:
        c[i, j] = c[j, i] = val
    return check_couplings(c)


def save_couplings(path: str | Path, d) -> None:
    d = check_couplings(d)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "d_rad_per_ms"])
        for i, j in zip(*np.triu_indices(d.shape[0], 1)):
            if d[i, j] != 0:
                w.writerow([int(i), int(j), repr(float(d[i, j]))])


# -- operators ---------------------------------------------------------------


def _check_n(n: int, max_n: int = MAX_EXACT_N) -> None:
    if not 1 <= n <= max_n:
        raise ValueError(f"spin count {n} outside supported range 1..{max_n}")


def site_operator(n: int, j: int, label: str) -> np.ndarray:
    """Single-spin operator ``label`` acting on spin ``j`` of ``n``."""
    _check_n(n)
    op = np.ones((1, 1), dtype=complex)
    for k in range(n):
        op = np.kron(op, SINGLE_SPIN[label] if k == j else _ID)
    return op


def magnetization(n: int) -> np.ndarray:
    """Total m quantum number of each Zeeman basis state."""
    _check_n(n)
    k = np.arange(2**n)
    down = np.zeros(2**n, dtype=int)
    for j in range(n):
        down += (k >> j) & 1
    return (n - 2 * down) / 2


def collective_z(n: int) -> np.ndarray:
    return np.diag(magnetization(n)).astype(complex)


def phase_rotation(phi: float, n: int) -> np.ndarray:
    """Diagonal rotation ``exp(-i phi Iz)``."""
    return np.diag(np.exp(-1j * phi * magnetization(n)))


def _pair_sum(c, terms) -> np.ndarray:
    c = check_couplings(c)
    n = c.shape[0]
    h = np.zeros((2**n, 2**n), dtype=complex)
    ops = {lab: [site_operator(n, j, lab) for j in range(n)] for lab in {a for a, _, _ in terms} | {b for _, b, _ in terms}}
    for i in range(n):
        for j in range(i + 1, n):
            if c[i, j] == 0:
                continue
            for a, b, w in terms:
                h += c[i, j] * w * (ops[a][i] @ ops[b][j])
    return h


def build_dipolar(c) -> np.ndarray:
    """Secular dipolar Hamiltonian ``sum_{i<j} d_ij [2 IzIz - (IxIx + IyIy)]``."""
    return _pair_sum(c, [("z", "z", 2.0), ("x", "x", -1.0), ("y", "y", -1.0)])


def build_double_quantum(c) -> np.ndarray:
    """Double-quantum Hamiltonian ``sum_{i<j} d_ij (I+I+ + I-I-)``."""
    return _pair_sum(c, [("+", "+", 1.0), ("-", "-", 1.0)])


def build_forward(p: float, h0: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Perturbed forward Hamiltonian ``(1 - p) h0 + p sigma``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"perturbation strength p={p} outside [0, 1]")
    if h0.shape != sigma.shape:
        raise ValueError("h0 and sigma have different dimensions")
    return (1.0 - p) * h0 + p * sigma


def is_hermitian(h: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.abs(h).max()))
    return float(np.abs(h - h.conj().T).max()) <= rtol * scale


@dataclass(frozen=True)
class Diagonalized:
    """Hermitian operator stored as its eigendecomposition; reused across times."""

    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.size

    def propagator(self, t: float, sign: int = 1) -> np.ndarray:
        phase = np.exp(-1j * sign * self.energies * t)
        return (self.vectors * phase) @ self.vectors.conj().T


def diagonalize(h: np.ndarray) -> Diagonalized:
    if not is_hermitian(h):
        raise ValueError("Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    # Re-orthonormalise so propagators are unitary to rounding.
    q, r = np.linalg.qr(v)
    q = q * np.sign(np.diag(r).real)
    return Diagonalized(w, q)


def evolve(h, obs: np.ndarray, t: float, sign: int = 1) -> np.ndarray:
    """Return ``U obs U^dagger`` with ``U = exp(-i sign h t)``.

    ``h`` may be a dense Hermitian array or a :class:`Diagonalized`; pass the
    latter when evolving at many times under the same Hamiltonian.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    hd = h if isinstance(h, Diagonalized) else diagonalize(h)
    if obs.shape != (hd.dim, hd.dim):
        raise ValueError("observable and Hamiltonian dimensions differ")
    if t == 0:
        return obs.astype(complex, copy=True)
    # Work in the eigenbasis: U obs U^+ = V (e^{-iEt} * (V^+ obs V) * e^{iEt}) V^+
    v = hd.vectors
    phase = np.exp(-1j * sign * hd.energies * t)
    inner = v.conj().T @ obs @ v
    inner = phase[:, None] * inner * phase.conj()[None, :]
    return v @ inner @ v.conj().T


def propagator_expm(h: np.ndarray, t: float, sign: int = 1) -> np.ndarray:
    """``exp(-i sign h t)`` by scaling and squaring; independent of :func:`diagonalize`."""
    return sla.expm(-1j * sign * t * h)


# -- product-basis expansion --------------------------------------------------


def _basis_map() -> np.ndarray:
    """(4, 4) map from the pair index ``2a + b`` of matrix element (a, b) to
    ``Tr(P_k^dagger .)`` for the normalised single-spin set ``sigma_k / sqrt 2``."""
    m = np.zeros((4, 4), dtype=complex)
    for k, lab in enumerate(SYMBOLS):
        sigma = _ID if lab == "id" else 2 * SINGLE_SPIN[lab]
        m[k] = (sigma.conj() / math.sqrt(2)).reshape(4)
    return m


def basis_vector(obs: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Coefficients ``C_u = Tr(P_u^dagger obs)`` as a dense vector of length 4**n.

    The basis ``P_u`` is orthonormal under the trace inner product (Pauli
    strings divided by ``2**(n/2)``); entries follow
    :func:`scrambling.product_basis.iter_indices` order.  With ``normalize``
    the coefficients are divided by ``sqrt(Tr(Iz^2))``.
    """
    dim = obs.shape[0]
    n = int(round(math.log2(dim)))
    if obs.shape != (2**n, 2**n):
        raise ValueError("observable is not a square 2**n operator")
    if n > MAX_EXPAND_N:
        raise ValueError(f"product-basis expansion limited to n <= {MAX_EXPAND_N}")
    t = np.asarray(obs, dtype=complex).reshape((2,) * (2 * n))
    # interleave (row_j, col_j) pairs so each spin owns one axis of size 4
    order = [ax for j in range(n) for ax in (j, n + j)]
    t = t.transpose(order).reshape((4,) * n)
    m = _basis_map()
    for j in range(n):
        t = np.tensordot(m, t, axes=([1], [j]))
        t = np.moveaxis(t, 0, j)
    vec = t.reshape(4**n)
    if normalize:
        vec = vec / math.sqrt(n * 2**n / 4)
    return vec


def product_basis_coefficients(obs: np.ndarray, normalize: bool = False, tol: float = 0.0) -> dict[ProductIndex, complex]:
    """Map of nonzero product-basis coefficients (``|C_u| > tol``)."""
    vec = basis_vector(obs, normalize)
    n = int(round(math.log2(obs.shape[0])))
    return {decode(int(k), n): complex(vec[k]) for k in np.flatnonzero(np.abs(vec) > tol)}


def from_basis_vector(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`basis_vector` (without normalisation)."""
    n = int(round(math.log(vec.size, 4)))
    m = _basis_map()
    # P_k = conj of the rows of m reshaped back, because m holds conj(P_k)
    t = np.asarray(vec, dtype=complex).reshape((4,) * n)
    for j in range(n):
        t = np.tensordot(m.conj().T, t, axes=([1], [j]))
        t = np.moveaxis(t, 0, j)
    t = t.reshape([2] * (2 * n))
    inv = np.argsort([ax for j in range(n) for ax in (j, n + j)])
    return t.transpose(inv).reshape(2**n, 2**n)
