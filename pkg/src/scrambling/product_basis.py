"""Product-operator basis combinatorics for N spin-1/2 systems.

A basis element is labelled by a tuple of single-spin symbols drawn from
``("id", "z", "x", "y")``.  Sites carrying ``x`` or ``y`` are *active*: they
flip during the coherence transfer described by that product operator.

The central object is the pair function :func:`l_pair`, which gives the
weight of the pair ``(u, v)`` in the expansion

    Tr{[Iz, A][Iz, B]^dagger} = sum_{u,v} a_u conj(b_v) l_pair(u, v)

for operators ``A = sum_u a_u P_u`` and ``B = sum_v b_v P_v`` written in the
orthonormal product basis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np

SYMBOLS = ("id", "z", "x", "y")
_CODE = {s: k for k, s in enumerate(SYMBOLS)}
_ACTIVE = frozenset(("x", "y"))
_PASSIVE = frozenset(("id", "z"))

ProductIndex = tuple[str, ...]


def product_index(symbols: Sequence[str]) -> ProductIndex:
    """Validate ``symbols`` and return them as a :data:`ProductIndex`."""
    u = tuple(symbols)
    if len(u) < 1:
        raise ValueError("a product index needs at least one spin")
    for s in u:
        if s not in _CODE:
            raise ValueError(f"unknown single-spin label {s!r}; expected one of {SYMBOLS}")
    return u


def _pair(u: Sequence[str], v: Sequence[str]) -> tuple[ProductIndex, ProductIndex]:
    u, v = product_index(u), product_index(v)
    if len(u) != len(v):
        raise ValueError(f"length mismatch: {len(u)} vs {len(v)}")
    return u, v


def iter_indices(n: int) -> Iterator[ProductIndex]:
    """All 4**n indices in lexicographic order with id < z < x < y."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return itertools.product(SYMBOLS, repeat=n)


def encode(u: Sequence[str]) -> int:
    """Position of ``u`` in :func:`iter_indices` order (base-4, first spin most significant)."""
    k = 0
    for s in product_index(u):
        k = 4 * k + _CODE[s]
    return k


def decode(k: int, n: int) -> ProductIndex:
    out = []
    for _ in range(n):
        k, r = divmod(k, 4)
        out.append(SYMBOLS[r])
    if k:
        raise ValueError("code out of range for n spins")
    return tuple(reversed(out))


def active_count(u: Sequence[str]) -> int:
    """Number of active (``x`` or ``y``) sites in ``u``."""
    return sum(1 for s in product_index(u) if s in _ACTIVE)


def hamming_z0(u: Sequence[str], v: Sequence[str]) -> int:
    """Hamming distance restricted to sites where either index holds ``id`` or ``z``."""
    u, v = _pair(u, v)
    return sum(1 for a, b in zip(u, v) if a != b and (a in _PASSIVE or b in _PASSIVE))


def hamming_xy(u: Sequence[str], v: Sequence[str]) -> int:
    """Hamming distance restricted to sites where either index holds ``x`` or ``y``."""
    u, v = _pair(u, v)
    return sum(1 for a, b in zip(u, v) if a != b and (a in _ACTIVE or b in _ACTIVE))


def xy_permutation_equivalent(u: Sequence[str], v: Sequence[str]) -> bool:
    """True when ``v`` is a rearrangement of the symbols of ``u``."""
    u, v = _pair(u, v)
    return sorted(u) == sorted(v)


def l_pair(u: Sequence[str], v: Sequence[str]) -> int:
    """Pair weight of ``(u, v)`` in the commutator norm expansion.

    Returns ``active_count(u)`` on the diagonal, +2 or -2 for pairs that agree
    on all passive sites and differ at exactly two active sites (+2 when the
    two differing sites are an x/y swap, -2 when both flip the same way), and 0
    otherwise.
    """
    u, v = _pair(u, v)
    if u == v:
        return active_count(u)
    if hamming_z0(u, v) == 0 and hamming_xy(u, v) == 2:
        return 2 if xy_permutation_equivalent(u, v) else -2
    return 0


@dataclass(frozen=True)
class CommutatorTerm:
    """One term ``phase * P_target`` of ``[Iz, P_u]``."""

    target: ProductIndex
    phase: complex


def commutator_expand(u: Sequence[str]) -> list[CommutatorTerm]:
    u = product_index(u)
    terms = []
    for j, s in enumerate(u):
        if s in _ACTIVE:
            flipped = "y" if s == "x" else "x"
            target = u[:j] + (flipped,) + u[j + 1:]
            terms.append(CommutatorTerm(target, 1j if s == "x" else -1j))
    return terms


@lru_cache(maxsize=8)
def _codes(n: int) -> np.ndarray:
    """(4**n, n) array of symbol codes in :func:`iter_indices` order."""
    k = np.arange(4**n)
    return np.stack([(k // 4 ** (n - 1 - j)) % 4 for j in range(n)], axis=1).astype(np.int8)


@lru_cache(maxsize=8)
def l_matrix(n: int) -> np.ndarray:
    """Dense ``4**n x 4**n`` table of :func:`l_pair` values (int8).

    Vectorised evaluation of the same rule as :func:`l_pair`; memory grows as
    16**n so this is meant for n <= 6.
    """
    if not 1 <= n <= 6:
        raise ValueError("l_matrix supports 1 <= n <= 6")
    c = _codes(n)
    active = c >= 2
    z0 = np.zeros((4**n, 4**n), dtype=np.int16)
    xy = np.zeros_like(z0)
    same_way = np.zeros_like(z0)  # differing active sites where u_j == x (and v_j == y)
    for j in range(n):
        cu = c[:, j][:, None]
        cv = c[:, j][None, :]
        diff = cu != cv
        au = active[:, j][:, None]
        av = active[:, j][None, :]
        z0 += diff & (~au | ~av)
        xy += diff & (au | av)
        same_way += diff & au & av & (cu == 2)
    out = np.zeros((4**n, 4**n), dtype=np.int8)
    cand = (z0 == 0) & (xy == 2)
    # With h_z0 = 0 and h_xy = 2 both differing sites are active on both sides;
    # an x/y swap has exactly one site with u_j = x.
    out[cand & (same_way == 1)] = 2
    out[cand & (same_way != 1)] = -2
    np.fill_diagonal(out, active.sum(axis=1))
    return out


def _as_vector(coeffs: Mapping[ProductIndex, complex] | np.ndarray, n: int) -> np.ndarray:
    if isinstance(coeffs, np.ndarray):
        if coeffs.shape != (4**n,):
            raise ValueError(f"coefficient vector must have shape ({4**n},)")
        return coeffs.astype(complex)
    vec = np.zeros(4**n, dtype=complex)
    for u, c in coeffs.items():
        if len(u) != n:
            raise ValueError("mismatched index lengths in coefficient map")
        vec[encode(u)] = c
    return vec


def _spin_count(coeffs) -> int:
    if isinstance(coeffs, np.ndarray):
        n = int(round(np.log(coeffs.size) / np.log(4)))
        if 4**n != coeffs.size:
            raise ValueError("coefficient vector length is not a power of 4")
        return n
    lengths = {len(u) for u in coeffs}
    if len(lengths) != 1:
        raise ValueError("mismatched index lengths in coefficient map")
    return lengths.pop()


def k_pair_sum(
    c0: Mapping[ProductIndex, complex] | np.ndarray,
    cp: Mapping[ProductIndex, complex] | np.ndarray,
    drop_cross_terms: bool = False,
    fidelity_norm: float = 1.0,
    sign_fault: bool = False,
) -> float:
    """Cluster size ``(1/fidelity_norm) * sum_{u,v} c0_u conj(cp_v) l_pair(u, v)``.

    ``c0`` and ``cp`` are either maps from :data:`ProductIndex` to coefficient
    or dense vectors in :func:`iter_indices` order.  With ``drop_cross_terms``
    only ``u == v`` contributes.  ``sign_fault`` flips the sign of the
    off-diagonal weights and exists only so the verification harness can show
    that it detects a wrong pair function.
    """
    if fidelity_norm == 0:
        raise ZeroDivisionError("fidelity normalisation is zero")
    if any(isinstance(c, Mapping) and not c for c in (c0, cp)):
        return 0.0
    n = _spin_count(c0)
    if _spin_count(cp) != n:
        raise ValueError("mismatched index lengths between c0 and cp")
    a = _as_vector(c0, n)
    b = _as_vector(cp, n)
    if drop_cross_terms:
        total = np.sum(a * np.conj(b) * np.diag(l_matrix(n)))
    else:
        lm = l_matrix(n).astype(float)
        if sign_fault:
            lm = np.where(np.eye(lm.shape[0], dtype=bool), lm, -lm)
        total = a @ (lm @ np.conj(b))
    return float(np.real(total / fidelity_norm))
