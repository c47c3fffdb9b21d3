import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrambling import exact
from scrambling.product_basis import (
    CommutatorTerm,
    active_count,
    commutator_expand,
    decode,
    encode,
    hamming_xy,
    hamming_z0,
    iter_indices,
    k_pair_sum,
    l_matrix,
    l_pair,
    product_index,
    xy_permutation_equivalent,
)

labels = st.sampled_from(["id", "z", "x", "y"])


def index_pairs(max_n=5):
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(st.lists(labels, min_size=n, max_size=n), st.lists(labels, min_size=n, max_size=n))
    )


@pytest.mark.parametrize("u, expected", [(("x", "y", "z", "id"), 2), (("id", "id", "id"), 0), (("x",) * 5, 5)])
def test_active_count(u, expected):
    assert active_count(u) == expected


@pytest.mark.parametrize(
    "u, v, expected",
    [(("z", "x"), ("id", "x"), 1), (("z", "x"), ("z", "y"), 0), (("id", "z", "x"), ("z", "id", "x"), 2)],
)
def test_hamming_z0(u, v, expected):
    assert hamming_z0(u, v) == expected


@pytest.mark.parametrize(
    "u, v, expected",
    [(("x", "y", "z"), ("y", "x", "z"), 2), (("x", "z"), ("x", "z"), 0), (("x", "x", "id"), ("y", "y", "id"), 2)],
)
def test_hamming_xy(u, v, expected):
    assert hamming_xy(u, v) == expected


@pytest.mark.parametrize(
    "u, v, expected",
    [(("x", "y", "id"), ("y", "x", "id"), True), (("x", "x", "z"), ("y", "y", "z"), False), (("x", "z"), ("x", "z"), True)],
)
def test_permutation_equivalence(u, v, expected):
    assert xy_permutation_equivalent(u, v) is expected


@pytest.mark.parametrize(
    "u, v, expected",
    [
        (("x", "y", "z", "id"), ("x", "y", "z", "id"), 2),
        (("x", "y", "id"), ("y", "x", "id"), 2),
        (("x", "x", "z"), ("y", "y", "z"), -2),
        (("x", "z", "id"), ("x", "id", "z"), 0),
    ],
)
def test_l_pair_examples(u, v, expected):
    assert l_pair(u, v) == expected


@pytest.mark.parametrize("fn", [hamming_z0, hamming_xy, xy_permutation_equivalent, l_pair])
def test_length_mismatch_rejected(fn):
    with pytest.raises(ValueError):
        fn(("x", "y"), ("x",))


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        product_index(("x", "q"))


def test_commutator_expand_examples():
    assert commutator_expand(("x", "id")) == [CommutatorTerm(("y", "id"), 1j)]
    assert commutator_expand(("y", "z")) == [CommutatorTerm(("x", "z"), -1j)]
    assert commutator_expand(("z", "id", "z")) == []


def _pauli(u):
    op = np.ones((1, 1), dtype=complex)
    for s in u:
        op = np.kron(op, np.eye(2) if s == "id" else 2 * exact.SINGLE_SPIN[s])
    return op / np.sqrt(2 ** len(u))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_commutator_expand_matches_matrices(n):
    iz = exact.collective_z(n)
    for u in iter_indices(n):
        p = _pauli(u)
        direct = iz @ p - p @ iz
        rebuilt = sum((t.phase * _pauli(t.target) for t in commutator_expand(u)), np.zeros_like(p))
        assert np.abs(direct - rebuilt).max() < 1e-14


def test_encode_decode_roundtrip():
    for k, u in enumerate(iter_indices(3)):
        assert encode(u) == k
        assert decode(k, 3) == u


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_properties_exhaustive(n):
    # nonzero off-diagonal weights need h_z0 = 0 and h_xy = 2; the table is symmetric
    lm = l_matrix(n)
    assert np.array_equal(lm, lm.T)
    idx = list(iter_indices(n))
    nz = np.argwhere(lm != 0)
    for a, b in nz:
        if a != b:
            assert hamming_z0(idx[a], idx[b]) == 0
            assert hamming_xy(idx[a], idx[b]) == 2


@pytest.mark.parametrize("n", [1, 2, 3])
def test_l_matrix_matches_scalar_rule(n):
    idx = list(iter_indices(n))
    lm = l_matrix(n)
    for a, b in itertools.product(range(len(idx)), repeat=2):
        assert lm[a, b] == l_pair(idx[a], idx[b])


@given(index_pairs())
def test_l_pair_symmetric(uv):
    u, v = uv
    assert l_pair(u, v) == l_pair(v, u)


@given(st.lists(labels, min_size=1, max_size=6))
def test_expand_count_and_activity(u):
    terms = commutator_expand(u)
    assert len(terms) == active_count(u)
    for t in terms:
        assert active_count(t.target) == active_count(u)
        assert sum(a != b for a, b in zip(u, t.target)) == 1


def test_pair_sum_examples():
    assert k_pair_sum({("x", "y"): 1}, {("x", "y"): 1}) == 2
    iz = exact.product_basis_coefficients(exact.collective_z(3), normalize=True)
    assert k_pair_sum(iz, iz) == 0


def test_pair_sum_errors():
    with pytest.raises(ZeroDivisionError):
        k_pair_sum({("x",): 1}, {("x",): 1}, fidelity_norm=0)
    with pytest.raises(ValueError):
        k_pair_sum({("x",): 1}, {("x", "y"): 1})


def test_pair_sum_drop_cross_terms():
    c = {("x", "y"): 1.0, ("y", "x"): 1.0}
    assert k_pair_sum(c, c) == 8  # 2 + 2 diagonal, +2 +2 cross
    assert k_pair_sum(c, c, drop_cross_terms=True) == 4


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_pair_sum_equals_commutator_norm(n):
    rng = np.random.default_rng(n)
    o = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    iz = exact.collective_z(n)
    comm = iz @ o - o @ iz
    direct = np.trace(comm @ comm.conj().T).real
    c = exact.basis_vector(o)
    assert abs(k_pair_sum(c, c) - direct) <= 1e-10 * max(1.0, direct)


def test_pair_sum_random_evolution_n3():
    c = exact.random_gaussian(3, 1.0, seed=7)
    t = 0.7 / np.abs(c[np.triu_indices(3, 1)]).mean()
    a = exact.evolve(exact.build_double_quantum(c), exact.collective_z(3), t)
    iz = exact.collective_z(3)
    comm = iz @ a - a @ iz
    oracle = np.trace(comm @ comm.conj().T).real / np.trace(iz @ iz).real
    v = exact.basis_vector(a, normalize=True)
    assert abs(k_pair_sum(v, v) - oracle) < 1e-9
