import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbindex.fock import (GapError, assemble_hamiltonian, build_basis, charge_diagonal, default_probes,
                          ground_space, hopping_term, number_term, topological_order_deviation,
                          translation_unitary)
from mbindex.lattice import build_torus, half_torus_region, region_from_sites


def test_sector_dimensions():
    assert build_basis(build_torus(4, 1), "fermion", 2).dim == 6
    assert build_basis(build_torus(4, 4), "hardcore_boson", 4).dim == 1820
    with pytest.raises(ValueError):
        build_basis(build_torus(6, 1), "fermion", 7)


def test_charge_operator():
    t = build_torus(4, 1)
    b = build_basis(t, "fermion", 2)
    assert np.allclose(charge_diagonal(b, region_from_sites(t, range(4))), 2)
    assert np.allclose(charge_diagonal(b, region_from_sites(t, [])), 0)
    q = charge_diagonal(b, half_torus_region(t, 1))
    vals, counts = np.unique(q, return_counts=True)
    assert list(vals) == [0, 1, 2] and list(counts) == [1, 4, 1]


def test_hopping_eigenvalues():
    t = build_torus(2, 1)
    b = build_basis(t, "fermion", 1)
    h = assemble_hamiltonian(b, [hopping_term(b, 0, 1, 0.7)])
    assert np.allclose(np.linalg.eigvalsh(h.dense), [-0.7, 0.7])
    assert np.allclose(assemble_hamiltonian(b, []).dense, 0)


def _dense_fermion_ops(n):
    """Jordan-Wigner annihilators on the full 2^n space, site k = bit k."""
    a = np.array([[0, 1], [0, 0]])
    z = np.diag([1, -1])
    ops = []
    for k in range(n):
        m = np.array([[1.0]])
        for j in range(n):
            # kron order: highest bit first
            f = a if j == k else (z if j < k else np.eye(2))
            m = np.kron(f, m)
        ops.append(m)
    return ops


def test_hopping_matches_jordan_wigner():
    n = 5
    t = build_torus(n, 1)
    b = build_basis(t, "fermion", None)
    c = _dense_fermion_ops(n)
    for i, j in [(0, 3), (4, 1), (2, 3)]:
        amp = 0.3 + 0.4j
        ref = amp * c[i].T @ c[j] + np.conj(amp) * c[j].T @ c[i]
        got = assemble_hamiltonian(b, [hopping_term(b, i, j, amp)]).dense
        assert np.allclose(got, ref[np.ix_(b.states, b.states)])


def test_ground_space_diag():
    g = ground_space(np.diag([0.0, 0.0, 1.0]))
    assert g.p == 2 and g.gap == pytest.approx(1.0)
    with pytest.raises(GapError):
        ground_space(np.zeros((3, 3)))


def test_topological_order_deviation_trivial_cases():
    g = ground_space(np.diag([0.0, 1.0, 2.0]))
    assert topological_order_deviation(g, [np.diag([1.0, 5.0, 2.0])]) == 0.0
    g2 = ground_space(np.diag([0.0, 0.0, 1.0]))
    assert topological_order_deviation(g2, [np.eye(3)]) == pytest.approx(0.0)
    assert topological_order_deviation(g2, [np.diag([1.0, 0.0, 0.0])]) == pytest.approx(0.5)


def _parity(perm):
    perm = list(perm)
    inv = sum(1 for a, b in itertools.combinations(range(len(perm)), 2) if perm[a] > perm[b])
    return inv % 2


@pytest.mark.parametrize("shape,shift", [((4, 1), (1, 0)), ((6, 1), (2, 0)), ((2, 3), (1, 1)), ((3, 2), (0, 1))])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_translation_sign_matches_permutation_parity(shape, shift, n):
    t = build_torus(*shape)
    b = build_basis(t, "fermion", n)
    u = translation_unitary(b, shift)
    c = t.coord_array
    image = ((c[:, 0] + shift[0]) % t.L1) * t.L2 + (c[:, 1] + shift[1]) % t.L2
    for col, s in enumerate(b.states):
        occ = [k for k in range(t.dim) if s >> k & 1]
        imgs = [int(image[k]) for k in occ]
        sign = (-1) ** _parity(imgs)
        row = b.index(sum(1 << k for k in imgs))
        assert u[row, col] == sign
    assert np.allclose(u.T @ u, np.eye(b.dim))


def test_translation_wraps_to_identity():
    t = build_torus(6, 1)
    for n in (2, 3):
        b = build_basis(t, "fermion", n)
        assert np.allclose(translation_unitary(b, (0, 0)), np.eye(b.dim))
        assert np.allclose(translation_unitary(b, (6, 0)), np.eye(b.dim))
        u1 = translation_unitary(b, (1, 0))
        assert np.allclose(np.linalg.matrix_power(u1, 6), np.eye(b.dim))


def test_translation_covariance_of_charge():
    t = build_torus(6, 1)
    b = build_basis(t, "fermion", 3)
    u = translation_unitary(b, (1, 0))
    g = half_torus_region(t, 1)
    q = np.diag(charge_diagonal(b, g))
    shifted = region_from_sites(t, [(k - 1) % 6 for k in g.sites])
    assert np.allclose(u.T @ q @ u, np.diag(charge_diagonal(b, shifted)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 4), st.floats(-2, 2), st.floats(-2, 2))
def test_terms_conserve_charge(n, re, im):
    t = build_torus(4, 1)
    b = build_basis(t, "fermion", None)
    h = assemble_hamiltonian(b, [hopping_term(b, 0, 2, complex(re, im)), number_term(b, 1, re)]).dense
    ntot = b.occupations.sum(axis=1)
    assert np.allclose(ntot[:, None] * h, h * ntot[None, :])


def test_default_probes_count():
    b = build_basis(build_torus(4, 1), "fermion", 2)
    assert len(default_probes(b)) == 4 + 3 * 4
