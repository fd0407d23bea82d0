import numpy as np
import pytest

from mbindex.fock import build_basis, ground_space, hopping_term, number_term
from mbindex.free_fermion import herm_expm, opnorm
from mbindex.lattice import build_torus, half_torus_region, region_from_sites
from mbindex.models import ModelSpec, build_model
from mbindex.quasi_adiabatic import (current_split, dressed_charge, flux_report, flux_unitary,
                                     locality_lemma_check, spectral_flow, spectral_flow_residual)
from mbindex.fock import charge_diagonal


def _setup(spec, width=None):
    m = build_model(spec)
    g = ground_space(m.hamiltonian)
    d = dressed_charge(m.hamiltonian, half_torus_region(m.lattice, 1), g, width=width)
    return m, g, d


@pytest.fixture(scope="module")
def chain8():
    return _setup(ModelSpec("staggered_chain", 8, 1, delta=2.0, N=4))


@pytest.fixture(scope="module")
def chain12():
    return _setup(ModelSpec("staggered_chain", 12, 1, delta=2.0, N=6), 3)


def test_no_crossing_terms():
    t = build_torus(8, 1)
    b = build_basis(t, "fermion", 2)
    terms = [number_term(b, k, 1.0) for k in range(8)]
    cs = current_split(terms, charge_diagonal(b, half_torus_region(t, 1)), half_torus_region(t, 1), 1)
    assert cs.j_minus.nnz == 0 and cs.j_plus.nnz == 0


def test_ring_crossing_bonds():
    t = build_torus(6, 1)
    b = build_basis(t, "fermion", 2)
    terms = [hopping_term(b, (k + 1) % 6, k, -1.0, label=f"{k}") for k in range(6)]
    g = half_torus_region(t, 1)
    cs = current_split(terms, charge_diagonal(b, g), g, 1)
    assert [tm.label for tm in cs.minus_terms] == ["0"]
    assert [tm.label for tm in cs.plus_terms] == ["3"]


@pytest.mark.parametrize("spec", [ModelSpec("staggered_chain", 8, 1, delta=2.0, N=4),
                                  ModelSpec("hofstadter", 4, 2, alpha="1/2", N=3),
                                  ModelSpec("staggered_chain", 4, 4, delta=2.0, N=2)])
def test_current_split_sums_to_full_current(spec):
    m = build_model(spec)
    g = half_torus_region(m.lattice, 1)
    q = charge_diagonal(m.basis, g)
    cs = current_split(m.terms, q, g, 1)
    h = m.hamiltonian.dense
    full = 1j * (q[:, None] * h - h * q[None, :])
    assert opnorm((cs.j_minus + cs.j_plus).toarray() - full) < 1e-12


def test_commuting_charge_gives_zero_generator():
    m, g, d = _setup(ModelSpec("atomic_insulator", 6, 1, delta=1.0, N=3))
    assert np.allclose(d.k, 0) and np.allclose(d.qbar, d.q)
    # K = 0: the flux unitary is e^{2 pi i Q}, the identity on an integer spectrum
    assert np.allclose(flux_unitary(d, "-"), np.eye(m.basis.dim))


def test_dressed_charge_identities(chain8):
    m, g, d = chain8
    p = g.projector
    assert opnorm((d.k @ p - p @ d.k) - (d.q @ p - p @ d.q)) < 1e-10
    assert d.residual < 1e-8
    assert g.commutator_norm(herm_expm(d.qbar)) < 1e-8
    ntot = m.basis.occupations.sum(axis=1).astype(float)
    for k in (d.k_minus, d.k_plus):
        assert opnorm(ntot[:, None] * k - k * ntot[None, :]) < 1e-12


def test_flux_unitary(chain8, chain12):
    for m, g, d in (chain8, chain12):
        u = flux_unitary(d, "-")
        assert opnorm(u.conj().T @ u - np.eye(len(u))) < 1e-10
    # one-sided flux commutes with P up to boundary leakage that shrinks with size
    c8 = chain8[1].commutator_norm(flux_unitary(chain8[2], "-"))
    c12 = chain12[1].commutator_norm(flux_unitary(chain12[2], "-"))
    assert c12 < c8 / 5
    with pytest.raises(ValueError):
        flux_unitary(chain8[2], "left")


def test_flux_deep_gap():
    m, g, d = _setup(ModelSpec("staggered_chain", 12, 1, delta=4.0, N=6), 3)
    assert g.commutator_norm(flux_unitary(d, "-")) < 1e-4


def test_flux_factorization(chain12):
    m, g, d = chain12
    r = flux_report(d)
    assert r.full_commutator < 1e-8 and r.factorization < r.local_factorization


def test_spectral_flow(chain8):
    m, g, d = chain8
    assert np.allclose(spectral_flow(d, 0.0), np.eye(m.basis.dim))
    assert spectral_flow_residual(d, np.pi) < 1e-6
    v = spectral_flow(d, 2 * np.pi, "minus")
    assert opnorm(v - flux_unitary(d, "-")) < 1e-9


def test_locality_lemma(chain8):
    m, g, d = chain8
    one = np.eye(m.basis.dim)
    assert locality_lemma_check(one, one, g) == pytest.approx((0.0, 0.0), abs=1e-12)
    a, b = locality_lemma_check(flux_unitary(d, "-"), flux_unitary(d, "+"), g)
    assert a < 1e-3 and b < 1e-3


def test_locality_lemma_product_state():
    m, g, d = _setup(ModelSpec("atomic_insulator", 6, 1, delta=1.0, N=3))
    qm = np.diag(d.q_minus_diag)
    twist = herm_expm(qm, 0.7)
    assert locality_lemma_check(twist, twist.conj().T, g) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_generator_decays_away_from_boundary(chain12):
    m, g, d = chain12
    # distance of site i1 to the minus cut between columns 0 and 1
    norms = {}
    for i in range(12):
        n = np.diag(m.basis.occupations[:, i].astype(float))
        dist = min(abs(i - 0.5), abs(i - 12.5))
        norms.setdefault(dist, []).append(opnorm(d.k_minus @ n - n @ d.k_minus))
    seq = [max(norms[k]) for k in sorted(norms)[:4]]
    assert all(a > b for a, b in zip(seq, seq[1:]))
