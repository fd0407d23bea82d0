import numpy as np
import pytest

from mbindex import braiding as br
from mbindex.fock import ground_space
from mbindex.free_fermion import herm_expm, opnorm
from mbindex.lattice import half_torus_region, rectangle_region
from mbindex.models import ModelSpec, build_model
from mbindex.quasi_adiabatic import dressed_charge, flux_unitary
from mbindex.transport import identity_process, translation_process, transport_split


@pytest.fixture(scope="module")
def sheet():
    m = build_model(ModelSpec("staggered_chain", 4, 4, delta=2.0, N=2))
    g = ground_space(m.hamiltonian)
    lc = br.loop_charge(m.hamiltonian, half_torus_region(m.lattice, 1), g)
    return m, g, lc


@pytest.fixture(scope="module")
def chain8():
    m = build_model(ModelSpec("staggered_chain", 8, 1, delta=2.0, N=4))
    g = ground_space(m.hamiltonian)
    d = dressed_charge(m.hamiltonian, half_torus_region(m.lattice, 1), g)
    return m, g, d


def test_identity_process(chain8):
    m, g, d = chain8
    u = identity_process(m.basis.dim)
    z = br.z_minus(u, d)
    assert np.allclose(z, np.eye(m.basis.dim))
    ts = transport_split(u, m.basis, d.region, d.width)
    assert br.core_identity_check(g, u, d, ts) < 1e-12
    rep = br.interpolation_check(g, u, d, ts, np.linspace(0, 2 * np.pi, 11))
    assert rep.residuals[0] < 1e-9


def test_z_minus_commuting_unitary(chain8):
    m, g, d = chain8
    # U commuting with Q - K_- gives Z_- = 1
    u = herm_expm(d.generator("-"), 0.37)
    assert opnorm(br.z_minus(u, d) - np.eye(len(u))) < 1e-10


def test_translation_core_identity():
    m = build_model(ModelSpec("staggered_chain", 12, 1, delta=2.0, N=6))
    g = ground_space(m.hamiltonian)
    d = dressed_charge(m.hamiltonian, half_torus_region(m.lattice, 1), g, width=3)
    u = translation_process(m.basis, (2, 0))
    ts = transport_split(u, m.basis, d.region, d.width)
    z = br.z_minus(u, d)
    assert opnorm(z.conj().T @ z - np.eye(len(z))) < 1e-10
    assert g.commutator_norm(z) < 1e-3
    assert br.core_identity_check(g, u, d, ts, z) < 1e-3


def test_braid_commutator_self(chain8):
    m, g, d = chain8
    f = flux_unitary(d, "-")
    b = br.braid_commutator(g, f, f)
    assert abs(b.phase) < 1e-12 and b.deviation < 1e-12


def test_empty_string_is_identity(sheet):
    m, g, lc = sheet
    s = br.string_operator(lc, [])
    assert np.allclose(s.unitary, np.eye(m.basis.dim))
    r = rectangle_region(m.lattice, range(4), (3, 0))
    q = br.excitation_charge(g, s, r)
    assert q.epsilon == 0 and q.conservation == 0


def test_full_boundary_string_is_loop(sheet):
    m, g, _ = sheet
    lc = br.loop_charge(m.hamiltonian, rectangle_region(m.lattice, (0, 1), (3, 0)), g)
    assert len(lc.boundary_terms) == 8
    s = br.string_operator(lc, lc.boundary_terms, "magnus2", n_steps=512)
    assert s.closed
    assert opnorm(s.unitary - lc.loop_unitary()) < 1e-4
    exact = br.string_operator(lc, lc.boundary_terms, "exact")
    assert opnorm(exact.unitary - lc.loop_unitary()) < 1e-12


def test_magnus_converges(sheet):
    m, g, lc = sheet
    bonds = br.boundary_bonds_on_cut(lc, 0, [0, 1])
    exact = br.string_operator(lc, bonds, "exact").unitary
    errs = [opnorm(br.string_operator(lc, bonds, "magnus2", n).unitary - exact) for n in (64, 128, 256)]
    assert errs[2] < errs[1] < errs[0]
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)  # second order


def test_string_endpoints(sheet):
    m, g, lc = sheet
    bonds = br.boundary_bonds_on_cut(lc, 0, [0, 1])
    assert len(bonds) == 2
    ends = br.string_endpoints(m.lattice, bonds)
    assert len(ends) == 2
    gap_bonds = br.boundary_bonds_on_cut(lc, 0, [0, 2])
    with pytest.raises(ValueError):
        br.string_endpoints(m.lattice, gap_bonds)
    with pytest.raises(ValueError):
        br.string_operator(lc, bonds, "rk4")


def test_endpoint_charges_conserved(sheet):
    m, g, lc = sheet
    s = br.string_operator(lc, br.boundary_bonds_on_cut(lc, 0, [0, 1]))
    q = br.excitation_charge(g, s, rectangle_region(m.lattice, range(4), (3, 0)))
    assert q.conservation < 1e-10
    with pytest.raises(ValueError):
        br.excitation_charge(g, s, rectangle_region(m.lattice, range(4), range(4)))


def test_empty_loop_checks(sheet):
    m, g, lc = sheet
    s = br.string_operator(lc, br.boundary_bonds_on_cut(lc, 0, [0, 1]))
    empty = br.closed_loop(br.loop_charge(m.hamiltonian, rectangle_region(m.lattice, (2, 3), (2, 3)), g))
    with pytest.raises(ValueError):
        br.braid_phase(g, s, empty)
    ph = br.braid_phase(g, s, empty, allow_empty=True)
    assert np.isfinite(ph.phase)
    straddle = br.closed_loop(br.loop_charge(m.hamiltonian, rectangle_region(m.lattice, (1, 2), (3, 0)), g))
    with pytest.raises(ValueError):
        br.braid_phase(g, s, straddle)
