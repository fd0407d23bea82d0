from fractions import Fraction

import numpy as np
import pytest

from mbindex.chern import fhs_chern_number, magnetic_band_energies, streda_chern_number
from mbindex.fock import ground_space
from mbindex.models import (ModelSpec, build_model, fci_candidate, hofstadter_one_particle, one_particle_hamiltonian)


def test_zero_flux_band_edges():
    e = np.linalg.eigvalsh(hofstadter_one_particle(ModelSpec("hofstadter", 4, 4, alpha="0")))
    assert e.min() == pytest.approx(-4.0) and e.max() == pytest.approx(4.0)


def test_half_flux_chiral_symmetry():
    e = np.linalg.eigvalsh(hofstadter_one_particle(ModelSpec("hofstadter", 4, 4, alpha="1/2")))
    assert np.allclose(np.sort(e), np.sort(-e))


def test_third_flux_bands():
    h = hofstadter_one_particle(ModelSpec("hofstadter", 12, 12, alpha="1/3"))
    assert np.allclose(h, h.conj().T)
    e = np.linalg.eigvalsh(h)
    gaps = np.diff(e)
    # two spectral gaps separate three bands of 48 levels each
    assert gaps[47] > 1.0 and gaps[95] > 1.0
    assert e[47] < e[48]


def test_tknn_oracle():
    assert fhs_chern_number("1/3", 1) == pytest.approx(1.0, abs=1e-9)
    assert fhs_chern_number("1/4", 1) == pytest.approx(1.0, abs=1e-9)
    assert fhs_chern_number("1/3", 2) == pytest.approx(-1.0, abs=1e-9)
    for a, r in [("1/3", 1), ("1/4", 1), ("1/5", 2), ("2/5", 1)]:
        assert streda_chern_number(a, r) == round(fhs_chern_number(a, r))


def test_magnetic_bands_match_torus_spectrum():
    # the 12x12 torus samples the magnetic Brillouin zone on a grid; its band edges lie inside the bulk bands
    bands = magnetic_band_energies("1/3", nk=24)
    e = np.linalg.eigvalsh(hofstadter_one_particle(ModelSpec("hofstadter", 12, 12, alpha="1/3")))
    assert e[0] >= bands[:, 0].min() - 1e-9 and e[47] <= bands[:, 0].max() + 1e-9


def test_incommensurate_flux():
    with pytest.raises(ValueError):
        hofstadter_one_particle(ModelSpec("hofstadter", 4, 4, alpha="1/3"))


def test_gauge_covariance():
    a = np.linalg.eigvalsh(hofstadter_one_particle(ModelSpec("hofstadter", 6, 6, alpha="1/3")))
    b = np.linalg.eigvalsh(hofstadter_one_particle(ModelSpec("hofstadter", 6, 6, alpha="1/3", gauge="landau2")))
    assert np.allclose(a, b, atol=1e-9)


def test_vacuum_sector():
    m = build_model(ModelSpec("hofstadter", 4, 4, alpha="1/4", N=0))
    assert m.basis.dim == 1 and np.allclose(m.hamiltonian.dense, 0)


def test_many_body_matches_one_particle():
    spec = ModelSpec("hofstadter", 4, 2, alpha="1/2", N=3)
    e1 = np.linalg.eigvalsh(one_particle_hamiltonian(spec))
    e = np.linalg.eigvalsh(build_model(spec).hamiltonian.dense)
    assert e[0] == pytest.approx(e1[:3].sum())


def test_staggered_chain():
    m = build_model(ModelSpec("staggered_chain", 8, 1, delta=2.0, N=4))
    g = ground_space(m.hamiltonian)
    assert g.p == 1 and g.gap > 0.5
    with pytest.raises(ValueError):
        build_model(ModelSpec("staggered_chain", 7, 1, N=3))


def test_staggered_atomic_limit():
    m = build_model(ModelSpec("staggered_chain", 8, 1, t=1e-4, delta=2.0, N=4))
    g = ground_space(m.hamiltonian)
    assert g.gap == pytest.approx(4.0, abs=1e-3)
    occ = m.basis.occupations
    weight = np.abs(g.vectors[:, 0]) ** 2 @ occ
    assert np.allclose(weight[1::2], 1, atol=1e-6)  # low-potential sites are the odd ones


def test_atomic_insulator_product_state():
    m = build_model(ModelSpec("atomic_insulator", 4, 1, N=4))
    g = ground_space(m.hamiltonian)
    assert g.p == 1 and m.basis.dim == 1


def test_charge_conservation_all_models():
    specs = [ModelSpec("hofstadter", 4, 2, alpha="1/2", N=3, V=0.5),
             ModelSpec("staggered_chain", 6, 1, delta=1.0, N=3),
             ModelSpec("atomic_insulator", 4, 2, delta=1.0, N=3)]
    for s in specs:
        m = build_model(s)
        h = m.hamiltonian.dense
        assert np.allclose(h, h.conj().T)
        for term in m.terms:
            assert term.charge_conserving


def test_fci_defaults():
    s = fci_candidate()
    assert s.statistics == "hardcore_boson" and s.N == 2 and Fraction(s.alpha) == Fraction(1, 4)


def test_spec_roundtrip():
    s = ModelSpec("atomic_insulator", 4, 1, N=2, potential=(0.0, -1.0, 0.0, -1.0))
    assert ModelSpec.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        ModelSpec("kagome")
    with pytest.raises(ValueError):
        ModelSpec("hofstadter", t=float("nan"))
