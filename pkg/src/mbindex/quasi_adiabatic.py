"""Many-body dressed charges, flux-threading and spectral-flow unitaries, the Locality Lemma."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, GroundSpace, Hamiltonian, LocalTerm, Spectrum, charge_diagonal, diagonalize
from .free_fermion import herm_expm, opnorm
from .lattice import Region, boundary_strip, default_strip_width
from .spectral_filter import FilterFunction, filter_current_eigenbasis, make_filter


def current_term(term: LocalTerm, q_diag: np.ndarray) -> sp.csr_matrix:
    """i[Q, H_X] for diagonal Q, as a sparse matrix."""
    coo = term.matrix.tocoo()
    vals = 1j * (q_diag[coo.row] - q_diag[coo.col]) * coo.data
    keep = vals != 0
    return sp.csr_matrix((vals[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape)


def crossing_terms(terms: Sequence[LocalTerm], region: Region) -> list[LocalTerm]:
    """Terms whose nominal support meets both the region and its complement."""
    out = []
    for t in terms:
        inside = sum(1 for s in t.support if s in region.sites)
        if 0 < inside < len(t.support):
            out.append(t)
    return out


@dataclass
class CurrentSplit:
    j_minus: sp.csr_matrix
    j_plus: sp.csr_matrix
    minus_terms: list
    plus_terms: list


def current_split(terms: Sequence[LocalTerm], q_diag: np.ndarray, region: Region, width: int) -> CurrentSplit:
    """J_pm = sum of i[Q, H_X] over terms crossing the pm boundary of a half torus."""
    sm = boundary_strip(region, "-", width)
    spl = boundary_strip(region, "+", width)
    dim = len(q_diag)
    jm = sp.csr_matrix((dim, dim), dtype=complex)
    jp = sp.csr_matrix((dim, dim), dtype=complex)
    mt, pt = [], []
    for t in crossing_terms(terms, region):
        a, b = sm.intersects(t.support), spl.intersects(t.support)
        if a and b:
            raise ValueError(f"term {t.label} crosses both boundaries; shrink the strips")
        if not (a or b):
            raise ValueError(f"term {t.label} crosses the region outside both strips")
        j = current_term(t, q_diag)
        if a:
            jm = jm + j
            mt.append(t)
        else:
            jp = jp + j
            pt.append(t)
    return CurrentSplit(jm.tocsr(), jp.tocsr(), mt, pt)


def filter_current(spec: Spectrum, f: FilterFunction, j) -> np.ndarray:
    """K = integral W(t) e^{itH} J e^{-itH}, evaluated exactly in the eigenbasis."""
    if sp.issparse(j) and j.nnz == 0:
        n = spec.vectors.shape[0]
        return np.zeros((n, n), dtype=complex)
    return spec.from_eigen(filter_current_eigenbasis(f, spec.energies, spec.to_eigen(j)))


@dataclass(eq=False)
class DressedCharge:
    """Q, its boundary generators K_pm and the dressed charge Qbar = Q - K_- - K_+."""

    region: Region
    width: int
    q_diag: np.ndarray
    q_minus_diag: np.ndarray
    q_plus_diag: np.ndarray
    k_minus: np.ndarray
    k_plus: np.ndarray
    split: CurrentSplit
    spectrum: Spectrum
    filter: FilterFunction
    ground: GroundSpace

    @property
    def q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def k(self) -> np.ndarray:
        return self.k_minus + self.k_plus

    @property
    def qbar(self) -> np.ndarray:
        return self.q - self.k_minus - self.k_plus

    @property
    def qbar_minus(self) -> np.ndarray:
        return np.diag(self.q_minus_diag) - self.k_minus

    @property
    def qbar_plus(self) -> np.ndarray:
        return np.diag(self.q_plus_diag) - self.k_plus

    def generator(self, side: str) -> np.ndarray:
        """Q - K_side, whose 2 pi exponential threads flux across that boundary."""
        return self.q - (self.k_minus if side == "-" else self.k_plus)

    @cached_property
    def residual(self) -> float:
        """||[Qbar, P]||."""
        return self.ground.commutator_norm(self.qbar)

    def gap_identity_residual(self) -> float:
        """||[K, P] - [Q, P]|| = ||[Qbar, P]||."""
        return self.residual

    def filtered_terms(self, terms: Sequence[LocalTerm]) -> np.ndarray:
        """Sum of the per-term generators K_b for the given current-carrying terms."""
        dim = len(self.q_diag)
        j = sp.csr_matrix((dim, dim), dtype=complex)
        for t in terms:
            j = j + current_term(t, self.q_diag)
        return filter_current(self.spectrum, self.filter, j)


def dressed_charge(h: Hamiltonian, region: Region, g: GroundSpace, f: Optional[FilterFunction] = None,
                   width: Optional[int] = None) -> DressedCharge:
    if width is None:
        width = default_strip_width(region)
    spec = g.spectrum if g.spectrum is not None else diagonalize(h)
    if f is None:
        f = make_filter(g.gap)
    elif f.gap > g.gap * (1 + 1e-9):
        raise ValueError(f"filter gap {f.gap} exceeds the spectral gap {g.gap}")
    b = h.basis
    q = charge_diagonal(b, region)
    sm = boundary_strip(region, "-", width)
    spl = boundary_strip(region, "+", width)
    qm = charge_diagonal(b, region.intersection(sm))
    qp = charge_diagonal(b, region.intersection(spl))
    cs = current_split(h.terms, q, region, width)
    km = filter_current(spec, f, cs.j_minus)
    kp = filter_current(spec, f, cs.j_plus)
    return DressedCharge(region, width, q, qm, qp, km, kp, cs, spec, f, g)


def flux_unitary(d: DressedCharge, side: str = "-", form: str = "global") -> np.ndarray:
    """One flux quantum across the chosen boundary.

    form="global": exp(2 pi i (Q - K_side)); form="local": exp(2 pi i Qbar_side).
    The two agree up to the integer-spectrum factor exp(2 pi i (Q - Q_side)).
    """
    if side not in ("-", "+"):
        raise ValueError("side must be '-' or '+'")
    if form == "global":
        return herm_expm(d.generator(side))
    if form == "local":
        return herm_expm(d.qbar_minus if side == "-" else d.qbar_plus)
    raise ValueError(f"unknown form {form!r}")


@dataclass
class FluxReport:
    unitarity: float
    commutator: float  # ||[e^{2 pi i Qbar_side}, P]||
    factorization: float  # ||e^{2 pi i Qbar} - e^{2 pi i (Q - K_-)} e^{2 pi i (Q - K_+)}||
    local_factorization: float  # same with the strip-local forms e^{2 pi i Qbar_pm}
    full_commutator: float  # ||[e^{2 pi i Qbar}, P]||


def flux_report(d: DressedCharge, side: str = "-", u: Optional[np.ndarray] = None) -> FluxReport:
    if u is None:
        u = flux_unitary(d, side)
    full = herm_expm(d.qbar)
    gm = u if side == "-" else flux_unitary(d, "-")
    gp = u if side == "+" else flux_unitary(d, "+")
    lm = herm_expm(d.qbar_minus)
    lp = herm_expm(d.qbar_plus)
    one = np.eye(len(u))
    return FluxReport(
        unitarity=opnorm(u.conj().T @ u - one),
        commutator=d.ground.commutator_norm(u),
        factorization=opnorm(full - gm @ gp),
        local_factorization=opnorm(full - lm @ lp),
        full_commutator=d.ground.commutator_norm(full),
    )


def spectral_flow(d: DressedCharge, phi: float, variant: str = "full") -> np.ndarray:
    """V(phi) = exp(i phi (Q - K)) exp(-i phi Q); variant "minus" uses K_- only."""
    if variant == "full":
        gen = d.qbar
    elif variant == "minus":
        gen = d.generator("-")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return herm_expm(gen, phi) * np.exp(-1j * phi * d.q_diag)[None, :]


def spectral_flow_residual(d: DressedCharge, phi: float, v: Optional[np.ndarray] = None) -> float:
    """||V^dag P V - P(phi)|| with P(phi) = e^{i phi Q} P e^{-i phi Q}."""
    if v is None:
        v = spectral_flow(d, phi)
    psi = d.ground.vectors
    # V^dag P V = (V^dag Psi)(V^dag Psi)^dag, P(phi) = (e^{i phi Q} Psi)(...)^dag
    a = v.conj().T @ psi
    b = np.exp(1j * phi * d.q_diag)[:, None] * psi
    return opnorm(a @ a.conj().T - b @ b.conj().T)


def locality_lemma_check(v_minus: np.ndarray, v_plus: np.ndarray, g: GroundSpace,
                         v: Optional[np.ndarray] = None) -> tuple[float, float]:
    """(||PVP - P V_- P V_+ P||, 1 - ||P V_- P||), V defaulting to V_- V_+."""
    if v is None:
        v = v_minus @ v_plus
    a = g.restrict(v)
    am = g.restrict(v_minus)
    ap = g.restrict(v_plus)
    return opnorm(a - am @ ap), 1.0 - opnorm(am)
