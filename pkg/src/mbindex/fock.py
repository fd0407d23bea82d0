"""Occupation-number bases, local terms, Hamiltonians and ground spaces.

States are integers whose bit k is the occupation of site k.  Fermionic signs
follow Jordan-Wigner ordering along the linear site index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from math import comb
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import Region, TorusLattice


class Statistics(str, enum.Enum):
    FERMION = "fermion"
    HARDCORE_BOSON = "hardcore_boson"
    SPIN_HALF = "spin_half"  # n_i = (1 + sigma^z_i) / 2; same algebra as hardcore bosons

    @property
    def fermionic(self) -> bool:
        return self is Statistics.FERMION


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += x & 1
        x = x >> 1
    return c


@dataclass(frozen=True, eq=False)
class FockBasis:
    lattice: TorusLattice
    statistics: Statistics
    n_particles: Optional[int]
    states: np.ndarray  # sorted int64 bitstrings

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_sites(self) -> int:
        return self.lattice.dim

    def index(self, state) -> np.ndarray:
        """Positions of the given bitstrings; raises if any is missing."""
        state = np.asarray(state, dtype=np.int64)
        pos = np.searchsorted(self.states, state)
        pos = np.minimum(pos, self.dim - 1)
        if np.any(self.states[pos] != state):
            raise KeyError("state not in basis")
        return pos

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, n_sites) 0/1 array."""
        k = np.arange(self.n_sites)
        return ((self.states[:, None] >> k[None, :]) & 1).astype(np.int8)

    def sign(self, s: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """(-1)^(number of particles strictly between sites lo and hi)."""
        if not self.statistics.fermionic or hi - lo < 2:
            return np.ones(len(s))
        mask = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
        return 1.0 - 2.0 * (popcount(s & mask) & 1)


def build_basis(t: TorusLattice, statistics=Statistics.FERMION, n_particles: Optional[int] = None) -> FockBasis:
    statistics = Statistics(statistics)
    n = t.dim
    if n > 62:
        raise ValueError("bitstring basis limited to 62 sites")
    if n_particles is None:
        states = np.arange(1 << n, dtype=np.int64)
    else:
        if not 0 <= n_particles <= n:
            raise ValueError(f"sector N={n_particles} empty on {n} sites")
        if comb(n, n_particles) > 5_000_000:
            raise ValueError("sector too large for this basis")
        states = np.array(sorted(sum(1 << k for k in c) for c in combinations(range(n), n_particles)),
                          dtype=np.int64)
    return FockBasis(t, statistics, n_particles, states)


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """A term H_X with nominal support X acting on the full basis."""

    support: frozenset
    matrix: sp.csr_matrix
    charge_conserving: bool = True
    label: str = ""

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.conj().T
        return d.nnz == 0 or abs(d).max() < tol

    def scaled(self, c: float) -> "LocalTerm":
        return LocalTerm(self.support, (c * self.matrix).tocsr(), self.charge_conserving, self.label)


def hopping_matrix(b: FockBasis, i: int, j: int, amp: complex = 1.0) -> sp.csr_matrix:
    """amp c_i^dag c_j + h.c. on basis b."""
    if i == j:
        raise ValueError("hopping needs two distinct sites")
    st = b.states
    m = (((st >> j) & 1) == 1) & (((st >> i) & 1) == 0)
    src = np.nonzero(m)[0]
    s = st[m]
    tgt = s ^ (1 << i) ^ (1 << j)
    lo, hi = min(i, j), max(i, j)
    vals = amp * b.sign(s, lo, hi)
    rows = b.index(tgt)
    mat = sp.coo_matrix((vals, (rows, src)), shape=(b.dim, b.dim)).tocsr()
    return (mat + mat.conj().T).tocsr()


def number_diagonal(b: FockBasis, sites: Sequence[int]) -> np.ndarray:
    sites = list(sites)
    if not sites:
        return np.zeros(b.dim)
    return b.occupations[:, sites].sum(axis=1).astype(float)


def hopping_term(b: FockBasis, i: int, j: int, amp: complex = 1.0, label: str = "") -> LocalTerm:
    return LocalTerm(frozenset((i, j)), hopping_matrix(b, i, j, amp), True, label or f"hop{i},{j}")


def number_term(b: FockBasis, i: int, coeff: float, label: str = "") -> LocalTerm:
    return LocalTerm(frozenset((i,)), sp.diags(coeff * number_diagonal(b, [i])).tocsr(), True,
                     label or f"n{i}")


def density_density_term(b: FockBasis, i: int, j: int, v: float, label: str = "") -> LocalTerm:
    occ = b.occupations
    d = v * (occ[:, i] * occ[:, j]).astype(float)
    return LocalTerm(frozenset((i, j)), sp.diags(d).tocsr(), True, label or f"nn{i},{j}")


def charge_diagonal(b: FockBasis, r: Region) -> np.ndarray:
    return number_diagonal(b, sorted(r.sites))


def charge_operator(b: FockBasis, r: Region) -> np.ndarray:
    """Q_R = sum_{i in R} n_i as a dense diagonal matrix."""
    return np.diag(charge_diagonal(b, r))


def total_number(b: FockBasis) -> np.ndarray:
    return np.diag(number_diagonal(b, range(b.n_sites)))


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    basis: FockBasis
    terms: tuple
    sparse: sp.csr_matrix

    @cached_property
    def dense(self) -> np.ndarray:
        return self.sparse.toarray()

    @property
    def dim(self) -> int:
        return self.basis.dim


def assemble_hamiltonian(b: FockBasis, terms: Sequence[LocalTerm]) -> Hamiltonian:
    mat = sp.csr_matrix((b.dim, b.dim), dtype=complex)
    for term in terms:
        if term.matrix.shape != (b.dim, b.dim):
            raise ValueError(f"term {term.label} has wrong shape")
        if not term.is_hermitian():
            raise ValueError(f"term {term.label} is not Hermitian")
        mat = mat + term.matrix
    return Hamiltonian(b, tuple(terms), mat.tocsr())


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    def to_eigen(self, a) -> np.ndarray:
        v = self.vectors
        return v.conj().T @ (a @ v)

    def from_eigen(self, a) -> np.ndarray:
        v = self.vectors
        return v @ a @ v.conj().T


@dataclass(frozen=True, eq=False)
class GroundSpace:
    vectors: np.ndarray  # (dim, p)
    energies: np.ndarray  # multiplet energies
    gap: float
    split_tol: float
    spectrum: Optional[Spectrum] = None

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def spread(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    @cached_property
    def projector(self) -> np.ndarray:
        return self.vectors @ self.vectors.conj().T

    def restrict(self, a) -> np.ndarray:
        """p x p block Psi^dag A Psi."""
        psi = self.vectors
        return psi.conj().T @ (a @ psi)

    def commutator_norm(self, a) -> float:
        """||[A, P]|| computed through the ground vectors."""
        psi = self.vectors
        ap = a @ psi
        leak_r = ap - psi @ (psi.conj().T @ ap)
        pa = (psi.conj().T @ a)
        leak_l = pa - (pa @ psi) @ psi.conj().T
        return float(max(np.linalg.norm(leak_r, 2), np.linalg.norm(leak_l, 2)))


class GapError(ValueError):
    pass


def diagonalize(h, max_dense: int = 4096) -> Spectrum:
    mat = h.dense if isinstance(h, Hamiltonian) else (h.toarray() if sp.issparse(h) else np.asarray(h))
    if mat.shape[0] > max_dense:
        raise ValueError("dense diagonalisation limited to dim <= %d; use ground_space with k" % max_dense)
    if np.allclose(mat.imag, 0):
        e, v = np.linalg.eigh(mat.real)
    else:
        e, v = np.linalg.eigh(mat)
    return Spectrum(e, v)


def ground_space(h, p_hint="auto", split_tol: Optional[float] = None,
                 spectrum: Optional[Spectrum] = None, max_dense: int = 4096, k: int = 12) -> GroundSpace:
    """Lowest multiplet of H and the gap above it.

    Dense diagonalisation up to `max_dense`; above that the lowest k levels are
    found iteratively and no full spectrum is attached.
    """
    mat = h.sparse if isinstance(h, Hamiltonian) else h
    dim = mat.shape[0]
    if spectrum is None and dim <= max_dense:
        spectrum = diagonalize(h, max_dense)
    if spectrum is not None:
        e, v = spectrum.energies, spectrum.vectors
    else:
        from scipy.sparse.linalg import eigsh
        e, v = eigsh(sp.csr_matrix(mat), k=min(k, dim - 2), which="SA")
        order = np.argsort(e)
        e, v = e[order], v[:, order]
    scale = max(1.0, float(np.max(np.abs(e))))
    if split_tol is None:
        split_tol = 1e-8 * scale
    if p_hint == "auto":
        p = int(np.sum(e - e[0] <= split_tol))
    else:
        p = int(p_hint)
        if not 1 <= p < len(e):
            raise ValueError(f"bad multiplet size {p}")
    if len(e) == 1 and spectrum is not None:
        # one-state sector: nothing to excite into
        return GroundSpace(v, e.copy(), np.inf, float(split_tol), spectrum)
    if p >= len(e):
        raise GapError("no clear multiplet: all computed levels lie within split_tol")
    gap = float(e[p] - e[p - 1])
    if gap <= split_tol:
        raise GapError(f"no clear multiplet: gap {gap:.3e} <= split_tol {split_tol:.3e}")
    return GroundSpace(v[:, :p], e[:p].copy(), gap, float(split_tol), spectrum)


def topological_order_deviation(g: GroundSpace, probes) -> float:
    """max_O ||P O P - tr(P O)/p P|| over the probes (operator norm on ran P)."""
    if g.p == 1:
        return 0.0
    worst = 0.0
    for o in probes:
        m = o.matrix if isinstance(o, LocalTerm) else o
        block = g.restrict(m)
        dev = block - np.trace(block) / g.p * np.eye(g.p)
        worst = max(worst, float(np.linalg.norm(dev, 2)))
    return worst


def default_probes(b: FockBasis) -> list:
    """On-site densities, nearest-neighbour hoppings and density pairs."""
    probes = [number_term(b, i, 1.0) for i in range(b.n_sites)]
    for i, j in b.lattice.bonds():
        probes.append(hopping_term(b, i, j, 1.0))
        probes.append(hopping_term(b, i, j, 1j))
        probes.append(density_density_term(b, i, j, 1.0))
    return probes


def translation_unitary(b: FockBasis, shift: tuple[int, int]) -> np.ndarray:
    """U moving every particle from site (i1, i2) to (i1 + s1, i2 + s2).

    For fermions U maps c^dag_{k1} ... c^dag_{kN}|0> (k ascending) to the
    image operators in the same order, which is then reordered into
    ascending Jordan-Wigner order; the sign is the parity of that sort.
    """
    t = b.lattice
    s1, s2 = shift
    c = t.coord_array
    image = ((c[:, 0] + s1) % t.L1) * t.L2 + (c[:, 1] + s2) % t.L2
    occ = b.occupations.astype(bool)
    new_states = np.zeros(b.dim, dtype=np.int64)
    for k in range(b.n_sites):
        new_states |= occ[:, k].astype(np.int64) << int(image[k])
    signs = np.ones(b.dim)
    if b.statistics.fermionic:
        # inversions of the image positions among occupied sites
        k = np.arange(b.n_sites)
        crossing = ((k[:, None] < k[None, :]) & (image[:, None] > image[None, :])).astype(float)
        o = occ.astype(float)
        inv = np.einsum("rk,kl,rl->r", o, crossing, o)
        signs = 1.0 - 2.0 * (np.rint(inv).astype(np.int64) % 2)
    rows = b.index(new_states)
    u = np.zeros((b.dim, b.dim))
    u[rows, np.arange(b.dim)] = signs
    return u


def expectation_values(g: GroundSpace, a) -> np.ndarray:
    """<psi_k|A|psi_k> for each ground vector."""
    psi = g.vectors
    return np.einsum("ik,ik->k", psi.conj(), a @ psi)
