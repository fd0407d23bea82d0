"""Model library: Hofstadter (one-particle and many-body), staggered chains, atomic insulators."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .fock import (FockBasis, Hamiltonian, LocalTerm, Statistics, assemble_hamiltonian, build_basis,
                   density_density_term, hopping_term, number_term)
from .lattice import TorusLattice, build_torus

MODEL_NAMES = ("hofstadter", "staggered_chain", "atomic_insulator")


@dataclass(frozen=True)
class ModelSpec:
    name: str = "hofstadter"
    L1: int = 4
    L2: int = 4
    statistics: str = "fermion"
    t: float = 1.0
    V: float = 0.0
    delta: float = 0.0
    alpha: str = "0"  # flux per plaquette as a rational string, e.g. "1/4"
    N: Optional[int] = None
    gauge: str = "landau1"
    potential: Optional[tuple] = None  # on-site energies for the atomic insulator

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}; choose from {MODEL_NAMES}")
        Statistics(self.statistics)
        for k in ("t", "V", "delta"):
            if not np.isfinite(getattr(self, k)):
                raise ValueError(f"parameter {k} must be finite")
        if self.gauge not in ("landau1", "landau2"):
            raise ValueError(f"unknown gauge {self.gauge!r}")
        Fraction(self.alpha)

    @property
    def flux(self) -> Fraction:
        return Fraction(self.alpha)

    @property
    def lattice(self) -> TorusLattice:
        return build_torus(self.L1, self.L2)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["potential"] is not None:
            d["potential"] = list(d["potential"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if "alpha" in d:
            d["alpha"] = str(d["alpha"])
        if d.get("potential") is not None:
            d["potential"] = tuple(float(x) for x in d["potential"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        return cls(**d)


def _check_commensurate(spec: ModelSpec):
    a = spec.flux
    if a == 0:
        return
    # the Landau gauge needs the gauge-dependent coordinate to close around the torus
    side = spec.L2 if spec.gauge == "landau1" else spec.L1
    if (a * side).denominator != 1:
        raise ValueError(f"flux {a} incommensurate with torus side {side}")
    if (a * spec.L1).denominator != 1:
        raise ValueError(f"flux {a} incommensurate with L1 = {spec.L1}")


def peierls_bonds(spec: ModelSpec) -> list[tuple[int, int, complex]]:
    """Hopping list (to, from, amplitude) with Landau-gauge Peierls phases.

    landau1: hops i -> i + e1 from row i2 carry -t exp(-2 pi i alpha i2).
    landau2: hops i -> i + e2 from column i1 carry -t exp(+2 pi i alpha i1).
    Both give flux alpha through every plaquette with the same orientation.
    """
    _check_commensurate(spec)
    lat = spec.lattice
    a = float(spec.flux)
    out = []
    for (i, j) in lat.bonds():
        i1, i2 = lat.coords(i)
        axis = 1 if lat.coords(j)[0] != i1 else 2
        phase = 1.0
        if spec.gauge == "landau1" and axis == 1:
            phase = np.exp(-2j * np.pi * a * i2)
        elif spec.gauge == "landau2" and axis == 2:
            phase = np.exp(2j * np.pi * a * i1)
        out.append((j, i, -spec.t * phase))
    return out


def hofstadter_one_particle(spec: ModelSpec) -> np.ndarray:
    lat = spec.lattice
    h = np.zeros((lat.dim, lat.dim), dtype=complex)
    for j, i, amp in peierls_bonds(spec):
        h[j, i] += amp
        h[i, j] += np.conj(amp)
    if spec.delta:
        h += np.diag(spec.delta * _stagger(lat))
    return h


def _stagger(lat: TorusLattice) -> np.ndarray:
    return (-1.0) ** lat.coord_array[:, 0]


def _sector(spec: ModelSpec, lat: TorusLattice) -> FockBasis:
    return build_basis(lat, spec.statistics, spec.N)


def hofstadter_many_body(spec: ModelSpec, basis: Optional[FockBasis] = None) -> list[LocalTerm]:
    basis = basis or _sector(spec, spec.lattice)
    terms = []
    for j, i, amp in peierls_bonds(spec):
        terms.append(hopping_term(basis, j, i, amp, label=f"hop{i}->{j}"))
    if spec.V:
        for i, j in spec.lattice.bonds():
            terms.append(density_density_term(basis, i, j, spec.V))
    if spec.delta:
        for k, v in enumerate(spec.delta * _stagger(spec.lattice)):
            terms.append(number_term(basis, k, v))
    return terms


def staggered_chain(spec: ModelSpec, basis: Optional[FockBasis] = None) -> list[LocalTerm]:
    """Hopping -t plus Delta (-1)^{i1} n_i.

    Defined on any torus with even L1; with L2 > 1 it is a stack of coupled
    chains (the hopping along axis 2 also has amplitude -t).
    """
    if spec.L1 % 2:
        raise ValueError("staggered chain needs even length")
    lat = spec.lattice
    basis = basis or _sector(spec, lat)
    terms = []
    if spec.t:
        for i, j in lat.bonds():
            terms.append(hopping_term(basis, j, i, -spec.t))
    for k, v in enumerate(spec.delta * _stagger(lat)):
        terms.append(number_term(basis, k, v))
    if spec.V:
        for i, j in lat.bonds():
            terms.append(density_density_term(basis, i, j, spec.V))
    return terms


def atomic_insulator(spec: ModelSpec, basis: Optional[FockBasis] = None) -> list[LocalTerm]:
    """On-site potentials only; default potential is Delta (-1)^{i1} (or -1 everywhere if Delta = 0)."""
    lat = spec.lattice
    basis = basis or _sector(spec, lat)
    if spec.potential is not None:
        pot = np.asarray(spec.potential, dtype=float)
        if pot.shape != (lat.dim,):
            raise ValueError("potential must list one energy per site")
    elif spec.delta:
        pot = spec.delta * _stagger(lat)
    else:
        pot = -np.ones(lat.dim)
    return [number_term(basis, k, v) for k, v in enumerate(pot)]


_BUILDERS = {
    "hofstadter": hofstadter_many_body,
    "staggered_chain": staggered_chain,
    "atomic_insulator": atomic_insulator,
}


@dataclass(frozen=True, eq=False)
class Model:
    spec: ModelSpec
    lattice: TorusLattice
    basis: FockBasis
    hamiltonian: Hamiltonian

    @property
    def terms(self):
        return self.hamiltonian.terms


def build_model(spec: ModelSpec) -> Model:
    lat = spec.lattice
    basis = _sector(spec, lat)
    terms = _BUILDERS[spec.name](spec, basis)
    return Model(spec, lat, basis, assemble_hamiltonian(basis, terms))


def one_particle_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """First-quantised matrix for the quadratic models (V must vanish)."""
    if spec.V:
        raise ValueError("interacting model has no one-particle Hamiltonian")
    lat = spec.lattice
    if spec.name == "hofstadter":
        return hofstadter_one_particle(spec)
    if spec.name == "staggered_chain":
        h = np.zeros((lat.dim, lat.dim), dtype=complex)
        for i, j in lat.bonds():
            h[i, j] -= spec.t
            h[j, i] -= spec.t
        return h + np.diag(spec.delta * _stagger(lat))
    terms = atomic_insulator(replace(spec, N=0))
    return np.diag([t.matrix.diagonal().sum() for t in terms]).astype(complex)


def fci_candidate(L1: int = 4, L2: int = 4, alpha: str = "1/4", N: Optional[int] = None) -> ModelSpec:
    """Hardcore-boson Hofstadter model at filling nu = 1/2 of the lowest band.

    nu = N / (alpha L1 L2); N defaults to half the flux quanta.
    """
    a = Fraction(alpha)
    nphi = a * L1 * L2
    if N is None:
        if (nphi / 2).denominator != 1:
            raise ValueError("nu = 1/2 needs an even number of flux quanta")
        N = int(nphi / 2)
    return ModelSpec("hofstadter", L1, L2, "hardcore_boson", alpha=str(a), N=N)
