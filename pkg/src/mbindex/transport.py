"""Charge-transport splitting, the many-body index and the worked examples (LSM, Hall, ADZ)."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .fock import (FockBasis, GroundSpace, Hamiltonian, LocalTerm, charge_diagonal, expectation_values,
                   topological_order_deviation, translation_unitary)
from .free_fermion import herm_expm, opnorm
from .lattice import Region, boundary_strip, strip_columns
from .quasi_adiabatic import DressedCharge


class TopologicalOrderError(ValueError):
    pass


# ---------------------------------------------------------------- processes

@dataclass(frozen=True, eq=False)
class GeneratorTerm:
    """G_X(s) = coefficient(s) * matrix, with nominal support X."""

    support: frozenset
    matrix: object  # sparse or dense Hermitian
    coefficient: Callable[[float], float]
    label: str = ""

    def at(self, s: float):
        return self.coefficient(s) * self.matrix


@dataclass(frozen=True, eq=False)
class GeneratorFamily:
    """Charge-conserving generator G(s) = sum_X G_X(s) on s in [0, 1].

    `breakpoints` lists the s values where the coefficients are not smooth;
    the integrator restarts there.
    """

    terms: tuple
    breakpoints: tuple = (0.0, 1.0)

    def at(self, s: float, subset: Optional[Sequence[GeneratorTerm]] = None):
        terms = self.terms if subset is None else subset
        out = 0
        for t in terms:
            out = out + t.at(s)
        return out


def _piecewise_solve(rhs, y0, breakpoints, rtol, atol, method="DOP853"):
    y = y0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        sol = solve_ivp(rhs, (a, b), y, method=method, rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"operator ODE failed on [{a}, {b}]: {sol.message}")
        y = sol.y[:, -1]
    return y


def _dense(a, n):
    if isinstance(a, (int, float)) and a == 0:
        return np.zeros((n, n), dtype=complex)
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def realize_unitary(family: GeneratorFamily, dim: int, rtol: float = 1e-11, atol: float = 1e-12) -> np.ndarray:
    """Solve dU/ds = -i U G(s), U(0) = 1, so that U^dag A U evolves by dA/ds = i[G, A]."""
    def rhs(s, y):
        u = y.reshape(dim, dim)
        g = family.at(s)
        gu = (g.T @ u.T).T if sp.issparse(g) else u @ g
        return (-1j * gu).ravel()

    y = _piecewise_solve(rhs, np.eye(dim, dtype=complex).ravel(), family.breakpoints, rtol, atol)
    return y.reshape(dim, dim)


def heisenberg_evolve(family: GeneratorFamily, a0: np.ndarray, subset=None, rtol: float = 1e-11,
                      atol: float = 1e-12) -> np.ndarray:
    """A(1) from dA/ds = i[G_subset(s), A], A(0) = a0."""
    n = a0.shape[0]

    def rhs(s, y):
        a = y.reshape(n, n)
        g = family.at(s, subset)
        if isinstance(g, int):
            return np.zeros_like(y)
        ga = g @ a
        ag = (g.T @ a.T).T if sp.issparse(g) else a @ g
        return (1j * (ga - ag)).ravel()

    y = _piecewise_solve(rhs, a0.astype(complex).ravel(), family.breakpoints, rtol, atol)
    return y.reshape(n, n)


@dataclass(eq=False)
class ProcessUnitary:
    """A charge-conserving process U.

    kind is one of "translation" (shift stored), "generator" (family stored and
    realized by integration), "conjugator" (T_pm given through unitaries W_pm
    with T_pm = W_pm^dag Q W_pm - Q), or "explicit".
    """

    matrix: np.ndarray
    kind: str = "explicit"
    shift: Optional[tuple] = None
    family: Optional[GeneratorFamily] = None
    conjugators: Optional[dict] = None
    label: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def unitarity(self) -> float:
        return opnorm(self.matrix.conj().T @ self.matrix - np.eye(self.dim))

    def charge_conservation(self, basis: FockBasis) -> float:
        ntot = basis.occupations.sum(axis=1).astype(float)
        return opnorm(ntot[:, None] * self.matrix - self.matrix * ntot[None, :])

    def inverse(self) -> "ProcessUnitary":
        if self.kind == "translation":
            return ProcessUnitary(self.matrix.conj().T, "translation", tuple(-s for s in self.shift),
                                  label=f"{self.label}^-1")
        if self.kind == "generator":
            rev = tuple(GeneratorTerm(t.support, -t.matrix, (lambda s, c=t.coefficient: c(1 - s)), t.label)
                        for t in self.family.terms)
            bps = tuple(sorted(1 - b for b in self.family.breakpoints))
            return ProcessUnitary(self.matrix.conj().T, "generator", family=GeneratorFamily(rev, bps),
                                  label=f"{self.label}^-1")
        return ProcessUnitary(self.matrix.conj().T, "explicit", label=f"{self.label}^-1")


def identity_process(dim: int) -> ProcessUnitary:
    return ProcessUnitary(np.eye(dim, dtype=complex), "translation", shift=(0, 0), label="identity")


def translation_process(basis: FockBasis, shift: tuple[int, int]) -> ProcessUnitary:
    return ProcessUnitary(translation_unitary(basis, shift).astype(complex), "translation", tuple(shift),
                          label=f"translate{tuple(shift)}")


def generator_process(family: GeneratorFamily, dim: int, label: str = "") -> ProcessUnitary:
    return ProcessUnitary(realize_unitary(family, dim), "generator", family=family, label=label)


# ---------------------------------------------------------------- splitting

@dataclass
class TransportSplit:
    t_minus: np.ndarray
    t_plus: np.ndarray
    offset: float  # a: fractional offset removed from T_- (and added to T_+)
    j: int  # integer part of the shift (kept at 0)
    pre_shift_spread: float  # max distance of spec(Q_- + T_-) from Z + a
    integrality_minus: float  # after the shift
    integrality_plus: float
    splitting_residual: float  # ||T_- + T_+ - (U^dag Q U - Q)||
    method: str = ""


def _offset(eigs: np.ndarray) -> tuple[float, float]:
    """Common fractional part a in [-1/2, 1/2) and the spread about Z + a."""
    z = np.mean(np.exp(2j * np.pi * eigs))
    a = float(np.angle(z) / (2 * np.pi)) if abs(z) > 1e-12 else 0.0
    if a >= 0.5:
        a -= 1.0
    d = eigs - a
    return a, float(np.max(np.abs(d - np.rint(d)))) if len(d) else 0.0


def _integrality(op: np.ndarray) -> float:
    e = np.linalg.eigvalsh(op)
    return float(np.max(np.abs(e - np.rint(e))))


def translation_transport(basis: FockBasis, region: Region, shift: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form T_pm for a translation moving particles by `shift`.

    U^dag n_i U = n_{i - s}, so U^dag Q U - Q = sum_j (1[j + s in Gamma] - 1[j in Gamma]) n_j.
    Each column with a nonzero coefficient is attributed to the nearer cut.
    """
    lat = basis.lattice
    ax = region.axis
    L = lat.axis_length(ax)
    s = shift[ax - 1]
    other = shift[2 - ax]
    if other % lat.axis_length(3 - ax):
        raise ValueError("translation must be along the cut axis of the region")
    c = lat.coord_array[:, ax - 1]
    in_g = region.mask
    coef = np.zeros(lat.dim)
    for k in range(lat.dim):
        kk = lat.index(*(lat.coords(k)[0] + shift[0], lat.coords(k)[1] + shift[1]))
        coef[k] = float(in_g[kk]) - float(in_g[k])
    # distance of each column to the minus cut (between 0 and 1) and plus cut
    col_pos = c.astype(float)
    dm = np.abs(((col_pos - 0.5) + L / 2) % L - L / 2)
    dp = np.abs(((col_pos - (L // 2 + 0.5)) + L / 2) % L - L / 2)
    minus = (coef != 0) & (dm < dp)
    plus = (coef != 0) & ~minus
    occ = basis.occupations.astype(float)
    tm = occ[:, minus] @ coef[minus]
    tp = occ[:, plus] @ coef[plus]
    return np.diag(tm), np.diag(tp)


def classify_terms(terms: Sequence, region: Region, width: int):
    """Split generator terms into (G_-, G_m, G_+) by intersection with the boundary strips."""
    sm = boundary_strip(region, "-", width)
    spl = boundary_strip(region, "+", width)
    gm, gmid, gp = [], [], []
    for t in terms:
        a, b = sm.intersects(t.support), spl.intersects(t.support)
        if a and b:
            raise ValueError(f"generator term {t.label} touches both boundary strips")
        (gm if a else gp if b else gmid).append(t)
    return gm, gmid, gp


def transport_split(u: ProcessUnitary, basis: FockBasis, region: Region, width: int,
                    method: Optional[str] = None, rtol: float = 1e-11) -> TransportSplit:
    """T_pm for process u and charge Q of the half torus `region`."""
    method = method or u.kind
    q_diag = charge_diagonal(basis, region)
    q = np.diag(q_diag)
    if method == "translation":
        if u.kind != "translation":
            raise ValueError("translation method needs a translation process")
        tm, tp = translation_transport(basis, region, u.shift)
    elif method == "generator":
        if u.family is None:
            raise ValueError("generator method needs a generator family")
        for t in u.family.terms:
            m = _dense(t.matrix, basis.dim)
            if opnorm(_number_commutator(basis, m)) > 1e-10:
                raise ValueError(f"generator term {t.label} does not conserve charge")
        gm, _, gp = classify_terms(u.family.terms, region, width)
        tm = heisenberg_evolve(u.family, q, gm, rtol=rtol) - q if gm else np.zeros_like(q, dtype=complex)
        tp = heisenberg_evolve(u.family, q, gp, rtol=rtol) - q if gp else np.zeros_like(q, dtype=complex)
    elif method == "conjugator":
        wm = u.conjugators.get("-")
        wp = u.conjugators.get("+")
        tm = wm.conj().T @ q @ wm - q if wm is not None else np.zeros_like(q, dtype=complex)
        tp = wp.conj().T @ q @ wp - q if wp is not None else np.zeros_like(q, dtype=complex)
    elif method == "explicit":
        x = u.matrix.conj().T @ q @ u.matrix - q
        sm = boundary_strip(region, "-", width).mask
        spl = boundary_strip(region, "+", width).mask
        ms = np.ix_(sm, sm)
        tm = np.zeros_like(x)
        tm[ms] = x[ms]
        tp = x - tm
    else:
        raise ValueError(f"unknown transport method {method!r}")
    return _finish_split(u, basis, region, width, q, tm, tp, method)


def _number_commutator(basis: FockBasis, m: np.ndarray) -> np.ndarray:
    ntot = basis.occupations.sum(axis=1).astype(float)
    return ntot[:, None] * m - m * ntot[None, :]


def _finish_split(u, basis, region, width, q, tm, tp, method) -> TransportSplit:
    sm = boundary_strip(region, "-", width)
    spl = boundary_strip(region, "+", width)
    qm = np.diag(charge_diagonal(basis, region.intersection(sm)))
    qp = np.diag(charge_diagonal(basis, region.intersection(spl)))
    x = u.matrix.conj().T @ q @ u.matrix - q
    resid = opnorm(tm + tp - x)
    eigs = np.linalg.eigvalsh(qm + tm)
    a, spread = _offset(eigs)
    one = np.eye(len(q))
    tm = tm - a * one
    tp = tp + a * one
    return TransportSplit(tm, tp, a, 0, spread, _integrality(qm + tm), _integrality(qp + tp), resid, method)


# ---------------------------------------------------------------- index

@dataclass
class IndexResult:
    per_state: np.ndarray
    spread: float
    index: float  # tr(P T_-) / p
    integrality: float  # dist(tr(P T_-), Z)
    imag: float
    p: int
    topological_order_deviation: float = 0.0

    def as_dict(self) -> dict:
        return {"index": self.index, "per_state": [float(x) for x in self.per_state], "spread": self.spread,
                "integrality": self.integrality, "imag": self.imag, "p": self.p,
                "topological_order_deviation": self.topological_order_deviation}


def many_body_index(g: GroundSpace, ts: TransportSplit, topo_deviation: Optional[float] = None,
                    topo_threshold: Optional[float] = None) -> IndexResult:
    if g.p > 1 and topo_threshold is not None:
        if topo_deviation is None:
            raise TopologicalOrderError("degenerate ground space needs a topological-order deviation")
        if topo_deviation > topo_threshold:
            raise TopologicalOrderError(
                f"topological-order deviation {topo_deviation:.3e} exceeds {topo_threshold:.3e}")
    vals = expectation_values(g, ts.t_minus)
    tr = complex(np.sum(vals))
    per = vals.real
    return IndexResult(per, float(per.max() - per.min()), tr.real / g.p, float(abs(tr.real - np.rint(tr.real))),
                       float(np.max(np.abs(vals.imag))), g.p, float(topo_deviation or 0.0))


def index_theorem_check(r: IndexResult, p: Optional[int] = None) -> float:
    p = p or r.p
    x = r.index * p
    return float(abs(x - np.rint(x)) / p)


def dist_to_lattice(x: float, p: int = 1) -> float:
    y = x * p
    return float(abs(y - np.rint(y)) / p)


def additivity_check(g: GroundSpace, u1: ProcessUnitary, u2: ProcessUnitary, ts1: TransportSplit,
                     ts2: TransportSplit) -> tuple[float, float]:
    """|Ind(U2 U1) - Ind(U1) - Ind(U2)| with T_- = T_-^(1) + U1^dag T_-^(2) U1.

    Returns (residual, composed index).
    """
    m1 = u1.matrix
    composed = ts1.t_minus + m1.conj().T @ ts2.t_minus @ m1
    psi = g.vectors
    ind = lambda t: float(np.real(np.trace(psi.conj().T @ t @ psi))) / g.p
    c = ind(composed)
    return abs(c - ind(ts1.t_minus) - ind(ts2.t_minus)), c


# ---------------------------------------------------------------- examples

class GateError(ValueError):
    pass


@dataclass
class LSMResult:
    density: float
    distance: float  # dist(rho, Z/p)
    commutator: float  # ||[H, U_translation]||
    index: IndexResult


def lsm_density(g: GroundSpace, h: Hamiltonian, region: Region, shift: tuple[int, int] = (1, 0),
                width: int = 1, invariance_tol: float = 1e-8, topo_threshold: float = 0.05,
                probes=None) -> LSMResult:
    """Charge per translation step through a hyperplane, from the translation index."""
    basis = h.basis
    u = translation_process(basis, shift)
    c = opnorm(h.dense @ u.matrix - u.matrix @ h.dense)
    if c > invariance_tol:
        raise ValueError(f"Hamiltonian not invariant under translation {shift}: {c:.3e}")
    dev = 0.0
    if g.p > 1:
        from .fock import default_probes
        dev = topological_order_deviation(g, probes if probes is not None else default_probes(basis))
        if dev > topo_threshold:
            raise GateError(f"degenerate ground space (p={g.p}) without topological order: "
                            f"deviation {dev:.3f} > {topo_threshold}; no index claimed")
    ts = transport_split(u, basis, region, width, "translation")
    r = many_body_index(g, ts, dev, None)
    return LSMResult(r.index, index_theorem_check(r, g.p), c, r)


@dataclass
class HallResult:
    sigma: float
    distance: float  # dist(sigma, Z/p)
    flux_commutator: float  # ||[U, P]||
    index: IndexResult
    split: TransportSplit


def flux_process(d_flux: DressedCharge, d_meas: DressedCharge, side: str = "-") -> ProcessUnitary:
    """Flux quantum threaded across `side` of d_flux's region, split with respect to d_meas's strips.

    The flux generator is the rotating family K_side(phi) = e^{i phi Q} K_side e^{-i phi Q}
    (Q of d_flux).  Heisenberg evolution over phi in [0, 2 pi] under a subset S of its
    bond terms equals conjugation by exp(2 pi i (Q - sum_{b in S} K_b)), so T_pm
    follow in closed form.
    """
    terms = d_flux.split.minus_terms if side == "-" else d_flux.split.plus_terms
    gm, gmid, gp = classify_terms(terms, d_meas.region, d_meas.width)
    q = d_flux.q
    u = herm_expm(d_flux.generator(side))
    conj = {}
    for key, sub in (("-", gm), ("+", gp)):
        if sub:
            conj[key] = herm_expm(q - d_flux.filtered_terms(sub))
    return ProcessUnitary(u, "conjugator", conjugators=conj, label=f"flux{side}[{d_flux.region.label}]")


def hall_conductance(g: GroundSpace, d1: DressedCharge, d2: DressedCharge, basis: FockBasis,
                     topo_deviation: Optional[float] = None, topo_threshold: Optional[float] = None) -> HallResult:
    """Charge of Gamma (d1) moved through its minus boundary by one flux quantum threaded in direction 2.

    The flux unitary is exp(2 pi i (Q2 - K2_-)) built from Gamma2 (d2).
    """
    u = flux_process(d2, d1, "-")
    ts = transport_split(u, basis, d1.region, d1.width, "conjugator")
    r = many_body_index(g, ts, topo_deviation, topo_threshold)
    return HallResult(r.index, index_theorem_check(r, g.p), g.commutator_norm(u.matrix), r, ts)


def adz_check(rho: float, phi_flux, sigma: float, p: int = 1) -> float:
    """dist(rho - phi sigma, Z/p)."""
    return dist_to_lattice(rho - float(Fraction(phi_flux)) * sigma, p)


def brickwork_swap_pump(basis: FockBasis, theta: float = np.pi / 2) -> GeneratorFamily:
    """Strictly local two-layer pump along axis 1 of a ring.

    For s in [0, 1/2) the even bonds (2k, 2k+1) carry 2 theta (c_i^dag c_j + h.c.),
    for s in [1/2, 1) the odd bonds (2k+1, 2k+2).  With theta = pi/2 each layer
    swaps the occupations across its bonds, so the whole process moves the
    particles of one sublattice two sites and the other two sites back.
    """
    from .fock import hopping_matrix

    lat = basis.lattice
    if lat.L2 != 1 or lat.L1 % 2:
        raise ValueError("brickwork pump needs an even ring")
    L = lat.L1
    terms = []
    for parity in (0, 1):
        lo, hi = (0.0, 0.5) if parity == 0 else (0.5, 1.0)
        coef = (lambda s, lo=lo, hi=hi: 2.0 * theta if lo <= s < hi or (hi == 1.0 and s == 1.0) else 0.0)
        for k in range(parity, L, 2):
            i, j = k, (k + 1) % L
            terms.append(GeneratorTerm(frozenset((i, j)), hopping_matrix(basis, i, j, 1.0), coef,
                                       f"swap{i},{j}"))
    return GeneratorFamily(tuple(terms), (0.0, 0.5, 1.0))
