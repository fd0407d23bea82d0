"""Flux braiding (Z_-, its interpolation), loop commutators, string operators and anyon charges."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import GroundSpace, Hamiltonian, LocalTerm, Spectrum, charge_diagonal, diagonalize
from .free_fermion import herm_expm, opnorm
from .lattice import Region
from .quasi_adiabatic import DressedCharge, crossing_terms, current_term, filter_current, flux_unitary
from .spectral_filter import FilterFunction, make_filter
from .transport import ProcessUnitary, TransportSplit


def _mat(u):
    return u.matrix if isinstance(u, ProcessUnitary) else u


def z_minus(u, d: DressedCharge, flux: Optional[np.ndarray] = None) -> np.ndarray:
    """Z_- = U^dag F U F^dag with F the flux unitary across the minus boundary of d."""
    m = _mat(u)
    f = flux_unitary(d, "-") if flux is None else flux
    return m.conj().T @ f @ m @ f.conj().T


def _ind(g: GroundSpace, ts: TransportSplit) -> float:
    return float(np.real(np.trace(g.restrict(ts.t_minus)))) / g.p


def core_identity_check(g: GroundSpace, u, d: DressedCharge, ts: TransportSplit,
                        z: Optional[np.ndarray] = None) -> float:
    """||P Z_- P - e^{2 pi i tr(P T_-)/p} P|| on ran P."""
    if z is None:
        z = z_minus(u, d)
    block = g.restrict(z)
    return opnorm(block - np.exp(2j * np.pi * _ind(g, ts)) * np.eye(g.p))


@dataclass
class InterpolationReport:
    max_commutator: float  # max over the grid of ||[Z_-(phi), P]||
    ode_residual: float  # max over the grid of ||d/dphi (P Z P) - i ind P Z P||
    index: float
    phis: np.ndarray
    commutators: np.ndarray
    residuals: np.ndarray


class _TwoExp:
    """Z(phi) = e^{i phi A} e^{-i phi B} restricted to products with the ground vectors."""

    def __init__(self, a: np.ndarray, b: np.ndarray, psi: np.ndarray):
        self.la, va = np.linalg.eigh(a)
        self.lb, vb = np.linalg.eigh(b)
        self.m = va.conj().T @ vb
        self.x = vb.conj().T @ psi
        self.y = va.conj().T @ psi
        self.va, self.vb, self.psi = va, vb, psi

    def z_psi(self, phi):
        return self.va @ (np.exp(1j * phi * self.la)[:, None] * (self.m @ (np.exp(-1j * phi * self.lb)[:, None] * self.x)))

    def zdag_psi(self, phi):
        return self.vb @ (np.exp(1j * phi * self.lb)[:, None] * (self.m.conj().T @ (np.exp(-1j * phi * self.la)[:, None] * self.y)))

    def block(self, phi):
        inner = self.m @ (np.exp(-1j * phi * self.lb)[:, None] * self.x)
        return self.y.conj().T @ (np.exp(1j * phi * self.la)[:, None] * inner)

    def commutator(self, phi):
        psi = self.psi
        out = 0.0
        for v in (self.z_psi(phi), self.zdag_psi(phi)):
            leak = v - psi @ (psi.conj().T @ v)
            out = max(out, opnorm(leak))
        return out


def interpolation_generators(u, d: DressedCharge, ts: TransportSplit, form: str = "global"):
    """(A, B) with Z_-(phi) = e^{i phi A} e^{-i phi B}.

    form="local": A = Q_- + T_- - K_-^U, B = Q_- - K_-  (strip-local charges)
    form="global": A = Q + T_- - K_-^U, B = Q - K_-    (matches the flux unitary e^{2 pi i (Q - K_-)})
    """
    m = _mat(u)
    km_u = m.conj().T @ d.k_minus @ m
    qpart = np.diag(d.q_minus_diag) if form == "local" else d.q
    if form not in ("local", "global"):
        raise ValueError(f"unknown form {form!r}")
    return qpart + ts.t_minus - km_u, qpart - d.k_minus


def interpolation_check(g: GroundSpace, u, d: DressedCharge, ts: TransportSplit, phi_grid=None,
                        form: str = "global") -> InterpolationReport:
    """Commutators of Z_-(phi) with P and the finite-difference residual of the phase ODE.

    The derivative of P Z_-(phi) P is taken with a fourth-order central
    difference whose step equals the grid spacing.
    """
    if phi_grid is None:
        phi_grid = np.linspace(0, 2 * np.pi, 101)
    phis = np.asarray(phi_grid, dtype=float)
    h = float(np.min(np.diff(phis))) if len(phis) > 1 else np.pi / 50
    a, b = interpolation_generators(u, d, ts, form)
    zz = _TwoExp(a, b, g.vectors)
    ind = _ind(g, ts)
    comms, res = [], []
    for phi in phis:
        comms.append(zz.commutator(phi))
        f = [zz.block(phi + k * h) for k in (-2, -1, 1, 2)]
        deriv = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
        res.append(opnorm(deriv - 1j * ind * zz.block(phi)))
    comms, res = np.array(comms), np.array(res)
    return InterpolationReport(float(comms.max()), float(res.max()), ind, phis, comms, res)


def product_check(u, d: DressedCharge, ts: TransportSplit, phis: Sequence[float]) -> float:
    """max_phi ||Z_-(phi) Z_+(phi) - U^dag e^{i phi Qbar} U e^{-i phi Qbar}|| with the strip-local forms."""
    m = _mat(u)
    am = np.diag(d.q_minus_diag) + ts.t_minus - m.conj().T @ d.k_minus @ m
    ap = np.diag(d.q_plus_diag) + ts.t_plus - m.conj().T @ d.k_plus @ m
    worst = 0.0
    for phi in phis:
        zm = herm_expm(am, phi) @ herm_expm(d.qbar_minus, -phi)
        zp = herm_expm(ap, phi) @ herm_expm(d.qbar_plus, -phi)
        eq = herm_expm(d.qbar, phi)
        z = m.conj().T @ eq @ m @ eq.conj().T
        worst = max(worst, opnorm(zm @ zp - z))
    return worst


@dataclass
class BraidResult:
    phase: float  # in (-pi, pi]
    deviation: float  # ||B - e^{i phase}|| for the p x p block B
    modulus: float  # |tr B| / p
    distance: float  # dist(phase, 2 pi Z / p)


def _phase_distance(phase: float, p: int) -> float:
    step = 2 * np.pi / p
    x = phase / step
    return float(abs(x - np.rint(x)) * step)


def braid_commutator(g: GroundSpace, u1, u2) -> BraidResult:
    """Phase of P U2^dag U1 U2 U1^dag P, as the argument of its normalised trace on ran P."""
    m1, m2 = _mat(u1), _mat(u2)
    psi = g.vectors
    # apply to the ground vectors only: U2^dag U1 U2 U1^dag Psi
    v = m1.conj().T @ psi
    v = m2 @ v
    v = m1 @ v
    v = m2.conj().T @ v
    block = psi.conj().T @ v
    tr = np.trace(block) / g.p
    phase = float(np.angle(tr))
    return BraidResult(phase, opnorm(block - np.exp(1j * phase) * np.eye(g.p)), float(abs(tr)),
                       _phase_distance(phase, g.p))


# ---------------------------------------------------------------- strings

@dataclass(eq=False)
class LoopCharge:
    """Charge of a region Omega with the per-bond generators of its boundary."""

    region: Region
    q_diag: np.ndarray
    boundary_terms: list
    spectrum: Spectrum
    filter: FilterFunction
    occupations: np.ndarray

    def filtered(self, terms: Sequence[LocalTerm]) -> np.ndarray:
        dim = len(self.q_diag)
        j = sp.csr_matrix((dim, dim), dtype=complex)
        for t in terms:
            j = j + current_term(t, self.q_diag)
        return filter_current(self.spectrum, self.filter, j)

    def loop_unitary(self) -> np.ndarray:
        """e^{2 pi i (Q_Omega - K_dOmega)}, the closed loop around Omega."""
        return herm_expm(np.diag(self.q_diag) - self.filtered(self.boundary_terms))


def loop_charge(h: Hamiltonian, region: Region, g: GroundSpace, f: Optional[FilterFunction] = None) -> LoopCharge:
    spec = g.spectrum if g.spectrum is not None else diagonalize(h)
    f = f or make_filter(g.gap)
    return LoopCharge(region, charge_diagonal(h.basis, region), crossing_terms(h.terms, region), spec, f,
                      h.basis.occupations)


def _dual_edge(lat, term: LocalTerm):
    """Dual edge (pair of plaquette centres, doubled integer coordinates) crossed by a bond."""
    a, b = sorted(term.support)
    (x1, y1), (x2, y2) = lat.coords(a), lat.coords(b)
    L1, L2 = lat.L1, lat.L2
    if y1 == y2:  # bond along axis 1
        x = x1 if (x2 - x1) % L1 == 1 else x2
        mid = (2 * x + 1) % (2 * L1)
        return ((mid, (2 * y1 - 1) % (2 * L2)), (mid, (2 * y1 + 1) % (2 * L2)))
    y = y1 if (y2 - y1) % L2 == 1 else y2
    mid = (2 * y + 1) % (2 * L2)
    return (((2 * x1 - 1) % (2 * L1), mid), ((2 * x1 + 1) % (2 * L1), mid))


def string_endpoints(lat, terms: Sequence[LocalTerm]) -> tuple:
    """Endpoints of an open string of boundary bonds (doubled coordinates).

    Raises for disconnected or branching strings; returns () for closed loops.
    """
    if not terms:
        return ()
    deg: dict = {}
    adj: dict = {}
    for t in terms:
        u, v = _dual_edge(lat, t)
        for a, b in ((u, v), (v, u)):
            deg[a] = deg.get(a, 0) + 1
            adj.setdefault(a, set()).add(b)
    if any(k > 2 for k in deg.values()):
        raise ValueError("string branches")
    start = next(iter(adj))
    seen, stack = {start}, [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != len(adj):
        raise ValueError("string is not contiguous")
    ends = tuple(sorted(k for k, v in deg.items() if v == 1))
    if len(ends) not in (0, 2):
        raise ValueError("string is not a simple path")
    return ends


def _plaquette_sites(lat, end) -> list[int]:
    x2, y2 = end
    x0, y0 = (x2 - 1) // 2, (y2 - 1) // 2
    return [lat.index(x0 + dx, y0 + dy) for dx in (0, 1) for dy in (0, 1)]


def endpoint_in_region(lat, end, r: Region) -> Optional[bool]:
    """True if the plaquette around the endpoint lies in R, False if disjoint, None if straddling."""
    inside = [s in r.sites for s in _plaquette_sites(lat, end)]
    if all(inside):
        return True
    if not any(inside):
        return False
    return None


@dataclass(eq=False)
class StringOperator:
    unitary: np.ndarray
    terms: list
    endpoints: tuple
    charge: LoopCharge
    convergence: float  # step-halving difference (0 for the closed form)
    method: str

    @property
    def closed(self) -> bool:
        return len(self.terms) > 0 and not self.endpoints


def _matpow(a: np.ndarray, n: int) -> np.ndarray:
    out = None
    base = a
    while n:
        if n & 1:
            out = base if out is None else out @ base
        n >>= 1
        if n:
            base = base @ base
    return out if out is not None else np.eye(len(a), dtype=a.dtype)


def magnus2_string(q_diag: np.ndarray, k: np.ndarray, n_steps: int) -> np.ndarray:
    """Midpoint (second-order Magnus) product for T exp(-i int_0^{2pi} K(phi) dphi),
    K(phi) = e^{-i phi Q} K e^{i phi Q}, with n_steps equal steps.

    Each step is D_mid e^{-ihK} D_mid^dag; the diagonal factors telescope to
    e^{ihQ/2} E (M E)^{n-1} e^{ihQ/2} with E = e^{-ihK}, M = e^{ihQ}, which is
    evaluated by repeated squaring.
    """
    h = 2 * np.pi / n_steps
    e = herm_expm(k, -h)
    half = np.exp(0.5j * h * q_diag)
    me = np.exp(1j * h * q_diag)[:, None] * e
    w = e @ _matpow(me, n_steps - 1)
    return half[:, None] * w * half[None, :]


def string_operator(c: LoopCharge, terms: Sequence[LocalTerm], method: str = "magnus2",
                    n_steps: int = 256) -> StringOperator:
    """U_gamma = T exp(-i int K_gamma(phi)) for the boundary bonds in `terms`.

    method="magnus2": fixed-step midpoint product with a step-halving check.
    method="exact": the closed form e^{2 pi i (Q_Omega - K_gamma)}, which the
    time-ordered exponential equals identically because K_gamma(phi) is a
    rotation of a fixed operator by the integer-spectrum charge.
    """
    terms = list(terms)
    known = {id(t) for t in c.boundary_terms}
    for t in terms:
        if id(t) not in known:
            raise ValueError(f"term {t.label} is not a boundary bond of {c.region.label}")
    ends = string_endpoints(c.region.lattice, terms)
    dim = len(c.q_diag)
    if not terms:
        return StringOperator(np.eye(dim, dtype=complex), [], (), c, 0.0, method)
    k = c.filtered(terms)
    if method == "exact":
        u = herm_expm(np.diag(c.q_diag) - k)
        return StringOperator(u, terms, ends, c, 0.0, method)
    if method != "magnus2":
        raise ValueError(f"unknown method {method!r}")
    u = magnus2_string(c.q_diag, k, n_steps)
    u_half = magnus2_string(c.q_diag, k, n_steps // 2)
    return StringOperator(u, terms, ends, c, opnorm(u - u_half), method)


def boundary_bonds_on_cut(c: LoopCharge, cut_column: int, rows: Sequence[int]) -> list:
    """Boundary bonds of Omega crossing between columns cut_column and cut_column + 1 at the given rows."""
    lat = c.region.lattice
    out = []
    want = {(cut_column % lat.L1, r % lat.L2) for r in rows}
    for t in c.boundary_terms:
        a, b = sorted(t.support)
        (x1, y1), (x2, y2) = lat.coords(a), lat.coords(b)
        if y1 != y2:
            continue
        x = x1 if (x2 - x1) % lat.L1 == 1 else x2
        if (x, y1) in want:
            out.append(t)
    return out


@dataclass
class ChargeResult:
    epsilon: float  # charge added to R (mean over ground vectors)
    epsilon_other: float  # charge added to the complement of R
    conservation: float  # |epsilon + epsilon_other|
    distance: float  # dist(epsilon, Z / p)


def excitation_charge(g: GroundSpace, s: StringOperator, r: Region, margin: int = 1) -> ChargeResult:
    lat = r.lattice
    if s.endpoints:
        inside = [endpoint_in_region(lat, e, r) for e in s.endpoints]
        if None in inside:
            raise ValueError("an endpoint sits on the boundary of R")
        if all(inside):
            raise ValueError("R contains both endpoints")
        if not any(inside):
            raise ValueError("R contains no endpoint")
        far = s.endpoints[inside.index(False)]
        sites = _plaquette_sites(lat, far)
        dmin = min(lat.distance(a, b) for a in sites for b in r.sites) if r.sites else np.inf
        if dmin < margin:
            raise ValueError(f"R comes within {dmin} of the other endpoint (margin {margin})")
    occ = s.charge.occupations
    qr = occ[:, sorted(r.sites)].sum(axis=1).astype(float)
    qc = occ.sum(axis=1).astype(float) - qr
    psi = g.vectors
    phi = s.unitary @ psi

    def change(q):
        return (np.einsum("ik,i,ik->k", phi.conj(), q, phi) - np.einsum("ik,i,ik->k", psi.conj(), q, psi)).real

    eps, eps_c = float(np.mean(change(qr))), float(np.mean(change(qc)))
    return ChargeResult(eps, eps_c, abs(eps + eps_c), _dist(eps, g.p))


def _dist(x: float, p: int) -> float:
    y = x * p
    return float(abs(y - np.rint(y)) / p)


@dataclass
class AnyonPhase:
    phase: float  # relative phase, wrapped to (-pi, pi]
    distance: float  # dist to 2 pi Z / p
    excited_modulus: float  # |<phi|U_alpha|phi>|
    baseline_phase: float


def braid_phase(g: GroundSpace, s: StringOperator, loop: StringOperator, allow_empty: bool = False) -> AnyonPhase:
    """arg<phi|U_alpha|phi> - arg<psi|U_alpha|psi> with phi = U_gamma psi (first ground vector)."""
    lat = loop.charge.region.lattice
    enclosed = [endpoint_in_region(lat, e, loop.charge.region) for e in s.endpoints]
    if None in enclosed:
        raise ValueError("loop passes through an endpoint")
    n_in = sum(bool(x) for x in enclosed)
    if n_in > 1:
        raise ValueError("loop encloses both endpoints")
    if n_in == 0 and not allow_empty:
        raise ValueError("loop does not enclose an endpoint")
    psi = g.vectors[:, 0]
    phi = s.unitary @ psi
    ua = loop.unitary
    base = np.vdot(psi, ua @ psi)
    exc = np.vdot(phi, ua @ phi)
    rel = float(np.angle(exc / base))
    return AnyonPhase(rel, _phase_distance(rel, g.p), float(abs(exc)), float(np.angle(base)))


def closed_loop(c: LoopCharge) -> StringOperator:
    """The full boundary loop of Omega in closed form."""
    u = c.loop_unitary()
    return StringOperator(u, list(c.boundary_terms), (), c, 0.0, "exact")


def local_indistinguishability(g: GroundSpace, s: StringOperator, probes: Sequence, min_distance: int = 2) -> float:
    """max |<phi|O|phi> - <psi|O|psi>| over probes whose support is far from both endpoints."""
    lat = s.charge.region.lattice
    psi = g.vectors[:, 0]
    phi = s.unitary @ psi
    ends = [_plaquette_sites(lat, e) for e in s.endpoints]
    worst = 0.0
    for o in probes:
        sup = o.support
        dist = min(lat.distance(a, b) for sites in ends for a in sites for b in sup) if ends else np.inf
        if dist < min_distance:
            continue
        m = o.matrix
        worst = max(worst, abs(np.vdot(phi, m @ phi) - np.vdot(psi, m @ psi)))
    return float(worst)
