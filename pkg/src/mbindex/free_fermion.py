"""One-particle index: Fermi projections, dressed charges, the index and its proof chain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import Region, TorusLattice, boundary_strip


class IndexPreconditionError(ValueError):
    pass


def herm_expm(a: np.ndarray, phi: float = 2 * np.pi) -> np.ndarray:
    """exp(i phi A) for Hermitian A."""
    e, v = np.linalg.eigh(a)
    return (v * np.exp(1j * phi * e)) @ v.conj().T


def opnorm(a) -> float:
    return float(np.linalg.norm(a, 2))


def comm(a, b):
    return a @ b - b @ a


def fermi_projection(h: np.ndarray, fermi_energy: float, gap_tol: float = 1e-8) -> np.ndarray:
    if opnorm(h - h.conj().T) > 1e-10:
        raise ValueError("Hamiltonian is not Hermitian")
    e, v = np.linalg.eigh(h)
    if np.min(np.abs(e - fermi_energy)) <= gap_tol:
        raise ValueError(f"Fermi energy {fermi_energy} lies on an eigenvalue")
    occ = v[:, e < fermi_energy]
    return occ @ occ.conj().T


def projection_below_gap(h: np.ndarray, n_filled: int) -> tuple[np.ndarray, float]:
    """Projection onto the n_filled lowest levels and the gap above them."""
    e, v = np.linalg.eigh(h)
    occ = v[:, :n_filled]
    gap = float(e[n_filled] - e[n_filled - 1]) if 0 < n_filled < len(e) else np.inf
    return occ @ occ.conj().T, gap


def charge_projector(t: TorusLattice, r: Region) -> np.ndarray:
    return np.diag(r.mask.astype(float))


def restrict_to_strip(o: np.ndarray, strip: Region) -> np.ndarray:
    m = strip.mask
    out = np.zeros_like(o)
    out[np.ix_(m, m)] = o[np.ix_(m, m)]
    return out


@dataclass
class RapidDecayReport:
    shell_max: np.ndarray  # max |O_ij| at graph distance d, d = 0, 1, ...
    decay_rate: float  # fitted exponential rate (per site), inf if O is strictly local

    @property
    def ok(self) -> bool:
        return bool(self.decay_rate > 0)


def rapid_decay_report(o: np.ndarray, t: TorusLattice) -> RapidDecayReport:
    d = t.distance_matrix
    dmax = int(d.max())
    shells = np.array([np.abs(o[d == k]).max() if np.any(d == k) else 0.0 for k in range(dmax + 1)])
    nz = shells > 1e-14
    ks = np.nonzero(nz)[0]
    if len(ks) < 2:
        return RapidDecayReport(shells, np.inf)
    slope = np.polyfit(ks, np.log(shells[ks]), 1)[0]
    return RapidDecayReport(shells, float(-slope))


@dataclass
class DressedCharge1p:
    q: np.ndarray
    k: np.ndarray
    k_minus: np.ndarray
    k_plus: np.ndarray
    qbar: np.ndarray
    commutator_residual: float  # ||[Qbar, P]||
    truncation_residual: float  # ||K - K_- - K_+||


def ff_dressed_charge(p: np.ndarray, region: Region, width: int) -> DressedCharge1p:
    """K = PQ(1-P) + (1-P)QP split into its two boundary strips."""
    q = charge_projector(region.lattice, region)
    one = np.eye(len(p))
    k = p @ q @ (one - p) + (one - p) @ q @ p
    km = restrict_to_strip(k, boundary_strip(region, "-", width))
    kp = restrict_to_strip(k, boundary_strip(region, "+", width))
    qbar = q - km - kp
    return DressedCharge1p(q, k, km, kp, qbar, opnorm(comm(qbar, p)), opnorm(k - km - kp))


def flux_unitary_1p(p: np.ndarray, region: Region, width: int) -> np.ndarray:
    """exp(2 pi i (Q - K_-)): one flux quantum threaded across the minus boundary of region."""
    d = ff_dressed_charge(p, region, width)
    return herm_expm(d.q - d.k_minus)


def transport_operator(u: np.ndarray, q: np.ndarray) -> np.ndarray:
    return u.conj().T @ q @ u - q


def ff_index(p: np.ndarray, u: np.ndarray, region: Region, width: int, tol_commute: float = 1e-6,
             check_decay: bool = True, imag_tol: float = 1e-8) -> float:
    """tr[P (U^dag Q U - Q)_-] with the restriction to the minus strip of `region`."""
    c = opnorm(comm(p, u))
    if c > tol_commute:
        raise IndexPreconditionError(f"||[P,U]|| = {c:.3e} exceeds tol_commute = {tol_commute:.1e}")
    if check_decay:
        for name, o in (("P", p), ("U", u)):
            rep = rapid_decay_report(o, region.lattice)
            if not rep.ok:
                raise IndexPreconditionError(f"{name} fails rapid-decay screening")
    q = charge_projector(region.lattice, region)
    x = restrict_to_strip(transport_operator(u, q), boundary_strip(region, "-", width))
    val = np.trace(p @ x)
    if abs(val.imag) > imag_tol:
        raise IndexPreconditionError(f"index has imaginary part {val.imag:.3e}")
    return float(val.real)


def det_P(a: np.ndarray, p: np.ndarray) -> complex:
    one = np.eye(len(p))
    return complex(np.linalg.det(p @ a @ p + one - p))


@dataclass
class ProofReport:
    index: float
    integrality_distance: float
    n_commutator: float  # ||[N, P]||
    det_residual: float  # |det_P(Z_-) - 1|
    phase_residual: float  # |e^{2 pi i Ind} - det_P(e^{2 pi i N} e^{-2 pi i Qbar})|
    z_factorization: float  # ||Z_- - e^{2 pi i N} e^{-2 pi i Qbar}||
    qbar_commutator: float
    u_commutator: float
    strip_truncation: float  # ||X - X_- - X_+|| for X = U^dag Q U - Q
    total_transport: float  # |tr P X|

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def ff_proof_chain(p: np.ndarray, u: np.ndarray, region: Region, width: int) -> ProofReport:
    """Evaluate every link of the determinant argument for integrality of the index.

    N = Q + X_- - K_-^U - K_+ with X = U^dag Q U - Q and K^U = U^dag K U;
    Z_- = U^dag e^{2 pi i Qbar_-} U e^{-2 pi i Qbar_-} with Qbar_- = Q - K_-.
    """
    d = ff_dressed_charge(p, region, width)
    sm = boundary_strip(region, "-", width)
    sp_ = boundary_strip(region, "+", width)
    q = d.q
    x = transport_operator(u, q)
    xm = restrict_to_strip(x, sm)
    xp = restrict_to_strip(x, sp_)
    ind = np.trace(p @ xm).real
    km_u = u.conj().T @ d.k_minus @ u
    n_op = q + xm - km_u - d.k_plus
    qbar_m = q - d.k_minus
    fm = herm_expm(qbar_m)
    z = u.conj().T @ fm @ u @ fm.conj().T
    e_n = herm_expm(n_op)
    e_qbar = herm_expm(d.qbar, -2 * np.pi)
    w = e_n @ e_qbar
    return ProofReport(
        index=float(ind),
        integrality_distance=float(abs(ind - np.rint(ind))),
        n_commutator=opnorm(comm(n_op, p)),
        det_residual=abs(det_P(z, p) - 1),
        phase_residual=abs(np.exp(2j * np.pi * ind) - det_P(w, p)),
        z_factorization=opnorm(z - w),
        qbar_commutator=d.commutator_residual,
        u_commutator=opnorm(comm(p, u)),
        strip_truncation=opnorm(x - xm - xp),
        total_transport=float(abs(np.trace(p @ x))),
    )
