"""Frequency-domain weight turning currents into quasi-adiabatic generators.

The generator K is never built in the time domain.  In an eigenbasis of H the
integral of W(t) e^{itH} A e^{-itH} is diagonal in energy differences, so we
apply the weight elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def smoothstep(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def smootherstep(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** 3 * (x * (6.0 * x - 15.0) + 10.0)


def linear_ramp(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


PROFILES: dict[str, Callable] = {
    "smoothstep": smoothstep,
    "smootherstep": smootherstep,
    "linear": linear_ramp,
}


@dataclass(frozen=True)
class FilterFunction:
    """Weight g(w) = h(|w| / gap), with h rising from 0 to 1 on [0, 1]."""

    gap: float
    profile: str = "smoothstep"

    def weight(self, omega):
        """g(omega): even, 0 at omega = 0, 1 for |omega| >= gap."""
        h = PROFILES[self.profile]
        return h(np.abs(np.asarray(omega, dtype=float)) / self.gap)

    def transfer(self, omega):
        """Weight applied to a current matrix element at energy difference omega.

        Equals i g(omega) / omega (zero at omega = 0), so that filtering
        i[Q, H] reproduces g(omega) Q_mn.
        """
        omega = np.asarray(omega, dtype=float)
        g = self.weight(omega)
        out = np.zeros(omega.shape, dtype=complex)
        nz = omega != 0
        out[nz] = 1j * g[nz] / omega[nz]
        return out


def make_filter(gap: float, profile: str = "smoothstep") -> FilterFunction:
    if not np.isfinite(gap) or gap <= 0:
        raise ValueError(f"filter gap must be positive, got {gap}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    return FilterFunction(float(gap), profile)


def _omega(energies):
    e = np.asarray(energies, dtype=float)
    return e[:, None] - e[None, :]


def filter_in_eigenbasis(f: FilterFunction, energies, q_eig: np.ndarray) -> np.ndarray:
    """K_mn = g(E_m - E_n) Q_mn, with Q given in the eigenbasis of H."""
    q_eig = np.asarray(q_eig)
    n = len(energies)
    if q_eig.shape != (n, n):
        raise ValueError(f"shape mismatch: {q_eig.shape} vs {n} energies")
    return f.weight(_omega(energies)) * q_eig


def filter_current_eigenbasis(f: FilterFunction, energies, a_eig: np.ndarray) -> np.ndarray:
    """Filter a current that is already expressed in the eigenbasis."""
    a_eig = np.asarray(a_eig)
    n = len(energies)
    if a_eig.shape != (n, n):
        raise ValueError(f"shape mismatch: {a_eig.shape} vs {n} energies")
    return f.transfer(_omega(energies)) * a_eig


def filter_local_term(f: FilterFunction, energies, eigenvectors: np.ndarray, a) -> np.ndarray:
    """Filtered version of a local current term A, returned in the original basis.

    If only a window of eigenvectors is supplied the result is the filtered
    operator projected onto that window.
    """
    v = np.asarray(eigenvectors)
    a_eig = v.conj().T @ (a @ v)
    return v @ filter_current_eigenbasis(f, energies, a_eig) @ v.conj().T
