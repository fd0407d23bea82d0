"""Discrete torus geometry: sites, regions, half tori and boundary strips."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class TorusLattice:
    """L1 x L2 periodic square lattice.

    Sites are labelled by coordinates (i1, i2) with linear index i1 * L2 + i2.
    A ring is represented with L2 = 1.
    """

    L1: int
    L2: int

    @property
    def dim(self) -> int:
        return self.L1 * self.L2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L1, self.L2)

    def index(self, i1: int, i2: int = 0) -> int:
        return (i1 % self.L1) * self.L2 + (i2 % self.L2)

    def coords(self, k: int) -> tuple[int, int]:
        return divmod(int(k), self.L2)

    @cached_property
    def coord_array(self) -> np.ndarray:
        """(dim, 2) integer array of site coordinates."""
        k = np.arange(self.dim)
        return np.stack([k // self.L2, k % self.L2], axis=1)

    def axis_length(self, axis: int) -> int:
        if axis not in (1, 2):
            raise ValueError(f"axis must be 1 or 2, got {axis}")
        return self.L1 if axis == 1 else self.L2

    def distance(self, a: int, b: int) -> int:
        """Graph distance between two sites given by linear index."""
        return torus_distance(self, self.coords(a), self.coords(b))

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        c = self.coord_array
        d1 = np.abs(c[:, None, 0] - c[None, :, 0])
        d2 = np.abs(c[:, None, 1] - c[None, :, 1])
        d1 = np.minimum(d1, self.L1 - d1)
        d2 = np.minimum(d2, self.L2 - d2)
        return d1 + d2

    def neighbor(self, k: int, axis: int, step: int = 1) -> int:
        i1, i2 = self.coords(k)
        if axis == 1:
            return self.index(i1 + step, i2)
        return self.index(i1, i2 + step)

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds (a, b) with b = a + e_axis.

        Duplicates arising on short circumferences (L = 2) are kept once;
        L = 1 directions carry no bonds.
        """
        out = []
        seen = set()
        for axis, length in ((1, self.L1), (2, self.L2)):
            if length < 2:
                continue
            for k in range(self.dim):
                b = self.neighbor(k, axis)
                key = (min(k, b), max(k, b))
                if length == 2 and key in seen:
                    continue
                seen.add(key)
                out.append((k, b))
        return out


def build_torus(L1: int, L2: int) -> TorusLattice:
    if int(L1) != L1 or int(L2) != L2:
        raise ValueError("side lengths must be integers")
    if L1 < 2 or L2 < 1:
        raise ValueError(f"need L1 >= 2 and L2 >= 1, got ({L1}, {L2})")
    return TorusLattice(int(L1), int(L2))


def torus_distance(t: TorusLattice, a: tuple[int, int], b: tuple[int, int]) -> int:
    d1 = abs(a[0] - b[0]) % t.L1
    d2 = abs(a[1] - b[1]) % t.L2
    return min(d1, t.L1 - d1) + min(d2, t.L2 - d2)


@dataclass(frozen=True)
class Region:
    """A set of lattice sites.

    Half tori remember the cutting axis so that boundary strips can be derived;
    `cuts` holds the column after which each boundary circle lies (the minus
    boundary sits between columns cuts[0] and cuts[0] + 1).
    """

    lattice: TorusLattice
    sites: frozenset
    label: str = ""
    axis: Optional[int] = None
    cuts: Optional[tuple[int, int]] = None
    side: Optional[str] = None
    width: Optional[int] = None

    def __post_init__(self):
        bad = [s for s in self.sites if not 0 <= s < self.lattice.dim]
        if bad:
            raise ValueError(f"sites outside lattice: {bad[:5]}")

    def __contains__(self, k) -> bool:
        return k in self.sites

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(sorted(self.sites))

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.lattice.dim, dtype=bool)
        m[list(self.sites)] = True
        return m

    def complement(self, label: str = "") -> "Region":
        rest = frozenset(range(self.lattice.dim)) - self.sites
        return Region(self.lattice, rest, label or f"{self.label}^c")

    def union(self, other: "Region", label: str = "") -> "Region":
        return Region(self.lattice, self.sites | other.sites, label)

    def intersection(self, other: "Region", label: str = "") -> "Region":
        return Region(self.lattice, self.sites & other.sites, label)

    def intersects(self, sites: Iterable[int]) -> bool:
        return any(s in self.sites for s in sites)

    @property
    def is_half_torus(self) -> bool:
        return self.axis is not None and self.cuts is not None


def region_from_sites(t: TorusLattice, sites: Iterable[int], label: str = "") -> Region:
    return Region(t, frozenset(int(s) for s in sites), label)


def region_from_coords(t: TorusLattice, coords: Iterable[tuple[int, int]], label: str = "") -> Region:
    return Region(t, frozenset(t.index(a, b) for a, b in coords), label)


def rectangle_region(t: TorusLattice, cols: Iterable[int], rows: Iterable[int], label: str = "") -> Region:
    """Sites (i1, i2) with i1 in `cols` and i2 in `rows` (taken mod L)."""
    return region_from_coords(t, [(a, b) for a in cols for b in rows], label)


def _column(t: TorusLattice, axis: int, k: int) -> np.ndarray:
    return t.coord_array[:, axis - 1] == (k % t.axis_length(axis))


def half_torus_region(t: TorusLattice, axis: int = 1) -> Region:
    """Gamma = {0 < i_axis <= L/2}."""
    L = t.axis_length(axis)
    if L % 2:
        raise ValueError(f"side length {L} along axis {axis} is odd")
    c = t.coord_array[:, axis - 1]
    sites = np.nonzero((c >= 1) & (c <= L // 2))[0]
    label = "Gamma" if axis == 1 else "Gamma2"
    return Region(t, frozenset(int(s) for s in sites), label, axis=axis, cuts=(0, L // 2))


def strip_columns(r: Region, side: str, width: int) -> list[int]:
    """Coordinates along the cut axis that make up a boundary strip."""
    if not r.is_half_torus:
        raise ValueError("boundary strips need a half-torus region")
    if side not in ("-", "+"):
        raise ValueError(f"side must be '-' or '+', got {side!r}")
    if width < 1:
        raise ValueError(f"strip width must be >= 1, got {width}")
    L = r.lattice.axis_length(r.axis)
    sep = L // 2
    # Equality is allowed: the two strips then tile the torus without overlap.
    if 2 * width > sep:
        raise ValueError(f"strips of width {width} overlap on a torus of length {L}")
    k0 = r.cuts[0] if side == "-" else r.cuts[1]
    return [(k0 + 1 - width + j) % L for j in range(2 * width)]


def boundary_strip(r: Region, side: str, width: int) -> Region:
    """Sites within `width` columns of the chosen boundary circle of a half torus."""
    cols = strip_columns(r, side, width)
    c = r.lattice.coord_array[:, r.axis - 1]
    sites = np.nonzero(np.isin(c, cols))[0]
    return Region(r.lattice, frozenset(int(s) for s in sites), f"strip{side}",
                  axis=r.axis, side=side, width=width)


def default_strip_width(r: Region) -> int:
    return max(1, r.lattice.axis_length(r.axis) // 4)
