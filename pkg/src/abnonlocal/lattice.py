"""Discrete geometry and state containers.

Conventions used throughout the package:

* Sites are labelled ``(i, j)`` with ``i`` the column (x, rightward) and ``j``
  the row (y, upward).  Continuum coordinates are ``(i * spacing, j * spacing)``.
* Arrays over sites have shape ``(ny, nx)`` and are indexed ``grid[j, i]``.
* Flattened site indices are row-major: ``index = j * nx + i``.
* Orientation is counterclockwise-positive for plaquettes, windings and curls.
* Natural units: hbar = 1, flux measured in flux quanta (``alpha``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


class Boundary(str, enum.Enum):
    ABSORBING = "absorbing"
    REFLECTING = "reflecting"


@dataclass(frozen=True)
class UnitsConvention:
    """hbar is fixed to 1; mass and charge are dimensionless."""

    mass: float = 1.0
    charge: float = 1.0
    hbar: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not self.mass > 0:
            raise InputError("non-positive-mass", f"mass must be > 0, got {self.mass}")

    @property
    def flux_quantum(self) -> float:
        return 2.0 * math.pi * self.hbar / self.charge


@dataclass(frozen=True)
class LatticeSpec:
    nx: int
    ny: int
    spacing: float = 1.0
    boundary: Boundary = Boundary.REFLECTING

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(ny, nx)`` of per-site grids."""
        return (self.ny, self.nx)

    def index(self, i: int, j: int) -> int:
        if not self.contains(i, j):
            raise InputError("site-out-of-bounds", f"site ({i}, {j}) not on {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def site(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_sites:
            raise InputError("site-out-of-bounds", f"index {index} out of range")
        j, i = divmod(int(index), self.nx)
        return i, j

    def contains(self, i: int, j: int) -> bool:
        return 0 <= i < self.nx and 0 <= j < self.ny

    def position(self, index: int) -> np.ndarray:
        i, j = self.site(index)
        return np.array([i * self.spacing, j * self.spacing])

    def positions(self) -> np.ndarray:
        """(n_sites, 2) continuum coordinates in flattened order."""
        jj, ii = np.divmod(np.arange(self.n_sites), self.nx)
        return np.stack([ii, jj], axis=1) * self.spacing

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate grids ``(x, y)`` of shape ``(ny, nx)``."""
        x = np.arange(self.nx) * self.spacing
        y = np.arange(self.ny) * self.spacing
        return np.meshgrid(x, y)

    def neighbors(self, index: int) -> list[int]:
        """Nearest neighbours in the order +x, -x, +y, -y (only those on the grid)."""
        i, j = self.site(index)
        out = []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if self.contains(i + di, j + dj):
                out.append((j + dj) * self.nx + i + di)
        return out

    def plaquette_center(self, i: int, j: int) -> np.ndarray:
        """Center of the plaquette whose lower-left corner is site ``(i, j)``."""
        return np.array([(i + 0.5) * self.spacing, (j + 0.5) * self.spacing])


def make_lattice(nx: int, ny: int, spacing: float = 1.0, boundary: str | Boundary = "reflecting") -> LatticeSpec:
    if nx < 2 or ny < 2:
        raise InputError("dimension-too-small", f"need nx, ny >= 2, got {nx}x{ny}")
    if not spacing > 0:
        raise InputError("non-positive-spacing", f"spacing must be > 0, got {spacing}")
    try:
        boundary = Boundary(boundary)
    except ValueError:
        raise InputError("unknown-boundary", f"boundary must be absorbing or reflecting, got {boundary!r}")
    return LatticeSpec(int(nx), int(ny), float(spacing), boundary)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitude per site; ``grid`` has shape ``(ny, nx)`` and is read-only."""

    grid: np.ndarray
    lattice: LatticeSpec

    def __post_init__(self):
        g = np.array(self.grid, dtype=complex)
        if g.shape != self.lattice.shape:
            raise InputError("dimension-mismatch", f"grid shape {g.shape} != {self.lattice.shape}")
        if not np.all(np.isfinite(g)):
            raise InputError("non-finite-amplitude", "wavefunction has NaN or Inf entries")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def from_vector(cls, vec: np.ndarray, lattice: LatticeSpec) -> "WaveFunction":
        return cls(np.asarray(vec).reshape(lattice.shape), lattice)

    @property
    def vector(self) -> np.ndarray:
        """Flattened (row-major) copy."""
        return self.grid.reshape(-1).copy()

    @property
    def norm2(self) -> float:
        return float(self.lattice.spacing**2 * np.sum(np.abs(self.grid) ** 2))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.grid) ** 2


def wavepacket(lattice: LatticeSpec, center: Sequence[float], width: float,
               momentum: Sequence[float] = (0.0, 0.0)) -> WaveFunction:
    """Gaussian envelope times a plane wave, normalized to norm2 = 1.

    The plane-wave phase is referenced to ``center`` so a packet centred on a
    site is real and positive there.
    """
    if not width > 0:
        raise InputError("non-positive-width", f"width must be > 0, got {width}")
    cx, cy = (float(c) for c in center)
    xmax = (lattice.nx - 1) * lattice.spacing
    ymax = (lattice.ny - 1) * lattice.spacing
    if not (0 <= cx <= xmax and 0 <= cy <= ymax):
        raise InputError("center-out-of-bounds", f"center ({cx}, {cy}) outside grid")
    x, y = lattice.meshgrid()
    r2 = (x - cx) ** 2 + (y - cy) ** 2
    # shift the exponent so the nearest site never underflows
    log_env = -(r2 - r2.min()) / (2.0 * width**2)
    kx, ky = (float(k) for k in momentum)
    psi = np.exp(log_env) * np.exp(1j * (kx * (x - cx) + ky * (y - cy)))
    psi /= math.sqrt(lattice.spacing**2 * np.sum(np.abs(psi) ** 2))
    return WaveFunction(psi, lattice)


@dataclass(frozen=True)
class SingularRegion:
    """Sites within ``radius`` of ``center``; amplitudes there are forced to zero."""

    sites: frozenset
    center: tuple
    radius: float

    def mask(self, lattice: LatticeSpec) -> np.ndarray:
        m = np.zeros(lattice.n_sites, dtype=bool)
        m[list(self.sites)] = True
        return m


def singular_region(lattice: LatticeSpec, center: Sequence[float], radius: float | None = None) -> SingularRegion:
    """All sites at distance <= radius from center (default radius: one spacing)."""
    if radius is None:
        radius = lattice.spacing
    if radius < 0:
        raise InputError("negative-radius", f"radius must be >= 0, got {radius}")
    c = np.asarray(center, dtype=float)
    d = np.hypot(*(lattice.positions() - c).T)
    sites = frozenset(int(s) for s in np.flatnonzero(d <= radius + 1e-12 * lattice.spacing))
    return SingularRegion(sites, (float(c[0]), float(c[1])), float(radius))


@dataclass(frozen=True)
class LatticePath:
    """Ordered site indices ``q_0 ... q_slices``; consecutive sites equal or adjacent."""

    sites: tuple
    lattice: LatticeSpec

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        for a, b in zip(self.sites, self.sites[1:]):
            if a != b and b not in self.lattice.neighbors(a):
                raise InputError("non-local-step", f"sites {a} -> {b} are not nearest neighbours")

    @property
    def slices(self) -> int:
        return len(self.sites) - 1

    def positions(self) -> np.ndarray:
        return self.lattice.positions()[list(self.sites)]


def site_mask(lattice: LatticeSpec, sites: Iterable[int] | SingularRegion | np.ndarray | None) -> np.ndarray | None:
    """Normalize any accepted mask form to a flat boolean array (or None)."""
    if sites is None:
        return None
    if isinstance(sites, SingularRegion):
        return sites.mask(lattice)
    arr = np.asarray(sites)
    if arr.dtype == bool:
        return arr.reshape(-1)
    m = np.zeros(lattice.n_sites, dtype=bool)
    m[arr.astype(int).reshape(-1)] = True
    return m
