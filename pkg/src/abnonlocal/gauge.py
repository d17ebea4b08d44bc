"""U(1) link fields: flux insertion, gauge transformations and gauge diagnostics.

A link field stores the line integral ``charge * int A.dl`` along every
nearest-neighbour link as a principal angle in (-pi, pi]:

* ``angles_x[j, i]`` for the link (i, j) -> (i+1, j), shape ``(ny, nx-1)``
* ``angles_y[j, i]`` for the link (i, j) -> (i, j+1), shape ``(ny-1, nx)``

A particle hopping along a link in its positive direction picks up
``exp(i * angle)``; hopping backwards picks up the conjugate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .lattice import LatticeSpec, WaveFunction


def wrap_angle(a):
    """Map angles to the principal branch (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.remainder(a + np.pi, 2 * np.pi) - np.pi
    out = np.where(out <= -np.pi, out + 2 * np.pi, out)
    # values already on the branch pass through bit-for-bit
    out = np.where((a > -np.pi) & (a <= np.pi), a, out)
    return out if out.ndim else float(out)


def flux_angle(alpha: float) -> float:
    """Phase 2*pi*alpha on the principal branch, reduced mod 1 before scaling."""
    frac = alpha - round(alpha)
    a = 2 * math.pi * frac
    return a + 2 * math.pi if a <= -math.pi else a


@dataclass(frozen=True, eq=False)
class LinkField:
    angles_x: np.ndarray
    angles_y: np.ndarray
    lattice: LatticeSpec

    def __post_init__(self):
        lat = self.lattice
        ax = np.array(self.angles_x, dtype=float)
        ay = np.array(self.angles_y, dtype=float)
        if ax.shape != (lat.ny, lat.nx - 1) or ay.shape != (lat.ny - 1, lat.nx):
            raise InputError("lattice-mismatch", "link angle arrays do not match the lattice")
        if not (np.all(np.isfinite(ax)) and np.all(np.isfinite(ay))):
            raise InputError("non-finite-link", "link angles must be finite")
        ax, ay = wrap_angle(ax), wrap_angle(ay)
        ax.setflags(write=False)
        ay.setflags(write=False)
        object.__setattr__(self, "angles_x", ax)
        object.__setattr__(self, "angles_y", ay)

    @classmethod
    def trivial(cls, lattice: LatticeSpec) -> "LinkField":
        return cls(np.zeros((lattice.ny, lattice.nx - 1)), np.zeros((lattice.ny - 1, lattice.nx)), lattice)

    @property
    def ux(self) -> np.ndarray:
        return np.exp(1j * self.angles_x)

    @property
    def uy(self) -> np.ndarray:
        return np.exp(1j * self.angles_y)

    def plaquette_angles(self) -> np.ndarray:
        """Counterclockwise circulation per plaquette, shape ``(ny-1, nx-1)``, wrapped."""
        ax, ay = self.angles_x, self.angles_y
        circ = ax[:-1, :] + ay[:, 1:] - ax[1:, :] - ay[:, :-1]
        return wrap_angle(circ)

    def plaquette_phases(self) -> np.ndarray:
        return np.exp(1j * self.plaquette_angles())

    def __mul__(self, other: "LinkField") -> "LinkField":
        """Superpose two fields (link phases multiply, fluxes add)."""
        _check_same_lattice(self.lattice, other.lattice)
        return LinkField(self.angles_x + other.angles_x, self.angles_y + other.angles_y, self.lattice)

    def equals(self, other: "LinkField") -> bool:
        return (self.lattice == other.lattice
                and np.array_equal(self.angles_x, other.angles_x)
                and np.array_equal(self.angles_y, other.angles_y))


@dataclass(frozen=True)
class FluxSpec:
    """Flux ``alpha`` (in flux quanta) through the plaquette with lower-left site ``plaquette``."""

    plaquette: tuple
    alpha: float

    def center(self, lattice: LatticeSpec) -> np.ndarray:
        return lattice.plaquette_center(*self.plaquette)


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    theta: np.ndarray

    def __post_init__(self):
        t = np.array(self.theta, dtype=float)
        if not np.all(np.isfinite(t)):
            raise InputError("non-finite-gauge", "gauge function must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)


def _check_same_lattice(a: LatticeSpec, b: LatticeSpec):
    if a != b:
        raise InputError("lattice-mismatch", f"{a} != {b}")


def _check_interior(lattice: LatticeSpec, plaquette):
    pi, pj = plaquette
    if not (1 <= pi <= lattice.nx - 3 and 1 <= pj <= lattice.ny - 3):
        raise InputError("plaquette-on-boundary",
                         f"plaquette {tuple(plaquette)} must not touch the boundary of a "
                         f"{lattice.nx}x{lattice.ny} grid")


def flux_link_field(lattice: LatticeSpec, flux: FluxSpec) -> LinkField:
    """String-gauge field with a single flux plaquette.

    The phase sits on the vertical links cut by the ray running in +x from the
    flux plaquette to the edge, so every other plaquette is exactly flux-free.
    """
    _check_interior(lattice, flux.plaquette)
    pi, pj = flux.plaquette
    ay = np.zeros((lattice.ny - 1, lattice.nx))
    ay[pj, pi + 1:] = flux_angle(flux.alpha)
    return LinkField(np.zeros((lattice.ny, lattice.nx - 1)), ay, lattice)


def azimuthal_link_field(lattice: LatticeSpec, flux: FluxSpec) -> LinkField:
    """Same flux in the symmetric (azimuthal) gauge, A = alpha * phi_hat / r.

    The line integral of phi_hat / r along a straight link is the polar angle
    it subtends, so link angles are exact and the field is divergence-free
    away from the core in the continuum.
    """
    _check_interior(lattice, flux.plaquette)
    c = flux.center(lattice)
    x, y = lattice.meshgrid()
    phi = np.arctan2(y - c[1], x - c[0])
    dphi_x = wrap_angle(phi[:, 1:] - phi[:, :-1])
    dphi_y = wrap_angle(phi[1:, :] - phi[:-1, :])
    return LinkField(flux.alpha * dphi_x, flux.alpha * dphi_y, lattice)


def gauge_transform(field: LinkField, g: GaugeFunction) -> LinkField:
    """A -> A + grad(theta): link x->y becomes exp(i theta_y) U exp(-i theta_x).

    Paired with psi -> exp(i theta) psi this keeps propagation covariant.
    """
    th = g.theta
    if th.shape != field.lattice.shape:
        raise InputError("lattice-mismatch", f"gauge function shape {th.shape} != {field.lattice.shape}")
    ax = field.angles_x + th[:, 1:] - th[:, :-1]
    ay = field.angles_y + th[1:, :] - th[:-1, :]
    return LinkField(ax, ay, field.lattice)


def gauge_wavefunction(psi: WaveFunction, g: GaugeFunction) -> WaveFunction:
    if g.theta.shape != psi.lattice.shape:
        raise InputError("lattice-mismatch", f"gauge function shape {g.theta.shape} != {psi.lattice.shape}")
    return WaveFunction(psi.grid * np.exp(1j * g.theta), psi.lattice)


def divergence_check(field: LinkField) -> np.ndarray:
    """Lattice divergence of A per site (missing boundary links count as zero).

    Uses the stored principal angles, so a string-gauge field shows its cut.
    """
    lat = field.lattice
    ax, ay = field.angles_x, field.angles_y
    div = np.zeros(lat.shape)
    div[:, :-1] += ax
    div[:, 1:] -= ax
    div[:-1, :] += ay
    div[1:, :] -= ay
    return div / lat.spacing**2


def harmonicity_check(g: GaugeFunction, spacing: float = 1.0) -> np.ndarray:
    """Five-point Laplacian of theta at interior sites; boundary entries are NaN."""
    th = g.theta
    out = np.full(th.shape, np.nan)
    out[1:-1, 1:-1] = (th[1:-1, 2:] + th[1:-1, :-2] + th[2:, 1:-1] + th[:-2, 1:-1]
                       - 4.0 * th[1:-1, 1:-1]) / spacing**2
    return out


def random_gauge(lattice: LatticeSpec, rng: np.random.Generator, scale: float = np.pi) -> GaugeFunction:
    return GaugeFunction(rng.uniform(-scale, scale, size=lattice.shape))


def random_link_field(lattice: LatticeSpec, rng: np.random.Generator) -> LinkField:
    return LinkField(rng.uniform(-np.pi, np.pi, size=(lattice.ny, lattice.nx - 1)),
                     rng.uniform(-np.pi, np.pi, size=(lattice.ny - 1, lattice.nx)), lattice)


# -- CSV ---------------------------------------------------------------------

LINK_CSV_HEADER = ("link_type", "i", "j", "angle")


def link_field_to_csv(field: LinkField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LINK_CSV_HEADER)
    for kind, arr in (("x", field.angles_x), ("y", field.angles_y)):
        for j in range(arr.shape[0]):
            for i in range(arr.shape[1]):
                w.writerow((kind, i, j, repr(float(arr[j, i]))))
    return buf.getvalue()


def link_field_from_csv(text: str, lattice: LatticeSpec) -> LinkField:
    ax = np.full((lattice.ny, lattice.nx - 1), np.nan)
    ay = np.full((lattice.ny - 1, lattice.nx), np.nan)
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if tuple(header or ()) != LINK_CSV_HEADER:
        raise InputError("bad-csv-header", f"expected header {LINK_CSV_HEADER}, got {header}")
    for row in rows:
        if not row:
            continue
        kind, i, j, angle = row
        target = {"x": ax, "y": ay}.get(kind)
        if target is None:
            raise InputError("bad-link-type", f"unknown link type {kind!r}")
        target[int(j), int(i)] = float(angle)
    if np.isnan(ax).any() or np.isnan(ay).any():
        raise InputError("incomplete-link-csv", "CSV does not cover every link of the lattice")
    return LinkField(ax, ay, lattice)
