"""One-slice transfer kernels and wavefunction propagation.

Three constructions of the short-time kernel are available:

``hopping``
    ``exp(-i dt H)`` for the Peierls tight-binding Hamiltonian
    ``H = t (D - A_U) + phi`` with ``t = 1 / (2 m a^2)``.  Reflecting edges use
    the graph (Neumann) Laplacian and the kernel is unitary.  Absorbing edges
    evolve on a lattice padded with a margin and drop whatever lands in it.
``sliced-gaussian``
    Dense kernel ``N exp(i m d^2 / (2 dt)) U_route exp(-i phi dt)`` with the
    free normalization ``N = a^2 m / (2 pi i dt)`` and the link phases
    collected along the x-then-y route between the two sites.  The grid is a
    hard truncation regardless of boundary setting.
``local``
    First-order slice ``1 - i dt H``.  Only stays and nearest-neighbour hops
    have nonzero amplitude, which makes exhaustive path sums tractable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import InputError
from .gauge import LinkField
from .lattice import Boundary, LatticeSpec, SingularRegion, UnitsConvention, WaveFunction, site_mask

DENSE_SITE_LIMIT = 1024


class Backend(str, enum.Enum):
    HOPPING = "hopping"
    SLICED_GAUSSIAN = "sliced-gaussian"
    LOCAL = "local"


def as_backend(value) -> Backend:
    try:
        return Backend(value)
    except ValueError:
        raise InputError("unknown-backend", f"unknown backend {value!r}; choose from "
                         f"{[b.value for b in Backend]}")


@dataclass(frozen=True, eq=False)
class ActionConfig:
    """Discretized Lagrangian: kinetic term, link phases (A), scalar potential and counter terms.

    ``counter_terms`` is a per-site complex action increment that must vanish
    outside ``counter_region``.
    """

    link_field: LinkField
    units: UnitsConvention = field(default_factory=UnitsConvention)
    scalar_potential: np.ndarray | None = None
    counter_terms: np.ndarray | None = None
    counter_region: SingularRegion | None = None

    def __post_init__(self):
        lat = self.link_field.lattice
        phi = np.zeros(lat.shape) if self.scalar_potential is None else np.array(self.scalar_potential, dtype=float)
        if phi.shape != lat.shape or not np.all(np.isfinite(phi)):
            raise InputError("bad-scalar-potential", "scalar potential must be a finite real array over sites")
        phi.setflags(write=False)
        object.__setattr__(self, "scalar_potential", phi)
        if self.counter_terms is not None:
            s = np.array(self.counter_terms, dtype=complex)
            if s.shape != lat.shape:
                raise InputError("bad-counter-terms", "counter terms must be an array over sites")
            inside = np.zeros(lat.n_sites, dtype=bool)
            if self.counter_region is not None:
                inside = self.counter_region.mask(lat)
            if np.any(s.reshape(-1)[~inside] != 0):
                raise InputError("counter-terms-outside-region",
                                 "counter terms must vanish outside the singular region")
            s.setflags(write=False)
            object.__setattr__(self, "counter_terms", s)

    @property
    def lattice(self) -> LatticeSpec:
        return self.link_field.lattice

    @classmethod
    def free(cls, lattice: LatticeSpec, mass: float = 1.0) -> "ActionConfig":
        return cls(LinkField.trivial(lattice), UnitsConvention(mass=mass))


def hopping_amplitude(lattice: LatticeSpec, units: UnitsConvention) -> float:
    return 1.0 / (2.0 * units.mass * lattice.spacing**2)


def peierls_hamiltonian(lattice: LatticeSpec, angles_x, angles_y, potential, t: float,
                        neumann: bool = True) -> sp.csr_matrix:
    """Sparse tight-binding generator; ``H[b, a] = -t exp(i angle)`` for the hop a -> b."""
    nx, ny = lattice.nx, lattice.ny
    idx = np.arange(lattice.n_sites).reshape(ny, nx)
    a_x, b_x = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    a_y, b_y = idx[:-1, :].ravel(), idx[1:, :].ravel()
    hop_x = -t * np.exp(1j * np.asarray(angles_x).ravel())
    hop_y = -t * np.exp(1j * np.asarray(angles_y).ravel())
    if neumann:
        degree = np.zeros(lattice.n_sites)
        for a, b in ((a_x, b_x), (a_y, b_y)):
            np.add.at(degree, a, 1)
            np.add.at(degree, b, 1)
    else:
        degree = np.full(lattice.n_sites, 4.0)
    diag = t * degree + np.asarray(potential, dtype=float).ravel()
    rows = np.concatenate([b_x, a_x, b_y, a_y, idx.ravel()])
    cols = np.concatenate([a_x, b_x, a_y, b_y, idx.ravel()])
    vals = np.concatenate([hop_x, hop_x.conj(), hop_y, hop_y.conj(), diag.astype(complex)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(lattice.n_sites, lattice.n_sites))


def _margin_width(t_dt: float) -> int:
    # smallest d with (t dt)^d / d! below double precision
    d, term = 0, 1.0
    while term > 1e-17 or d < 2:
        d += 1
        term *= t_dt / d
        if d > 64:
            break
    return d


def _padded_fields(action: ActionConfig, margin: int):
    """Extend links and potential into a margin without creating flux there.

    Links leaving the grid get angle 0; rows/columns of links inside the
    margin copy the nearest physical row/column.  The same rule applied to a
    gauge function (clamped indices) commutes with gauge transformations.
    """
    ax, ay = action.link_field.angles_x, action.link_field.angles_y
    ny, nx = action.lattice.shape
    M = margin
    ax_ext = np.zeros((ny, nx - 1 + 2 * M))
    ax_ext[:, M:M + nx - 1] = ax
    ax_ext = np.pad(ax_ext, ((M, M), (0, 0)), mode="edge")
    ay_ext = np.zeros((ny - 1 + 2 * M, nx))
    ay_ext[M:M + ny - 1, :] = ay
    ay_ext = np.pad(ay_ext, ((0, 0), (M, M)), mode="edge")
    phi_ext = np.pad(action.scalar_potential, M, mode="edge")
    return ax_ext, ay_ext, phi_ext


@dataclass(frozen=True, eq=False)
class TransferKernel:
    """One-slice (or composed) kernel over the sites of ``lattice``.

    Either a dense ``matrix`` is stored, or a sparse ``generator`` H (possibly
    on a padded lattice with ``margin`` extra sites per side) from which the
    kernel ``P exp(-i dt H) P`` is applied on demand.
    """

    lattice: LatticeSpec
    slice_duration: float
    backend: Backend
    dense: np.ndarray | None = None
    generator: sp.csr_matrix | None = None
    margin: int = 0

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        n_ext = self.generator.shape[0]
        full = scipy.linalg.expm(-1j * self.slice_duration * self.generator.toarray())
        keep = self._physical_indices()
        return full[np.ix_(keep, keep)] if n_ext != self.lattice.n_sites else full

    def _physical_indices(self) -> np.ndarray:
        M = self.margin
        nx_ext = self.lattice.nx + 2 * M
        jj, ii = np.divmod(np.arange(self.lattice.n_sites), self.lattice.nx)
        return (jj + M) * nx_ext + (ii + M)

    @cached_property
    def _step_operator(self) -> sp.csr_matrix:
        return (-1j * self.slice_duration) * self.generator

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Kernel times a flattened state vector."""
        if self.dense is not None or self.generator is None or self.lattice.n_sites <= DENSE_SITE_LIMIT:
            return self.matrix @ vec
        if self.margin == 0:
            return expm_multiply(self._step_operator, vec)
        keep = self._physical_indices()
        ext = np.zeros(self.generator.shape[0], dtype=complex)
        ext[keep] = vec
        return expm_multiply(self._step_operator, ext)[keep]

    def unitarity_defect(self) -> float:
        """Operator norm of K^dagger K - I."""
        K = self.matrix
        return float(np.linalg.norm(K.conj().T @ K - np.eye(K.shape[0]), 2))


def identity_kernel(lattice: LatticeSpec, backend: str | Backend = Backend.HOPPING) -> TransferKernel:
    return TransferKernel(lattice, 0.0, as_backend(backend), dense=np.eye(lattice.n_sites, dtype=complex))


def _sliced_gaussian_matrix(lattice: LatticeSpec, action: ActionConfig, dt: float) -> np.ndarray:
    m = action.units.mass
    pos = lattice.positions()
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    norm = lattice.spacing**2 * m / (2j * math.pi * dt)
    ny, nx = lattice.shape
    # prefix sums of link angles along rows (x links) and columns (y links)
    cx = np.zeros((ny, nx))
    cx[:, 1:] = np.cumsum(action.link_field.angles_x, axis=1)
    cy = np.zeros((ny, nx))
    cy[1:, :] = np.cumsum(action.link_field.angles_y, axis=0)
    jj, ii = np.divmod(np.arange(lattice.n_sites), nx)
    # route a -> b: along row j_a from i_a to i_b, then along column i_b from j_a to j_b
    ia, ja = ii[None, :], jj[None, :]
    ib, jb = ii[:, None], jj[:, None]
    route = (cx[ja, ib] - cx[ja, ia]) + (cy[jb, ib] - cy[ja, ib])
    phi = action.scalar_potential.reshape(-1)
    return norm * np.exp(1j * (m * d2 / (2 * dt) + route)) * np.exp(-1j * phi * dt)[:, None]


def build_kernel(lattice: LatticeSpec, action: ActionConfig, slice_duration: float,
                 backend: str | Backend = Backend.HOPPING) -> TransferKernel:
    """One time slice of duration ``slice_duration``."""
    if not slice_duration > 0:
        raise InputError("non-positive-duration", f"slice_duration must be > 0, got {slice_duration}")
    backend = as_backend(backend)
    if action.lattice != lattice:
        raise InputError("lattice-mismatch", "action is defined on a different lattice")
    t = hopping_amplitude(lattice, action.units)
    lf = action.link_field
    if backend is Backend.SLICED_GAUSSIAN:
        return TransferKernel(lattice, slice_duration, backend,
                              dense=_sliced_gaussian_matrix(lattice, action, slice_duration))
    if backend is Backend.LOCAL:
        H = peierls_hamiltonian(lattice, lf.angles_x, lf.angles_y, action.scalar_potential, t,
                                neumann=lattice.boundary is Boundary.REFLECTING)
        K = sp.identity(lattice.n_sites, dtype=complex, format="csr") - 1j * slice_duration * H
        return TransferKernel(lattice, slice_duration, backend, dense=K.toarray())
    if lattice.boundary is Boundary.REFLECTING:
        H = peierls_hamiltonian(lattice, lf.angles_x, lf.angles_y, action.scalar_potential, t)
        return TransferKernel(lattice, slice_duration, backend, generator=H)
    M = _margin_width(t * slice_duration)
    ax, ay, phi = _padded_fields(action, M)
    ext = LatticeSpec(lattice.nx + 2 * M, lattice.ny + 2 * M, lattice.spacing, lattice.boundary)
    H = peierls_hamiltonian(ext, ax, ay, phi, t)
    return TransferKernel(lattice, slice_duration, backend, generator=H, margin=M)


def iterate_propagation(psi: WaveFunction, kernel: TransferKernel, steps: int,
                        mask=None) -> Iterator[np.ndarray]:
    """Yield the flattened state after each of ``steps`` applications of the kernel.

    Masked sites are zeroed after every step.
    """
    if psi.lattice.shape != kernel.lattice.shape:
        raise InputError("dimension-mismatch", "wavefunction and kernel live on different lattices")
    if steps < 0:
        raise InputError("negative-steps", f"steps must be >= 0, got {steps}")
    m = site_mask(kernel.lattice, mask)
    v = psi.vector
    for _ in range(steps):
        v = kernel.apply(v)
        if m is not None:
            v[m] = 0.0
        yield v


def propagate(psi: WaveFunction, kernel: TransferKernel, steps: int,
              mask: SingularRegion | None = None) -> WaveFunction:
    v = psi.vector
    for v in iterate_propagation(psi, kernel, steps, mask):
        pass
    return WaveFunction.from_vector(v, psi.lattice)


def compose(later: TransferKernel, earlier: TransferKernel) -> TransferKernel:
    """Kernel for ``earlier`` followed by ``later``: the matrix product later @ earlier."""
    if later.lattice != earlier.lattice:
        raise InputError("lattice-mismatch", "kernels live on different lattices")
    if later.backend != earlier.backend:
        raise InputError("backend-mismatch", f"{later.backend.value} vs {earlier.backend.value}")
    return TransferKernel(later.lattice, later.slice_duration + earlier.slice_duration, later.backend,
                          dense=later.matrix @ earlier.matrix)


def kernel_power(kernel: TransferKernel, n: int) -> np.ndarray:
    return np.linalg.matrix_power(kernel.matrix, n)


def free_kernel_analytic(x_from, x_to, total_time: float, units: UnitsConvention = UnitsConvention()) -> complex:
    """Continuum free-particle kernel in two dimensions."""
    if not total_time > 0:
        raise InputError("non-positive-time", f"total_time must be > 0, got {total_time}")
    m = units.mass
    dx = np.asarray(x_to, dtype=float) - np.asarray(x_from, dtype=float)
    r2 = float(dx @ dx)
    return complex(m / (2j * math.pi * total_time * units.hbar) * np.exp(1j * m * r2 / (2 * total_time * units.hbar)))


def kernel_to_csv(kernel: TransferKernel) -> str:
    K = kernel.matrix
    lines = ["row,col,re,im"]
    for r in range(K.shape[0]):
        for c in range(K.shape[1]):
            z = K[r, c]
            lines.append(f"{r},{c},{float(z.real)!r},{float(z.imag)!r}")
    return "\n".join(lines) + "\n"
