"""Return-mechanism factorization of the sliced kernel around a singular region.

Time runs over slices ``1..n``; slice ``k`` maps ``q_{k-1}`` to ``q_k``.  A
return window ``(l, m)`` marks the intermediate positions
``q_{l+1} .. q_{m-1}`` at which paths are forbidden from entering the
singular region.  Writing ``W = T_m ... T_{l+1}`` for the window product,
``W_P`` for the same product with the region projected out after every
intermediate slice, ``B`` for the slices before the window and ``C`` for the
ones after it::

    K_normal = C W B
    K_masked = C W_P B
    K_s      = C W_P W^{-1} C^{-1}

so that ``K_s @ K_normal == K_masked``.  ``W^{-1}`` is the product of the
inverse slice operators of the window taken in reversed order, the walk
backward over the window.  Inverses are never regularized: an ill-conditioned
slice raises :class:`NumericalError` with its condition number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError
from .kernels import DENSE_SITE_LIMIT, ActionConfig, Backend, TransferKernel, as_backend, build_kernel
from .lattice import LatticeSpec, SingularRegion, site_mask

COND_LIMIT = 1e12
# brute-force scale guard shared with the exhaustive path sums
MAX_SIDE = 6
MAX_SLICES = 8


@dataclass(frozen=True)
class SlicingPlan:
    """Uniform time division with an optional return window ``(l, m)``."""

    total_time: float
    slices: int
    return_window: tuple | None = None

    def __post_init__(self):
        if not self.total_time > 0:
            raise InputError("non-positive-time", f"total_time must be > 0, got {self.total_time}")
        if int(self.slices) != self.slices or self.slices < 1:
            raise InputError("non-positive-slices", f"slices must be an integer >= 1, got {self.slices}")
        object.__setattr__(self, "slices", int(self.slices))
        if self.return_window is not None:
            l, m = (int(v) for v in self.return_window)
            if not 1 <= l < m <= self.slices - 1:
                raise InputError("invalid-return-window",
                                 f"return window ({l}, {m}) must satisfy 1 <= l < m <= {self.slices - 1}")
            object.__setattr__(self, "return_window", (l, m))

    @property
    def slice_duration(self) -> float:
        return self.total_time / self.slices


@dataclass(frozen=True, eq=False)
class ReturnFactorization:
    k_s: np.ndarray
    k_normal: np.ndarray
    k_masked: np.ndarray
    condition: float

    @property
    def residual(self) -> float:
        """max |K_s K_normal - K_masked|."""
        return float(np.max(np.abs(self.k_s @ self.k_normal - self.k_masked)))


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    two_factor: np.ndarray
    single_product: np.ndarray
    deviation: float
    condition: float

    def to_dict(self) -> dict:
        return {"deviation": self.deviation, "condition": self.condition,
                "n_sites": int(self.two_factor.shape[0])}


def masked_positions(window: tuple) -> range:
    """Slice indices after which the region is projected out: l+1 .. m-1."""
    l, m = window
    return range(l + 1, m)


def forward_product(slice_ops: Sequence[np.ndarray], after: dict | None = None) -> np.ndarray:
    """``T_n ... T_1`` with an optional diagonal applied after selected slices.

    ``after`` maps a 1-based slice index to a per-site factor.
    """
    n = slice_ops[0].shape[0]
    out = np.eye(n, dtype=complex)
    for k, T in enumerate(slice_ops, start=1):
        out = T @ out
        if after and k in after:
            out = after[k][:, None] * out
    return out


def _condition(T: np.ndarray) -> float:
    s = np.linalg.svd(T, compute_uv=False)
    return float(np.inf) if s[-1] == 0 else float(s[0] / s[-1])


def _checked_inverse(T: np.ndarray, k: int) -> tuple[np.ndarray, float]:
    cond = _condition(T)
    if not cond < COND_LIMIT:
        raise NumericalError("singular-slice-operator",
                             f"slice {k} is not invertible to working precision (condition {cond:.3e})",
                             slice=k, condition=cond)
    return scipy.linalg.inv(T), cond


def _check_window(slice_ops, window):
    if window is None:
        raise InputError("missing-return-window", "a return window (l, m) is required")
    l, m = window
    n = len(slice_ops)
    if not 1 <= l < m <= n - 1:
        raise InputError("invalid-return-window", f"return window ({l}, {m}) must satisfy 1 <= l < m <= {n - 1}")


def factorize_return(slice_ops: Sequence[np.ndarray], window: tuple | None,
                     region_mask: np.ndarray) -> ReturnFactorization:
    """Return factorization from explicit slice matrices ``[T_1, ..., T_n]``.

    Parameters
    ----------
    slice_ops : sequence of (N, N) complex arrays
    window : (l, m)
    region_mask : bool array (N,)
        Sites of the singular region.
    """
    _check_window(slice_ops, window)
    l, m = window
    region = np.asarray(region_mask, dtype=bool).reshape(-1)
    keep = (~region).astype(complex)
    mask_after = {k: keep for k in masked_positions(window)}
    k_normal = forward_product(slice_ops)
    k_masked = forward_product(slice_ops, mask_after)
    n = k_normal.shape[0]
    if not region.any():
        return ReturnFactorization(np.eye(n, dtype=complex), k_normal, k_masked, 1.0)

    # inverse of the window and of the tail, each walked in reversed order
    cond = 1.0
    inv_tail = np.eye(n, dtype=complex)
    for k in range(l + 1, len(slice_ops) + 1):
        Tinv, c = _checked_inverse(slice_ops[k - 1], k)
        cond = max(cond, c)
        inv_tail = inv_tail @ Tinv
    # inv_tail = T_{l+1}^-1 ... T_n^-1 = (C W)^-1
    tail_masked = forward_product(slice_ops[l:], {k - l: keep for k in masked_positions(window)})
    k_s = tail_masked @ inv_tail
    return ReturnFactorization(k_s, k_normal, k_masked, cond)


def _plan_slices(action: ActionConfig, plan: SlicingPlan, backend) -> list[np.ndarray]:
    lat = action.lattice
    if lat.n_sites > DENSE_SITE_LIMIT:
        raise InputError("instance-too-large", f"return factorization needs dense kernels (<= {DENSE_SITE_LIMIT} sites)")
    T = build_kernel(lat, action, plan.slice_duration, backend).matrix
    return [T] * plan.slices


def return_factorization(action: ActionConfig, plan: SlicingPlan, region: SingularRegion | Sequence[int],
                         backend: str | Backend = Backend.HOPPING) -> tuple[TransferKernel, TransferKernel]:
    """``(K_s, K_normal)`` as kernels; see :func:`return_factorization_full` for the masked product."""
    res = return_factorization_full(action, plan, region, backend)
    lat, b = action.lattice, as_backend(backend)
    return (TransferKernel(lat, 0.0, b, dense=res.k_s),
            TransferKernel(lat, plan.total_time, b, dense=res.k_normal))


def return_factorization_full(action: ActionConfig, plan: SlicingPlan, region,
                              backend: str | Backend = Backend.HOPPING) -> ReturnFactorization:
    if plan.return_window is None:
        raise InputError("missing-return-window", "slicing plan has no return window")
    ops = _plan_slices(action, plan, backend)
    return factorize_return(ops, plan.return_window, site_mask(action.lattice, region))


def counter_action_matrices(slice_ops: Sequence[np.ndarray], window: tuple | None, region_mask: np.ndarray,
                            counter_terms: np.ndarray) -> EquivalenceReport:
    """Compare the two-factor return form with a single product carrying ``exp(-i S_d)``.

    ``counter_terms`` is the per-site complex increment ``S_d``; it must vanish
    off the region.  Its factor is applied at the same intermediate positions
    where the return form projects the region out.
    """
    region = np.asarray(region_mask, dtype=bool).reshape(-1)
    s_d = np.asarray(counter_terms, dtype=complex).reshape(-1)
    if np.any(s_d[~region] != 0):
        raise InputError("counter-terms-outside-region", "counter terms must vanish outside the singular region")
    fac = factorize_return(slice_ops, window, region)
    two_factor = fac.k_s @ fac.k_normal
    weight = np.exp(-1j * s_d)
    single = forward_product(slice_ops, {k: weight for k in masked_positions(window)})
    dev = float(np.max(np.abs(two_factor - single)))
    return EquivalenceReport(two_factor, single, dev, fac.condition)


def counter_action_equivalence(action: ActionConfig, plan: SlicingPlan, region: SingularRegion | Sequence[int],
                               backend: str | Backend = Backend.HOPPING) -> EquivalenceReport:
    """Two-factor return form versus the single product with the counter action."""
    lat: LatticeSpec = action.lattice
    if lat.nx > MAX_SIDE or lat.ny > MAX_SIDE or plan.slices > MAX_SLICES:
        raise InputError("instance-too-large",
                         f"equivalence check limited to {MAX_SLICES} slices on <= {MAX_SIDE}x{MAX_SIDE}")
    if plan.return_window is None:
        raise InputError("missing-return-window", "slicing plan has no return window")
    mask = site_mask(lat, region)
    s_d = np.zeros(lat.n_sites, complex) if action.counter_terms is None else action.counter_terms.reshape(-1)
    ops = _plan_slices(action, plan, backend)
    return counter_action_matrices(ops, plan.return_window, mask, s_d)


def chain_slice(n_sites: int, slice_duration: float, mass: float = 1.0, spacing: float = 1.0,
                potential: Sequence[float] | None = None) -> np.ndarray:
    """Exact one-slice propagator of an open tight-binding chain (reflecting ends)."""
    if n_sites < 1:
        raise InputError("dimension-too-small", "chain needs at least one site")
    t = 1.0 / (2.0 * mass * spacing**2)
    H = np.zeros((n_sites, n_sites))
    for a in range(n_sites - 1):
        H[a, a + 1] = H[a + 1, a] = -t
        H[a, a] += t
        H[a + 1, a + 1] += t
    if potential is not None:
        H += np.diag(np.asarray(potential, dtype=float))
    return scipy.linalg.expm(-1j * slice_duration * H)


def absorbing_slice(n_sites: int) -> np.ndarray:
    """A slice that absorbs everything: rank zero, never invertible."""
    return np.zeros((n_sites, n_sites), dtype=complex)
