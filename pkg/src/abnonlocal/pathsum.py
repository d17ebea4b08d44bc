"""Exhaustive lattice path sums (the literal sum over histories).

A path ``q_0 -> q_1 -> ... -> q_n`` contributes the product of one-slice
kernel entries ``K[q_k, q_{k-1}]``.  Only steps with a structurally nonzero
kernel entry are enumerated, so the ``local`` backend gives stay-or-hop
paths while dense backends range over every site sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .kernels import ActionConfig, Backend, TransferKernel, build_kernel
from .lattice import LatticeSpec

MAX_SLICES = 8
MAX_SIDE = 6
MAX_PATHS = 4_000_000


@dataclass(frozen=True)
class PathSum:
    value: complex
    path_count: int
    from_site: int
    to_site: int
    slices: int

    def to_json(self, windings: dict | None = None) -> str:
        doc = {"from": self.from_site, "to": self.to_site, "slices": self.slices,
               "path_count": self.path_count, "re": self.value.real, "im": self.value.imag}
        if windings is not None:
            doc["windings"] = [{"n": int(n), "re": complex(v).real, "im": complex(v).imag,
                                "count": int(c)} for n, (v, c) in sorted(windings.items())]
        return json.dumps(doc, indent=2, sort_keys=True)


def _reachability(support: np.ndarray, target: int, slices: int) -> list[np.ndarray]:
    """reach[r][s]: can site s reach target in exactly r steps."""
    reach = [np.zeros(support.shape[0], dtype=bool)]
    reach[0][target] = True
    for _ in range(slices):
        # step s -> s' allowed iff support[s', s]
        reach.append((support.T.astype(np.int64) @ reach[-1].astype(np.int64)) > 0)
    return reach


def count_paths(support: np.ndarray, slices: int, start: int, end: int) -> int:
    counts = np.zeros(support.shape[0], dtype=object)
    counts[start] = 1
    adj = support.astype(object)
    for _ in range(slices):
        counts = adj.dot(counts)
    return int(counts[end])


def enumerate_paths(matrix: np.ndarray, slices: int, start: int, end: int,
                    max_paths: int = MAX_PATHS) -> tuple[np.ndarray, np.ndarray]:
    """All paths from ``start`` to ``end`` with nonzero step amplitudes.

    Returns
    -------
    paths : int array (n_paths, slices + 1)
    amplitudes : complex array (n_paths,)
        Product of kernel entries along each path.
    """
    support = matrix != 0
    n = support.shape[0]
    total = count_paths(support, slices, start, end)
    if total > max_paths:
        raise InputError("instance-too-large", f"{total} paths exceed the enumeration limit {max_paths}",
                         path_count=total)
    if total == 0:
        return np.empty((0, slices + 1), dtype=np.int32), np.empty(0, dtype=complex)
    if slices == 0:
        ok = start == end
        return (np.array([[start]] if ok else np.empty((0, 1), int), dtype=np.int32),
                np.array([1.0 + 0j] if ok else [], dtype=complex))
    reach = _reachability(support, end, slices)
    successors = [np.flatnonzero(support[:, s]) for s in range(n)]
    paths = np.array([[start]], dtype=np.int32)
    amps = np.ones(1, dtype=complex)
    for step in range(1, slices + 1):
        remaining = slices - step
        last = paths[:, -1]
        nxt_lists = [successors[s][reach[remaining][successors[s]]] for s in range(n)]
        counts = np.array([len(nxt_lists[s]) for s in last], dtype=np.int64)
        parent = np.repeat(np.arange(len(last)), counts)
        nxt = np.concatenate([nxt_lists[s] for s in last]) if len(last) else np.empty(0, np.int32)
        paths = np.concatenate([paths[parent], nxt[:, None].astype(np.int32)], axis=1)
        amps = amps[parent] * matrix[nxt, last[parent]]
    return paths, amps


def path_sum(kernel: TransferKernel, slices: int, start: int, end: int,
             max_paths: int = MAX_PATHS) -> PathSum:
    _, amps = enumerate_paths(kernel.matrix, slices, start, end, max_paths)
    return PathSum(complex(np.sum(amps)), len(amps), int(start), int(end), int(slices))


def brute_force_kernel(lattice: LatticeSpec, action: ActionConfig, slices: int, start: int, end: int,
                       slice_duration: float = 0.25, backend: str | Backend = Backend.LOCAL,
                       max_paths: int = MAX_PATHS) -> PathSum:
    """Sum over every lattice path of the product of one-slice amplitudes."""
    if slices > MAX_SLICES or lattice.nx > MAX_SIDE or lattice.ny > MAX_SIDE:
        raise InputError("instance-too-large",
                         f"brute force limited to {MAX_SLICES} slices on <= {MAX_SIDE}x{MAX_SIDE} lattices")
    if slices < 0:
        raise InputError("negative-steps", "slices must be >= 0")
    for s in (start, end):
        lattice.site(s)
    kernel = build_kernel(lattice, action, slice_duration, backend)
    return path_sum(kernel, slices, start, end, max_paths)
