"""Winding-number sectors of the lattice path sum around a flux plaquette.

Open paths are closed virtually by the straight segment from the end point
back to the start; the winding of that closed loop about the flux center
labels the path.  With the string gauge (cut along +x from the flux) a path
of winding ``n`` picks up ``exp(2 pi i alpha (n - c))``, where ``c`` is the
signed number of times the closing segment itself crosses the cut.  ``c`` is
zero unless the end points straddle the cut.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .gauge import flux_angle
from .kernels import ActionConfig, Backend, build_kernel
from .lattice import LatticePath, LatticeSpec
from .pathsum import enumerate_paths

MAX_SIDE = 5
MAX_SLICES = 6
LEFT, RIGHT = "left", "right"


def segment_angles(p: np.ndarray, q: np.ndarray, center) -> np.ndarray:
    """Signed angle swept about ``center`` along straight segments p -> q.

    NaN where the segment passes through (or ends on) the center.
    """
    c = np.asarray(center, dtype=float)
    u = np.asarray(p, dtype=float) - c
    v = np.asarray(q, dtype=float) - c
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = (u * v).sum(-1)
    scale = np.maximum(np.hypot(*np.moveaxis(u, -1, 0)) * np.hypot(*np.moveaxis(v, -1, 0)), 1e-300)
    hit = (np.abs(cross) <= 1e-12 * scale) & (dot <= 0)
    return np.where(hit, np.nan, np.arctan2(cross, dot))


def winding_number(path: LatticePath, center) -> int:
    pos = path.positions()
    closed = np.vstack([pos, pos[:1]])
    ang = segment_angles(closed[:-1], closed[1:], center)
    if np.isnan(ang).any():
        raise InputError("center-on-path", f"center {tuple(center)} lies on the path or its closure")
    return int(round(ang.sum() / (2 * math.pi)))


def closure_crossings(lattice: LatticeSpec, start: int, end: int, center) -> int:
    """Signed crossings of the +x cut ray by the closing segment end -> start (upward = +1)."""
    p, q = lattice.position(end), lattice.position(start)
    cx, cy = center
    if (p[1] - cy) * (q[1] - cy) >= 0:
        return 0
    s = (cy - p[1]) / (q[1] - p[1])
    x = p[0] + s * (q[0] - p[0])
    if x <= cx:
        return 0
    return 1 if q[1] > p[1] else -1


def side_of(mean_pos: np.ndarray, start_pos, end_pos, center) -> np.ndarray:
    """+1 where the mean position lies left of the flux (relative to the travel direction), -1 right, 0 tie.

    The travel direction is end - start, or +y for closed paths.
    """
    d = np.asarray(end_pos, float) - np.asarray(start_pos, float)
    if not np.any(d):
        d = np.array([0.0, 1.0])
    r = mean_pos - np.asarray(center, float)
    cross = d[0] * r[..., 1] - d[1] * r[..., 0]
    tol = 1e-12 * np.hypot(*d)
    return np.where(cross > tol, 1, np.where(cross < -tol, -1, 0))


@dataclass(frozen=True)
class WindingReport:
    from_site: tuple
    to_site: tuple
    slices: int
    sectors: dict
    path_counts: dict
    flux_center: tuple
    closure_crossings: int = 0
    # (n, "left"/"right") -> partial amplitude; ties split evenly
    side_sectors: dict = field(default_factory=dict)

    @property
    def total(self) -> complex:
        return complex(sum(self.sectors.values()))

    @property
    def total_paths(self) -> int:
        return int(sum(self.path_counts.values()))

    def to_json(self) -> str:
        doc = {
            "from": list(self.from_site),
            "to": list(self.to_site),
            "slices": self.slices,
            "flux_center": list(self.flux_center),
            "closure_crossings": self.closure_crossings,
            "sectors": [{"n": int(n), "re": self.sectors[n].real, "im": self.sectors[n].imag,
                         "count": int(self.path_counts[n])} for n in sorted(self.sectors)],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "WindingReport":
        doc = json.loads(text)
        sectors = {int(s["n"]): complex(s["re"], s["im"]) for s in doc["sectors"]}
        counts = {int(s["n"]): int(s["count"]) for s in doc["sectors"]}
        return cls(tuple(doc["from"]), tuple(doc["to"]), int(doc["slices"]), sectors, counts,
                   tuple(doc["flux_center"]), int(doc.get("closure_crossings", 0)))


def sector_decompose(lattice: LatticeSpec, slices: int, start: int, end: int, flux_center,
                     slice_duration: float = 0.25, mass: float = 1.0) -> WindingReport:
    """Group the flux-free stay-or-hop path amplitudes by winding number."""
    if lattice.nx > MAX_SIDE or lattice.ny > MAX_SIDE or slices > MAX_SLICES:
        raise InputError("instance-too-large",
                         f"sector decomposition limited to {MAX_SLICES} slices on <= {MAX_SIDE}x{MAX_SIDE}")
    center = tuple(float(c) for c in flux_center)
    kernel = build_kernel(lattice, ActionConfig.free(lattice, mass), slice_duration, Backend.LOCAL)
    paths, amps = enumerate_paths(kernel.matrix, slices, start, end)
    pos = lattice.positions()
    table = segment_angles(pos[:, None, :], pos[None, :, :], center)
    sweep = table[paths[:, :-1], paths[:, 1:]].sum(axis=1) + table[end, start]
    if np.isnan(sweep).any():
        raise InputError("center-on-path", f"flux center {center} lies on a path or the closing segment")
    n = np.rint(sweep / (2 * math.pi)).astype(int)
    side = side_of(pos[paths].mean(axis=1), pos[start], pos[end], center)

    sectors, counts, side_sectors = {}, {}, {}
    for w in np.unique(n):
        sel = n == w
        sectors[int(w)] = complex(np.sum(amps[sel]))
        counts[int(w)] = int(sel.sum())
        left = complex(np.sum(amps[sel & (side == 1)]))
        right = complex(np.sum(amps[sel & (side == -1)]))
        tie = complex(np.sum(amps[sel & (side == 0)]))
        side_sectors[(int(w), LEFT)] = left + 0.5 * tie
        side_sectors[(int(w), RIGHT)] = right + 0.5 * tie
    return WindingReport(lattice.site(start), lattice.site(end), int(slices), sectors, counts, center,
                         closure_crossings(lattice, start, end, center), side_sectors)


def ab_resum(report: WindingReport, alpha: float) -> complex:
    """Flux-inserted kernel rebuilt from flux-free sectors: sum_n exp(2 pi i alpha (n - c)) K_n."""
    phase = flux_angle(alpha)
    c = report.closure_crossings
    return complex(sum(np.exp(1j * phase * (n - c)) * k for n, k in sorted(report.sectors.items())))


@dataclass(frozen=True)
class TwoClassSplit:
    left: complex
    right: complex
    alpha: float

    @property
    def total(self) -> complex:
        return self.left + self.right

    @property
    def relative_phase(self) -> float:
        """arg(left / right) in (-pi, pi]."""
        return float(np.angle(self.left * np.conj(self.right)))


def two_class_split(report: WindingReport, alpha: float = 0.0) -> TwoClassSplit:
    """Coarse left/right view of the sector decomposition at flux ``alpha``."""
    if not report.side_sectors:
        raise InputError("missing-side-tags", "report carries no per-path side tags")
    phase = flux_angle(alpha)
    c = report.closure_crossings
    acc = {LEFT: 0j, RIGHT: 0j}
    for (n, side), amp in sorted(report.side_sectors.items()):
        acc[side] += np.exp(1j * phase * (n - c)) * amp
    return TwoClassSplit(complex(acc[LEFT]), complex(acc[RIGHT]), float(alpha))
