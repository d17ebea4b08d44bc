"""Interference experiments, fringe analysis, momentum field and its curl, AB scattering.

Double-slit geometry: a source packet below a barrier row, two slits in the
barrier, a flux plaquette sitting in the barrier's shadow between the slits,
and a screen row further up.  The barrier, the sites around the flux and the
closed part of the barrier are zeroed after every step; intensity on the
screen is averaged over the final quarter of the steps.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import InputError
from .gauge import FluxSpec, GaugeFunction, LinkField, flux_link_field, gauge_transform, gauge_wavefunction
from .kernels import ActionConfig, Backend, as_backend, build_kernel, iterate_propagation
from .lattice import LatticeSpec, UnitsConvention, WaveFunction, make_lattice, singular_region, wavepacket

PEAK_PROMINENCE = 0.25
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class WavepacketSpec:
    center: tuple
    width: float
    momentum: tuple = (0.0, 0.0)

    def build(self, lattice: LatticeSpec) -> WaveFunction:
        return wavepacket(lattice, self.center, self.width, self.momentum)


@dataclass(frozen=True)
class ExperimentConfig:
    """Double-slit geometry.  Rows and columns are lattice indices."""

    lattice: LatticeSpec
    barrier_row: int
    slit_centers: tuple
    slit_width: int
    flux: FluxSpec
    source: WavepacketSpec
    screen_row: int
    steps: int
    slice_duration: float
    backend: Backend = Backend.HOPPING
    mass: float = 1.0
    singular_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "backend", as_backend(self.backend))
        object.__setattr__(self, "slit_centers", tuple(int(c) for c in self.slit_centers))
        self.validate()

    def validate(self):
        lat = self.lattice
        bad = []
        if len(self.slit_centers) != 2:
            raise InputError("invalid-geometry", "exactly two slit centers are required")
        left, right = sorted(self.slit_centers)
        src_row = self.source.center[1] / lat.spacing
        if not src_row < self.barrier_row < self.screen_row:
            bad.append("barrier_row must lie strictly between the source row and screen_row")
        if not 0 <= self.screen_row < lat.ny:
            bad.append("screen_row outside the grid")
        if self.slit_width < 1:
            bad.append("slit_width must be >= 1")
        lo, hi = left - (self.slit_width - 1) // 2, right + self.slit_width // 2
        if lo < 0 or hi >= lat.nx:
            bad.append("slits extend beyond the grid")
        if right - left < self.slit_width + 1:
            bad.append("slits overlap or touch")
        pi, pj = self.flux.plaquette
        if not left < pi + 0.5 < right:
            bad.append("flux plaquette must lie between the slit columns")
        if not self.barrier_row <= pj < self.screen_row:
            bad.append("flux plaquette must sit behind the barrier, before the screen")
        if self.steps < 4:
            bad.append("steps must be >= 4 to average over a final quarter")
        if not self.slice_duration > 0:
            bad.append("slice_duration must be > 0")
        if bad:
            raise InputError("invalid-geometry", "; ".join(bad), problems=len(bad))

    @property
    def midline(self) -> float:
        """Column midway between the slits (the mirror axis)."""
        return 0.5 * sum(self.slit_centers)

    def with_alpha(self, alpha: float) -> "ExperimentConfig":
        return replace(self, flux=FluxSpec(self.flux.plaquette, float(alpha)))

    def blocked_mask(self) -> np.ndarray:
        """Flat mask: barrier row minus the slit openings, plus the singular region."""
        lat = self.lattice
        m = np.zeros(lat.shape, dtype=bool)
        m[self.barrier_row, :] = True
        for c in self.slit_centers:
            m[self.barrier_row, c - (self.slit_width - 1) // 2: c + self.slit_width // 2 + 1] = False
        m = m.reshape(-1)
        region = singular_region(lat, self.flux.center(lat), self.singular_radius)
        m[list(region.sites)] = True
        return m


def reference_geometry(alpha: float = 0.0, n: int = 64) -> ExperimentConfig:
    """The tuned mirror-symmetric double slit on an ``n`` x ``n`` absorbing grid (n = 64 nominal)."""
    s = n / 64.0
    lat = make_lattice(n, n, 1.0, "absorbing")
    mid = n // 2
    sep = round(7 * s)
    barrier = round(22 * s)
    return ExperimentConfig(
        lattice=lat, barrier_row=barrier, slit_centers=(mid - 1 - sep, mid + sep), slit_width=3,
        flux=FluxSpec((mid - 1, barrier), alpha),
        source=WavepacketSpec((mid - 0.5, 10 * s), 5 * s, (0.0, 1.5)),
        screen_row=round(54 * s), steps=round(120 * s), slice_duration=0.5)


# -- running ---------------------------------------------------------------


def _action(config: ExperimentConfig, link_field: LinkField | None) -> ActionConfig:
    lf = flux_link_field(config.lattice, config.flux) if link_field is None else link_field
    return ActionConfig(lf, UnitsConvention(mass=config.mass))


def screen_intensity(config: ExperimentConfig, link_field: LinkField | None = None,
                     psi0: WaveFunction | None = None) -> np.ndarray:
    """Time-averaged |psi|^2 along the screen row over the final quarter of the steps.

    ``link_field`` and ``psi0`` override the string-gauge field and the source
    packet (used to check gauge invariance).
    """
    lat = config.lattice
    kernel = build_kernel(lat, _action(config, link_field), config.slice_duration, config.backend)
    psi = config.source.build(lat) if psi0 is None else psi0
    n_avg = config.steps // 4
    start = config.steps - n_avg
    acc = np.zeros(lat.nx)
    for step, v in enumerate(iterate_propagation(psi, kernel, config.steps, config.blocked_mask())):
        if step >= start:
            acc += np.abs(v.reshape(lat.shape)[config.screen_row]) ** 2
    return acc / n_avg


def final_state(config: ExperimentConfig, link_field: LinkField | None = None,
                psi0: WaveFunction | None = None) -> WaveFunction:
    lat = config.lattice
    kernel = build_kernel(lat, _action(config, link_field), config.slice_duration, config.backend)
    psi = config.source.build(lat) if psi0 is None else psi0
    v = psi.vector
    for v in iterate_propagation(psi, kernel, config.steps, config.blocked_mask()):
        pass
    return WaveFunction.from_vector(v, lat)


def gauge_transformed_intensity(config: ExperimentConfig, g: GaugeFunction) -> np.ndarray:
    """Screen intensity with the link field and source both gauge transformed by ``g``."""
    lf = gauge_transform(flux_link_field(config.lattice, config.flux), g)
    psi = gauge_wavefunction(config.source.build(config.lattice), g)
    return screen_intensity(config, lf, psi)


# -- fringe analysis -------------------------------------------------------


def _parabolic(y: np.ndarray, k: int) -> float:
    """Vertex of the parabola through y[k-1], y[k], y[k+1]."""
    if 0 < k < len(y) - 1:
        a, b, c = y[k - 1], y[k], y[k + 1]
        den = a - 2 * b + c
        if den != 0:
            return k + 0.5 * (a - c) / den
    return float(k)


def fringe_peaks(intensity: np.ndarray, prominence: float = PEAK_PROMINENCE) -> np.ndarray:
    """Subpixel positions of peaks with prominence above ``prominence * max``."""
    y = np.asarray(intensity, dtype=float)
    if y.max() <= 0:
        return np.empty(0)
    idx, props = find_peaks(y, prominence=prominence * y.max(), plateau_size=(1, None))
    out = []
    for k, lo, hi in zip(idx, props["left_edges"], props["right_edges"]):
        # flat tops: take the plateau middle
        out.append(0.5 * (lo + hi) if hi > lo else _parabolic(y, int(k)))
    return np.array(out, dtype=float)


def fringe_period(peaks: np.ndarray, midline: float, half_width: float) -> float:
    """Median spacing of consecutive peaks within ``half_width`` of the midline."""
    central = np.sort(peaks[np.abs(peaks - midline) <= half_width])
    if len(central) < 2:
        raise InputError("no-fringes-found", f"found {len(central)} central peak(s); need at least two",
                         peaks=len(central))
    return float(np.median(np.diff(central)))


def fringe_displacement(intensity: np.ndarray, reference: np.ndarray, midline: float, period: float,
                        window: float = 1.25) -> float:
    """Shift ``d`` maximizing the correlation of I(x) with I_ref(x - d) near the midline.

    Integer lags in ``[-0.75 P, 0.75 P]`` are scored by Pearson correlation
    over columns within ``window * P`` of the midline; the best lag is refined
    by a parabola.  Lags scoring within ``TIE_RTOL`` of the best are resolved
    toward the smaller magnitude, then the positive sign.
    """
    x = np.asarray(intensity, float)
    ref = np.asarray(reference, float)
    w = window * period
    cols = np.arange(int(math.ceil(midline - w)), int(math.floor(midline + w)) + 1)
    cols = cols[(cols >= 0) & (cols < len(x))]
    max_lag = int(math.ceil(0.75 * period))
    lags = np.arange(-max_lag, max_lag + 1)
    score = np.full(len(lags), -np.inf)
    for n, d in enumerate(lags):
        src = cols - d
        ok = (src >= 0) & (src < len(ref))
        a = x[cols[ok]] - x[cols[ok]].mean()
        b = ref[src[ok]] - ref[src[ok]].mean()
        den = math.sqrt(float(a @ a) * float(b @ b))
        if den > 0:
            score[n] = float(a @ b) / den
    best = score.max()
    if not np.isfinite(best):
        raise InputError("no-fringes-found", "intensity is flat; no correlation defined")
    ties = np.flatnonzero(score >= best - TIE_RTOL * abs(best))
    k = int(min(ties, key=lambda i: (abs(lags[i]), -lags[i])))
    return float(_parabolic(score, k) - max_lag)


@dataclass(frozen=True, eq=False)
class FringeResult:
    alpha: float
    intensity: np.ndarray
    peaks: np.ndarray
    period: float
    displacement: float
    reference_period: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("column", "intensity"))
        for c, v in enumerate(self.intensity):
            w.writerow((c, repr(float(v))))
        return buf.getvalue()

    def summary(self) -> dict:
        return {"alpha": self.alpha, "period": self.period, "reference_period": self.reference_period,
                "displacement": self.displacement, "peaks": [float(p) for p in self.peaks]}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _half_width(config: ExperimentConfig) -> float:
    return 0.3 * config.lattice.nx


def analyze_fringes(config: ExperimentConfig, intensity: np.ndarray, reference: np.ndarray) -> FringeResult:
    mid, hw = config.midline, _half_width(config)
    ref_period = fringe_period(fringe_peaks(reference), mid, hw)
    peaks = fringe_peaks(intensity)
    period = fringe_period(peaks, mid, hw)
    disp = fringe_displacement(intensity, reference, mid, ref_period)
    return FringeResult(float(config.flux.alpha), np.asarray(intensity), peaks, period, disp, ref_period)


def double_slit(config: ExperimentConfig, reference: np.ndarray | None = None) -> FringeResult:
    """Run the experiment and measure fringes against the alpha = 0 pattern."""
    if reference is None:
        reference = screen_intensity(config.with_alpha(0.0))
    return analyze_fringes(config, screen_intensity(config), reference)


@dataclass(frozen=True)
class ScanResult:
    alphas: tuple
    displacements: tuple
    unwrapped: tuple
    period: float
    slope: float

    @property
    def slope_periods(self) -> float:
        """Fitted displacement per unit alpha, in fringe periods."""
        return self.slope / self.period

    def to_json(self) -> str:
        doc = asdict(self)
        doc["slope_periods"] = self.slope_periods
        doc["rows"] = [{"alpha": a, "displacement": d, "unwrapped": u}
                       for a, d, u in zip(self.alphas, self.displacements, self.unwrapped)]
        return json.dumps(doc, indent=2, sort_keys=True)


def fringe_shift_scan(config: ExperimentConfig, alphas: Sequence[float]) -> ScanResult:
    """Displacement versus alpha, with a linear fit of the unwrapped displacements.

    Each displacement is unwrapped by whole periods toward the previous one,
    in the order given.
    """
    alphas = [float(a) for a in alphas]
    if len(alphas) < 3:
        raise InputError("too-few-alphas", f"need at least 3 alphas, got {len(alphas)}")
    reference = screen_intensity(config.with_alpha(0.0))
    results = [double_slit(config.with_alpha(a), reference) for a in alphas]
    period = results[0].reference_period
    raw = [r.displacement for r in results]
    unwrapped = [raw[0]]
    for d in raw[1:]:
        k = round((unwrapped[-1] - d) / period)
        unwrapped.append(d + k * period)
    slope = float(np.polyfit(alphas, unwrapped, 1)[0]) if len(set(alphas)) > 1 else float("nan")
    return ScanResult(tuple(alphas), tuple(raw), tuple(unwrapped), period, slope)


# -- momentum field and curl -------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentumField:
    """p = Im(psi* grad psi) / |psi|^2; ``defined`` is False where p is not available."""

    px: np.ndarray
    py: np.ndarray
    defined: np.ndarray
    lattice: LatticeSpec

    def velocity(self, mass: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        return self.px / mass, self.py / mass


def momentum_field(psi: WaveFunction, floor: float = 1e-12) -> MomentumField:
    """Centered-difference momentum field.

    Boundary sites (no centered difference) and sites with ``|psi|^2`` below
    ``floor * max |psi|^2`` are undefined and hold NaN.
    """
    g = psi.grid
    a = psi.lattice.spacing
    rho = np.abs(g) ** 2
    defined = rho >= floor * rho.max() if rho.max() > 0 else np.zeros(rho.shape, bool)
    defined[0, :] = defined[-1, :] = False
    defined[:, 0] = defined[:, -1] = False
    px = np.full(g.shape, np.nan)
    py = np.full(g.shape, np.nan)
    inner = (slice(1, -1), slice(1, -1))
    c = np.conj(g[inner])
    with np.errstate(divide="ignore", invalid="ignore"):
        px[inner] = np.imag(c * (g[1:-1, 2:] - g[1:-1, :-2])) / (2 * a) / rho[inner]
        py[inner] = np.imag(c * (g[2:, 1:-1] - g[:-2, 1:-1])) / (2 * a) / rho[inner]
    px[~defined] = np.nan
    py[~defined] = np.nan
    return MomentumField(px, py, defined, psi.lattice)


@dataclass(frozen=True, eq=False)
class CurlField:
    """Per-plaquette curl; NaN where any corner momentum is undefined."""

    curl: np.ndarray
    defined: np.ndarray
    spacing: float

    def max_abs(self, rows: slice | None = None) -> float:
        c = self.curl if rows is None else self.curl[rows]
        d = self.defined if rows is None else self.defined[rows]
        return float(np.max(np.abs(c[d]))) if d.any() else float("nan")

    def half_phase(self) -> np.ndarray:
        """Half the circulation per plaquette, the momentum contribution to the interference phase."""
        return 0.5 * self.curl * self.spacing**2


def curl_diagnostic(p: MomentumField, lattice: LatticeSpec | None = None) -> CurlField:
    """Counterclockwise circulation of p around each plaquette divided by its area.

    Edge integrals use the average of the two end-point values.
    """
    lat = p.lattice if lattice is None else lattice
    a = lat.spacing
    px, py = p.px, p.py
    bottom = 0.5 * (px[:-1, :-1] + px[:-1, 1:])
    top = 0.5 * (px[1:, :-1] + px[1:, 1:])
    left = 0.5 * (py[:-1, :-1] + py[1:, :-1])
    right = 0.5 * (py[:-1, 1:] + py[1:, 1:])
    circ = a * (bottom + right - top - left)
    d = p.defined
    defined = d[:-1, :-1] & d[:-1, 1:] & d[1:, :-1] & d[1:, 1:]
    curl = np.where(defined, circ / a**2, np.nan)
    return CurlField(curl, defined, a)


def plane_wave(lattice: LatticeSpec, k: Sequence[float]) -> WaveFunction:
    x, y = lattice.meshgrid()
    g = np.exp(1j * (k[0] * x + k[1] * y))
    return WaveFunction(g / math.sqrt(lattice.spacing**2 * g.size), lattice)


@dataclass(frozen=True)
class CurlComparison:
    baseline: float
    merged: float

    @property
    def ratio(self) -> float:
        return self.merged / self.baseline if self.baseline > 0 else float("inf")


def curl_comparison(config: ExperimentConfig) -> CurlComparison:
    """Max |curl p| of a freely evolved plane wave versus the region behind the slits.

    The plane wave carries the source momentum and is evolved with the same
    kernel and step count, without barrier or flux.
    """
    lat = config.lattice
    free = build_kernel(lat, ActionConfig(LinkField.trivial(lat), UnitsConvention(mass=config.mass)),
                        config.slice_duration, config.backend)
    v = plane_wave(lat, config.source.momentum).vector
    for v in iterate_propagation(plane_wave(lat, config.source.momentum), free, config.steps):
        pass
    baseline = curl_diagnostic(momentum_field(WaveFunction.from_vector(v, lat))).max_abs()
    psi = final_state(config)
    merged = curl_diagnostic(momentum_field(psi)).max_abs(slice(config.barrier_row + 1, config.screen_row))
    return CurlComparison(baseline, merged)


# -- scattering oracle -----------------------------------------------------


def ab_cross_section(alpha, k, theta):
    """Differential AB cross section sin^2(pi alpha) / (2 pi k sin^2(theta / 2)).

    Broadcasts over array arguments.
    """
    alpha, k, theta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(k, float), np.asarray(theta, float))
    if np.any(~(k > 0)):
        raise InputError("non-positive-k", "wavenumber must be > 0")
    s = np.sin(0.5 * theta) ** 2
    if np.any(s < 1e-300):
        raise InputError("forward-divergence", "cross section diverges in the forward direction theta = 0")
    frac = alpha - np.round(alpha)
    out = np.sin(np.pi * frac) ** 2 / (2 * np.pi * k * s)
    return float(out) if out.ndim == 0 else out
