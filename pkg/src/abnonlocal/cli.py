"""Configuration-driven experiment runner.

Usage::

    abnonlocal <experiment> [--config run.yaml] [--set parameters.alpha=0.25] [flags]

A run document has the keys ``experiment``, ``seed``, ``output_dir`` and
``parameters``.  Command-line flags override document values.  The output
directory may also be overridden by the ``ABNONLOCAL_OUTPUT_DIR`` environment
variable (a ``--output-dir`` flag wins over both).

Exit status: 0 success, 1 invalid input, 2 numerical failure.  Errors are
written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .dof import Fermion, GaugeGroup, dof_report
from .errors import InputError, SimulationError
from .gauge import FluxSpec, LinkField, flux_link_field, gauge_transform, gauge_wavefunction, random_gauge
from .kernels import ActionConfig, build_kernel, iterate_propagation
from .lattice import SingularRegion, UnitsConvention, WaveFunction, make_lattice, singular_region
from .observables import (ExperimentConfig, WavepacketSpec, ab_cross_section, double_slit,
                          fringe_shift_scan, screen_intensity)
from .pathsum import brute_force_kernel
from .returns import (SlicingPlan, absorbing_slice, chain_slice, counter_action_equivalence, counter_action_matrices,
                      factorize_return, return_factorization_full)
from .winding import ab_resum, sector_decompose, two_class_split

ENV_OUTPUT_DIR = "ABNONLOCAL_OUTPUT_DIR"
EXPERIMENTS = ("propagate", "interfere", "scan", "winding", "return-check", "dof", "gauge-check",
               "scatter-oracle")
Backend = Literal["hopping", "sliced-gaussian", "local"]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeParams(Strict):
    nx: int = Field(ge=2)
    ny: int = Field(ge=2)
    spacing: float = Field(1.0, gt=0)
    boundary: Literal["absorbing", "reflecting"] = "reflecting"


class SourceParams(Strict):
    center: tuple[float, float]
    width: float = Field(gt=0)
    momentum: tuple[float, float] = (0.0, 0.0)


class PropagateParams(Strict):
    lattice: LatticeParams
    alpha: float
    flux_plaquette: tuple[int, int]
    source: SourceParams
    steps: int = Field(ge=0)
    slice_duration: float = Field(gt=0)
    backend: Backend = "hopping"
    mass: float = Field(1.0, gt=0)
    mask_radius: float | None = Field(None, ge=0)


class SlitParams(Strict):
    lattice: LatticeParams
    barrier_row: int
    slit_centers: tuple[int, int]
    slit_width: int = Field(ge=1)
    flux_plaquette: tuple[int, int]
    source: SourceParams
    screen_row: int
    steps: int = Field(ge=4)
    slice_duration: float = Field(gt=0)
    backend: Backend = "hopping"
    mass: float = Field(1.0, gt=0)
    singular_radius: float | None = Field(None, ge=0)


class InterfereParams(SlitParams):
    alpha: float


class ScanParams(SlitParams):
    alphas: list[float] = Field(min_length=3)


class WindingParams(Strict):
    lattice: LatticeParams
    slices: int = Field(ge=0)
    start: tuple[int, int] = Field(alias="from")
    end: tuple[int, int] = Field(alias="to")
    flux_plaquette: tuple[int, int]
    alpha: float
    slice_duration: float = Field(0.25, gt=0)
    mass: float = Field(1.0, gt=0)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ReturnParams(Strict):
    fixture: Literal["chain", "lattice"]
    sites: int | None = Field(None, ge=1)
    lattice: LatticeParams | None = None
    alpha: float = 0.0
    flux_plaquette: tuple[int, int] | None = None
    slices: int = Field(ge=3)
    window: tuple[int, int]
    region: list[int]
    counter_strength: float = Field(ge=0)
    slice_duration: float = Field(gt=0)
    backend: Backend = "hopping"
    # chain only: replace this slice by one that absorbs everything
    absorbing_slice: int | None = Field(None, ge=1)


class DofParams(Strict):
    group: str
    fermion: str


class GaugeCheckParams(Strict):
    lattice: LatticeParams
    alpha: float
    flux_plaquette: tuple[int, int]
    source: SourceParams
    steps: int = Field(ge=0)
    slice_duration: float = Field(gt=0)
    gauges: int = Field(ge=1)
    backend: Backend = "hopping"


class ScatterParams(Strict):
    alpha: float
    k: float
    thetas: int = Field(ge=1)


PARAMS: dict[str, type[Strict]] = {
    "propagate": PropagateParams, "interfere": InterfereParams, "scan": ScanParams,
    "winding": WindingParams, "return-check": ReturnParams, "dof": DofParams,
    "gauge-check": GaugeCheckParams, "scatter-oracle": ScatterParams,
}


class Envelope(Strict):
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    seed: int = 0
    output_dir: str = "output"
    parameters: dict[str, Any]


class RunConfig(Strict):
    experiment: str
    seed: int
    output_dir: str
    parameters: Strict


class ConfigError(InputError):
    def __init__(self, errors: list[dict]):
        super().__init__("validation-error", f"{len(errors)} validation error(s)")
        self.errors = errors

    def to_dict(self):
        return {"error": self.code, "message": str(self), "errors": self.errors}


def _path(loc) -> str:
    return ".".join(str(p) for p in loc)


def _errors(exc: ValidationError, prefix: tuple = ()) -> list[dict]:
    return [{"path": _path(prefix + tuple(e["loc"])), "message": e["msg"], "type": e["type"]}
            for e in exc.errors()]


def validate(doc: str | dict | None) -> RunConfig:
    """Parse and validate a run document, reporting every problem at once."""
    if isinstance(doc, str):
        try:
            doc = yaml.safe_load(doc)
        except yaml.YAMLError as e:
            raise ConfigError([{"path": "", "message": f"unparseable document: {e}", "type": "yaml"}])
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError([{"path": "", "message": "document must be a mapping", "type": "dict_type"}])
    errors: list[dict] = []
    env = None
    try:
        env = Envelope.model_validate(doc)
    except ValidationError as e:
        errors += _errors(e)
    experiment = doc.get("experiment")
    params = doc.get("parameters")
    model = PARAMS.get(experiment) if isinstance(experiment, str) else None
    parsed = None
    if model is not None and isinstance(params, dict):
        try:
            parsed = model.model_validate(params)
        except ValidationError as e:
            errors += _errors(e, ("parameters",))
    if errors:
        raise ConfigError(errors)
    return RunConfig(experiment=env.experiment, seed=env.seed, output_dir=env.output_dir, parameters=parsed)


def resolved(cfg: RunConfig) -> dict:
    return {"experiment": cfg.experiment, "seed": cfg.seed, "output_dir": cfg.output_dir,
            "parameters": cfg.parameters.model_dump(mode="json", by_alias=True)}


# -- experiments -------------------------------------------------------------


def _lattice(p: LatticeParams):
    return make_lattice(p.nx, p.ny, p.spacing, p.boundary)


def _slit_config(p: SlitParams, alpha: float) -> ExperimentConfig:
    return ExperimentConfig(
        lattice=_lattice(p.lattice), barrier_row=p.barrier_row, slit_centers=p.slit_centers,
        slit_width=p.slit_width, flux=FluxSpec(p.flux_plaquette, alpha),
        source=WavepacketSpec(p.source.center, p.source.width, p.source.momentum),
        screen_row=p.screen_row, steps=p.steps, slice_duration=p.slice_duration, backend=p.backend,
        mass=p.mass, singular_radius=p.singular_radius)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _run_propagate(p: PropagateParams, seed: int) -> dict[str, str]:
    lat = _lattice(p.lattice)
    flux = FluxSpec(p.flux_plaquette, p.alpha)
    action = ActionConfig(flux_link_field(lat, flux), UnitsConvention(mass=p.mass))
    kernel = build_kernel(lat, action, p.slice_duration, p.backend)
    psi = WavepacketSpec(p.source.center, p.source.width, p.source.momentum).build(lat)
    mask = None if p.mask_radius is None else singular_region(lat, flux.center(lat), p.mask_radius)
    norms = [psi.norm2]
    v = psi.vector
    for v in iterate_propagation(psi, kernel, p.steps, mask):
        norms.append(float(lat.spacing**2 * np.sum(np.abs(v) ** 2)))
    final = WaveFunction.from_vector(v, lat)
    dens = final.density
    rows = [(i, j, dens[j, i]) for j in range(lat.ny) for i in range(lat.nx)]
    return {"density.csv": _csv(("i", "j", "density"), rows),
            "norm.csv": _csv(("step", "norm2"), list(enumerate(norms))),
            "summary.json": _json({"steps": p.steps, "final_norm2": norms[-1]})}


def _run_interfere(p: InterfereParams, seed: int) -> dict[str, str]:
    res = double_slit(_slit_config(p, p.alpha))
    return {"intensity.csv": res.to_csv(), "summary.json": res.to_json() + "\n"}


def _run_scan(p: ScanParams, seed: int) -> dict[str, str]:
    res = fringe_shift_scan(_slit_config(p, p.alphas[0]), p.alphas)
    rows = list(zip(res.alphas, res.displacements, res.unwrapped))
    return {"scan.csv": _csv(("alpha", "displacement", "unwrapped"), rows), "scan.json": res.to_json() + "\n"}


def _run_winding(p: WindingParams, seed: int) -> dict[str, str]:
    lat = _lattice(p.lattice)
    flux = FluxSpec(p.flux_plaquette, p.alpha)
    start, end = lat.index(*p.start), lat.index(*p.end)
    report = sector_decompose(lat, p.slices, start, end, flux.center(lat), p.slice_duration, p.mass)
    resum = ab_resum(report, p.alpha)
    action = ActionConfig(flux_link_field(lat, flux), UnitsConvention(mass=p.mass))
    brute = brute_force_kernel(lat, action, p.slices, start, end, p.slice_duration).value
    split = two_class_split(report, p.alpha)
    summary = {"alpha": p.alpha, "ab_resum": [resum.real, resum.imag], "brute_force": [brute.real, brute.imag],
               "deviation": abs(resum - brute), "total_paths": report.total_paths,
               "left": [split.left.real, split.left.imag], "right": [split.right.real, split.right.imag],
               "relative_phase": split.relative_phase}
    return {"winding.json": report.to_json() + "\n", "summary.json": _json(summary)}


def _run_return(p: ReturnParams, seed: int) -> dict[str, str]:
    if p.fixture == "chain":
        if p.sites is None:
            raise InputError("missing-parameter", "chain fixture needs parameters.sites")
        n_sites = p.sites
        ops = [chain_slice(p.sites, p.slice_duration)] * p.slices
        if p.absorbing_slice is not None:
            if p.absorbing_slice > p.slices:
                raise InputError("invalid-absorbing-slice", f"absorbing_slice must be <= {p.slices}")
            ops[p.absorbing_slice - 1] = absorbing_slice(p.sites)
    else:
        if p.lattice is None:
            raise InputError("missing-parameter", "lattice fixture needs parameters.lattice")
        lat = _lattice(p.lattice)
        n_sites = lat.n_sites
        lf = (LinkField.trivial(lat) if p.flux_plaquette is None
              else flux_link_field(lat, FluxSpec(p.flux_plaquette, p.alpha)))
        ops = None
    if any(not 0 <= s < n_sites for s in p.region):
        raise InputError("site-out-of-bounds", f"region sites must lie in [0, {n_sites})")
    mask = np.zeros(n_sites, bool)
    mask[p.region] = True
    counter = np.where(mask, -1j * p.counter_strength, 0)
    if ops is not None:
        rep = counter_action_matrices(ops, p.window, mask, counter)
        fac = factorize_return(ops, p.window, mask)
    else:
        region = SingularRegion(frozenset(p.region), (float("nan"), float("nan")), 0.0)
        action = ActionConfig(lf, counter_terms=counter.reshape(lat.shape), counter_region=region)
        plan = SlicingPlan(p.slices * p.slice_duration, p.slices, p.window)
        rep = counter_action_equivalence(action, plan, region, p.backend)
        fac = return_factorization_full(action, plan, region, p.backend)
    doc = rep.to_dict()
    doc["factorization_residual"] = fac.residual
    return {"return.json": _json(doc)}


def _run_dof(p: DofParams, seed: int) -> dict[str, str]:
    rep = dof_report(GaugeGroup.parse(p.group), Fermion.parse(p.fermion))
    return {"dof.json": rep.to_json() + "\n"}


def _run_gauge_check(p: GaugeCheckParams, seed: int) -> dict[str, str]:
    lat = _lattice(p.lattice)
    rng = np.random.default_rng(seed)
    lf = flux_link_field(lat, FluxSpec(p.flux_plaquette, p.alpha))
    psi = WavepacketSpec(p.source.center, p.source.width, p.source.momentum).build(lat)

    def evolve(field, state):
        k = build_kernel(lat, ActionConfig(field), p.slice_duration, p.backend)
        v = state.vector
        for v in iterate_propagation(state, k, p.steps):
            pass
        return v

    ref = evolve(lf, psi)
    rows = []
    for n in range(p.gauges):
        g = random_gauge(lat, rng)
        lf_g = gauge_transform(lf, g)
        out = evolve(lf_g, gauge_wavefunction(psi, g))
        d_plaq = float(np.max(np.abs(lf_g.plaquette_phases() - lf.plaquette_phases())))
        d_dens = float(np.max(np.abs(np.abs(out) ** 2 - np.abs(ref) ** 2)))
        d_cov = float(np.max(np.abs(out - np.exp(1j * g.theta.reshape(-1)) * ref)))
        rows.append((n, d_plaq, d_dens, d_cov))
    worst = {"max_plaquette_change": max(r[1] for r in rows), "max_density_change": max(r[2] for r in rows),
             "max_covariance_defect": max(r[3] for r in rows)}
    return {"gauge.csv": _csv(("gauge", "plaquette_change", "density_change", "covariance_defect"), rows),
            "summary.json": _json(worst)}


def _run_scatter(p: ScatterParams, seed: int) -> dict[str, str]:
    thetas = np.linspace(-np.pi, np.pi, p.thetas + 2)[1:-1]
    thetas = thetas[thetas != 0]
    sigma = ab_cross_section(p.alpha, p.k, thetas)
    return {"cross_section.csv": _csv(("theta", "dsigma_dtheta"), zip(thetas, np.atleast_1d(sigma)))}


RUNNERS = {"propagate": _run_propagate, "interfere": _run_interfere, "scan": _run_scan,
           "winding": _run_winding, "return-check": _run_return, "dof": _run_dof,
           "gauge-check": _run_gauge_check, "scatter-oracle": _run_scatter}


def execute(cfg: RunConfig, output_dir: str | os.PathLike | None = None) -> dict[str, str]:
    """Run an experiment, write its outputs and manifest; return ``{file: text}``."""
    outputs = RUNNERS[cfg.experiment](cfg.parameters, cfg.seed)
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out / name).write_text(text)
    manifest = {
        "version": __version__,
        "config": resolved(cfg),
        "outputs": [{"file": name, "sha256": hashlib.sha256(text.encode()).hexdigest()}
                    for name, text in sorted(outputs.items())],
    }
    (out / "manifest.json").write_text(_json(manifest))
    return outputs


# -- command line ----------------------------------------------------------


FLAGS = {
    "alpha": float, "alphas": None, "steps": int, "slices": int, "slice-duration": float, "backend": str,
    "group": str, "fermion": str, "k": float, "thetas": int, "gauges": int,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="abnonlocal", description="Lattice path-integral AB experiments")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run document")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output-dir")
        sp.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override any document value, e.g. parameters.lattice.nx=32")
        for flag in FLAGS:
            sp.add_argument(f"--{flag}", dest=f"p_{flag.replace('-', '_')}", metavar="VALUE")
    return ap


def _assign(doc: dict, path: str, value):
    keys = path.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def build_document(args: argparse.Namespace) -> dict:
    doc: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise InputError("config-unreadable", str(e))
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError([{"path": "", "message": f"unparseable document: {e}", "type": "yaml"}])
        if not isinstance(doc, dict):
            raise ConfigError([{"path": "", "message": "document must be a mapping", "type": "dict_type"}])
    if "experiment" in doc and doc["experiment"] != args.experiment:
        raise ConfigError([{"path": "experiment", "type": "mismatch",
                            "message": f"document is for {doc['experiment']!r}, command is {args.experiment!r}"}])
    doc["experiment"] = args.experiment
    doc.setdefault("parameters", {})
    if args.seed is not None:
        doc["seed"] = args.seed
    for flag in FLAGS:
        raw = getattr(args, f"p_{flag.replace('-', '_')}")
        if raw is not None:
            _assign(doc, "parameters." + flag.replace("-", "_"), yaml.safe_load(raw))
    for item in args.set:
        path, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError([{"path": path, "message": "expected PATH=VALUE", "type": "override"}])
        _assign(doc, path, yaml.safe_load(raw))
    return doc


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = validate(build_document(args))
        out = args.output_dir or os.environ.get(ENV_OUTPUT_DIR) or cfg.output_dir
        outputs = execute(cfg, out)
    except SimulationError as e:
        sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
        return e.exit_status
    if cfg.experiment == "dof":
        rep = json.loads(outputs["dof.json"])
        w = max(map(len, rep))
        print("\n".join(f"{k.ljust(w)}  {rep[k]}" for k in rep))
    else:
        print(json.dumps({"experiment": cfg.experiment, "output_dir": str(out),
                          "files": sorted(outputs) + ["manifest.json"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
