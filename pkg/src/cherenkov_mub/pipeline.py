"""End-to-end runs: kernel, densities, blur, binning, criteria, artifacts."""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from ._validation import ConvergenceError, ValidationError
from .criteria import certify
from .kernel import PhysicalScenario, build_kernel, reference_scenario, trapezoid_weights
from .measurement import (
    MubPair,
    ResolutionProfile,
    counts_to_probabilities,
    density_pp,
    density_xx,
    measurement_tables,
)
from .optimizer import optimize_periods

log = logging.getLogger(__name__)

OUTPUTS = ("report", "densities", "kernel", "trace")


class StageError(Exception):
    """Failure in one pipeline stage; ``cause`` keeps the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def scenario_from_config(block):
    block = dict(block or {})
    preset = block.pop("preset", "reference")
    if preset == "reference":
        base = reference_scenario().to_dict()
    elif preset in ("none", None):
        base = PhysicalScenario().to_dict()
    else:
        raise ValidationError(f"unknown scenario preset {preset!r}")
    if "grid" in block:
        base["grid"] = dict(base["grid"], **block.pop("grid"))
    base.update(block)
    return PhysicalScenario.from_dict(base)


def resolution_from_config(block):
    block = dict(block or {})
    preset = block.pop("preset", None)
    base = ResolutionProfile.experimental().to_dict() if preset == "experimental" else {}
    if preset not in (None, "experimental", "ideal"):
        raise ValidationError(f"unknown resolution preset {preset!r}")
    base.update(block)
    unknown = set(base) - {"fwhm_x_e", "fwhm_p_e", "fwhm_x_g", "fwhm_p_g"}
    if unknown:
        raise ValidationError(f"unknown resolution fields: {sorted(unknown)}")
    return ResolutionProfile(**base)


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a run's outputs.

    binning: {"T_x", "x_cen", "p_cen"} for a fixed MubPair, or
        {"optimize": true, "bounds": [lo, hi], "tol", "centers"}.
    counts: {"xx": csv path, "pp": csv path} switches to the counts path.
    """

    scenario: PhysicalScenario = field(default_factory=reference_scenario)
    resolution: ResolutionProfile = field(default_factory=ResolutionProfile)
    binning: dict = field(default_factory=lambda: {"T_x": 10.0})
    outputs: tuple = ("report",)
    seed: int = 0
    x_max: float = 30.0
    counts: dict = None

    def __post_init__(self):
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ValidationError(f"unknown outputs {sorted(bad)}; choose from {OUTPUTS}")
        if not self.binning.get("optimize") and "T_x" not in self.binning and self.counts is None:
            raise ValidationError("binning needs T_x or optimize: true")
        if self.counts is not None and not {"xx", "pp"} <= set(self.counts):
            raise ValidationError("counts mode needs 'xx' and 'pp' count files")

    @classmethod
    def from_config(cls, cfg, base_dir=None):
        cfg = dict(cfg)
        known = {"scenario", "resolution", "binning", "outputs", "seed", "x_max", "counts"}
        unknown = set(cfg) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        counts = cfg.get("counts")
        if counts is not None and base_dir is not None:
            counts = {k: str(Path(base_dir) / v) for k, v in counts.items()}
        return cls(
            scenario=scenario_from_config(cfg.get("scenario")),
            resolution=resolution_from_config(cfg.get("resolution")),
            binning=dict(cfg.get("binning") or {"T_x": 10.0}),
            outputs=tuple(cfg.get("outputs") or ("report",)),
            seed=int(cfg.get("seed", 0)),
            x_max=float(cfg.get("x_max", 30.0)),
            counts=counts,
        )

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "resolution": self.resolution.to_dict(),
            "binning": self.binning,
            "outputs": list(self.outputs),
            "seed": self.seed,
            "x_max": self.x_max,
            "counts": self.counts,
        }

    def digest(self):
        blob = json.dumps(io._jsonable(self.to_dict()), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stage(name, stages, fn, *args, **kwargs):
    stages.append(name)
    log.info("stage %s", name)
    try:
        return fn(*args, **kwargs)
    except (ValidationError, ConvergenceError) as exc:
        raise StageError(name, exc) from exc


def _counts_tables(manifest):
    tables = {}
    for key in ("xx", "pp"):
        t = counts_to_probabilities(io.read_counts_csv(manifest.counts[key]))
        basis = "position" if key == "xx" else "momentum"
        tables[key] = replace(t, basis_e=basis, basis_g=basis)
    return tables


def run_certify(manifest, outdir=None, kernel=None):
    """Run the full certification; returns (CertificationReport, {artifact: path})."""
    stages = []
    h = manifest.digest()
    optimization = None
    if manifest.counts is not None:
        tables = _stage("counts", stages, _counts_tables, manifest)
        report = _stage("criteria", stages, certify, tables, None, {"source": "counts"})
        kernel = None
    else:
        if kernel is None:
            kernel = _stage("kernel", stages, build_kernel, manifest.scenario)
        xx = _stage("densities", stages, density_xx, kernel, manifest.x_max)
        b = manifest.binning
        if b.get("optimize"):
            res = _stage("optimize", stages, optimize_periods, kernel, manifest.resolution,
                         bounds=tuple(b.get("bounds", (2.0, 20.0))), tol=float(b.get("tol", 1e-3)),
                         x_max=manifest.x_max, optimize_centers=bool(b.get("centers", True)),
                         xx_density=xx)
            pair = MubPair.from_period(res.best_Tx, *res.best_centers)
            optimization = res
        else:
            pair = MubPair.from_period(float(b["T_x"]), float(b.get("x_cen", 0.0)), float(b.get("p_cen", 0.0)))
        tables = _stage("binning", stages, measurement_tables, kernel, pair, manifest.resolution,
                        manifest.x_max, xx)
        binning = {"T_x": pair.T_x, "T_p": pair.T_p, "x_cen": pair.pos.center, "p_cen": pair.mom.center,
                   "p_cen_electron": pair.mom.mirror().center, "d": pair.d}
        report = _stage("criteria", stages, certify, tables, kernel, binning)
        if optimization is not None:
            report.extra["optimization"] = optimization.to_dict()
    report.extra["stages"] = list(stages)
    report.extra["manifest_hash"] = h
    artifacts = {}
    if outdir is not None:
        artifacts = _write_artifacts(manifest, report, kernel, optimization, Path(outdir), h)
    return report, artifacts


def _write_artifacts(manifest, report, kernel, optimization, outdir, h):
    outdir.mkdir(parents=True, exist_ok=True)
    arts = {}
    if "report" in manifest.outputs:
        p = outdir / "report.json"
        io.write_json(p, {"manifest": manifest.to_dict(), "report": report.to_dict()}, h)
        arts["report"] = str(p)
    if kernel is not None and "kernel" in manifest.outputs:
        p = outdir / "kernel.csv"
        io.export_kernel_csv(kernel, p, h)
        arts["kernel"] = str(p)
    if kernel is not None and "densities" in manifest.outputs:
        xx = density_xx(kernel, manifest.x_max)
        p = outdir / "density_xx.csv"
        raw = xx.meta["raw_profile"]
        io.write_csv(p, ["s_um", "P_s_per_um", "box_weighted"], zip(xx.s_axis, raw, xx.profile),
                     {"variable": "s = x_e - x_gamma (um)", "manifest_hash": h})
        arts["density_xx"] = str(p)
        pp = density_pp(kernel)
        p = outdir / "density_pp.csv"
        io.write_csv(p, ["k_gamma_per_um", "ridge_weight"], zip(pp.k_axis, pp.weight),
                     {"variable": "ridge p_e = -hbar k_gamma, weight f(k, k)", "manifest_hash": h})
        arts["density_pp"] = str(p)
    if optimization is not None and "trace" in manifest.outputs:
        p = outdir / "optimization_trace.csv"
        io.write_csv(p, ["T_x", "T_p", "objective"], optimization.trace, {"manifest_hash": h})
        arts["trace"] = str(p)
    return arts


SWEEP_AXES = {"E_win_lo", "E_win_hi", "T_x"}


def _apply_axis(manifest, axis, value):
    if axis == "E_win_lo":
        return replace(manifest, scenario=replace(manifest.scenario, E_win=(value, manifest.scenario.E_win[1])))
    if axis == "E_win_hi":
        sc = manifest.scenario.to_dict()
        sc["E_win"] = [sc["E_win"][0], value]
        sc["k_x_max"] = None
        return replace(manifest, scenario=PhysicalScenario.from_dict(sc))
    if axis == "T_x":
        return replace(manifest, binning={"T_x": value})
    if axis.startswith("scenario."):
        name = axis.split(".", 1)[1]
        if name not in PhysicalScenario.__dataclass_fields__ or name in ("grid", "E_win"):
            raise ValidationError(f"unknown sweep axis {axis!r}")
        return replace(manifest, scenario=replace(manifest.scenario, **{name: value}))
    if axis.startswith("resolution."):
        name = axis.split(".", 1)[1]
        if name not in ResolutionProfile.__dataclass_fields__:
            raise ValidationError(f"unknown sweep axis {axis!r}")
        return replace(manifest, resolution=replace(manifest.resolution, **{name: value}))
    raise ValidationError(f"unknown sweep axis {axis!r}")


def diagonal_centroid(kernel):
    """Mean |k_x| of the kernel diagonal on [0, k_x_max]."""
    w = trapezoid_weights(kernel.k_axis) * kernel.diagonal()
    return float(np.dot(w, kernel.k_axis) / w.sum())


SWEEP_COLUMNS = ["value", "T_x", "T_p", "witness_sum", "fidelity_bound", "ef_bound",
                 "P00_xx", "P11_xx", "P00_pp", "P11_pp", "diag_centroid"]


def run_sweep(manifest, axis, values, outdir=None):
    """One report row per value of ``axis``; returns (rows, csv path or None)."""
    values = list(values)
    if values:
        _apply_axis(manifest, axis, values[0])  # reject unknown axes before any work
    elif not (axis in SWEEP_AXES or axis.split(".", 1)[0] in ("scenario", "resolution")):
        raise ValidationError(f"unknown sweep axis {axis!r}")
    rows = []
    for v in values:
        m = _apply_axis(manifest, axis, float(v))
        kern = build_kernel(m.scenario) if m.counts is None else None
        rep, _ = run_certify(m, kernel=kern)
        xx, pp = rep.tables["xx"].p, rep.tables["pp"].p
        rows.append([float(v), rep.binning["T_x"], rep.binning["T_p"], rep.witness_sum,
                     rep.fidelity_bound, rep.ef_bound, xx[0, 0], xx[1, 1], pp[0, 0], pp[1, 1],
                     diagonal_centroid(kern) if kern is not None else math.nan])
    path = None
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / f"sweep_{axis.replace('.', '_')}.csv"
        io.write_csv(path, SWEEP_COLUMNS, rows, {"axis": axis, "manifest_hash": manifest.digest()})
    return rows, path
