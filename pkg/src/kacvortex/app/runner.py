"""Run orchestration: build the initial field, relax it, write every output."""
from __future__ import annotations

import datetime as _dt
import hashlib
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import Integrator, RunConfig, Schedule, Trace, load_checkpoint
from ..energy import free_energy, kirchhoff_onsager
from ..fields import (
    BoundarySpec,
    InitSpec,
    heisenberg_boundary,
    init_interior,
    randomized_vortex_boundary,
    zero_collar,
    uniform_vortex_boundary,
)
from ..lattice import Field, build_geometry, build_kernel
from ..meanfield import MeanFieldModel
from ..topology import check_conservation, detect_vortices, sphere_degree
from . import io
from .config import RunSettings

EXIT_CONVERGED, EXIT_ERROR, EXIT_TMAX = 0, 1, 2

MANIFEST = "manifest.json"
TRACE = "trace.csv"
FIELD = "field.txt"
VORTICES = "vortices.txt"
SPHERE = "sphere.txt"
CHECKPOINT = "checkpoint.npz"


@dataclass
class RunOutcome:
    exit_code: int
    manifest: dict
    field: Field
    trace: Trace


def geometry_of(s: RunSettings):
    return build_geometry(s.width, s.height, s.q, s.kernel_radius, s.block_size)


def boundary_of(s: RunSettings, geometry) -> Field:
    spec = BoundarySpec(
        degree=s.degree, phi0=s.phi0, noise_variance=s.boundary_noise, seed=s.seed, heisenberg_theta0=s.theta0
    )
    if s.boundary == "zero":
        return zero_collar(geometry)
    if s.q == 3:
        return heisenberg_boundary(geometry, spec)
    if s.boundary_noise > 0:
        return randomized_vortex_boundary(geometry, spec)
    return uniform_vortex_boundary(geometry, spec)


def initial_field(s: RunSettings) -> Field:
    g = geometry_of(s)
    return init_interior(g, InitSpec(s.init_kind, s.init_max_modulus, s.seed), base=boundary_of(s, g))


def warm_field(s: RunSettings, path) -> Field:
    """Interior taken from a field dump, collar from the settings."""
    g = geometry_of(s)
    warm = io.read_field(path, g)
    return boundary_of(s, g).with_interior(warm.interior)


def run_config(s: RunSettings) -> RunConfig:
    return RunConfig(h=s.h, t_max=s.t_max, tol=s.tol, record_every=s.record_every)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _energy_dict(e) -> dict:
    return {
        "total": e.total,
        "interaction_interior": e.interaction_interior,
        "interaction_boundary": e.interaction_boundary,
        "local_excess": e.local_excess,
    }


def analyse(field: Field, model: MeanFieldModel, kernel, out: Path | None = None) -> dict:
    """Topological summary; also writes the report file when ``out`` is given."""
    energy = free_energy(field, model, kernel)
    if field.geometry.q == 2:
        try:
            report = detect_vortices(field)
        except ValueError as exc:
            # a vanishing collar has no boundary degree
            return {"kind": "vortices", "error": str(exc), "sup_modulus": field.sup_modulus()}
        w0 = kirchhoff_onsager(report.vortices)
        if out is not None:
            io.write_report(out / VORTICES, report)
        return {
            "kind": "vortices",
            "n_vortices": len(report.vortices),
            "charges": report.charges,
            "centers": [list(v.center) for v in report.vortices],
            "boundary_degree": report.boundary_degree,
            "total_charge": report.total_charge,
            "conserved": check_conservation(report),
            "min_modulus": report.min_modulus,
            "sup_modulus": field.sup_modulus(),
            "W0": w0,
            "K": energy.total - w0,
        }
    try:
        rep = sphere_degree(field)
    except ValueError as exc:
        summary = {"kind": "sphere", "degree": None, "error": str(exc)}
    else:
        summary = {
            "kind": "sphere",
            "degree": rep.degree,
            "covered_fraction": rep.covered_fraction,
            "interior_fraction": rep.interior_fraction,
            "min_modulus": rep.min_modulus,
        }
    if out is not None:
        io.atomic_write_text(out / SPHERE, "".join(f"{k}={v}\n" for k, v in summary.items() if k != "kind"))
    return summary


def execute(
    s: RunSettings,
    *,
    schedule: Schedule | None = None,
    warm_start: str | None = None,
    resume: bool = False,
    workers=None,
) -> RunOutcome:
    """Run one configuration end to end and write its output directory."""
    started = _now()
    out = Path(s.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kernel = build_kernel(s.kernel_radius)
    if schedule is None and s.schedule_file:
        schedule = Schedule.load(s.schedule_file)
    warm_start = warm_start or (s.warm_start or None)
    if schedule is None:
        schedule = Schedule.constant(s.beta)
    elif schedule.final_beta != s.beta:
        raise ValueError(f"schedule ends at beta={schedule.final_beta!r} but beta={s.beta!r}")
    cp_path = out / CHECKPOINT
    if resume:
        if not cp_path.exists():
            raise FileNotFoundError(f"no checkpoint to resume from at {cp_path}")
        integ, trace = load_checkpoint(cp_path, kernel, workers=workers)
        if integ.field.geometry != geometry_of(s) or integ.config != run_config(s) or integ.schedule != schedule:
            raise ValueError("checkpoint does not match the configuration")
        start_field = None
    else:
        start_field = warm_field(s, warm_start) if warm_start else initial_field(s)
        integ = Integrator(start_field, kernel, run_config(s), schedule, workers=workers)
        trace = Trace()
    model = MeanFieldModel(s.q, s.beta)
    checkpoint = (cp_path, s.checkpoint_every) if s.checkpoint_every > 0 else None
    trace = integ.run(trace=trace, checkpoint=checkpoint)
    field = integ.field

    io.write_field(out / FIELD, field)
    io.atomic_write_text(out / TRACE, trace.to_csv())
    energy = free_energy(field, model, kernel)
    summary = analyse(field, model, kernel, out)
    manifest = {
        "code_version": __version__,
        "config": asdict(s),
        "schedule": [list(k) for k in schedule.knots],
        "warm_start": None if not warm_start else {"path": str(warm_start), "sha256": _sha256(warm_start)},
        "seed": s.seed,
        "started": started,
        "finished": _now(),
        "termination": trace.termination,
        "steps": trace.steps,
        "t_final": integ.t,
        "final_energy": _energy_dict(energy),
        "final_residual": trace.rows[-1][7],
        "trace_sha256": trace.digest(),
        "field_sha256": _sha256(out / FIELD),
        "topology": summary,
    }
    if start_field is not None and warm_start:
        manifest["energy_before"] = free_energy(start_field, model, kernel).total
        manifest["energy_after"] = energy.total
    io.write_manifest(out / MANIFEST, manifest)
    code = EXIT_CONVERGED if trace.converged else EXIT_TMAX
    return RunOutcome(code, manifest, field, trace)


def settings_from_manifest(manifest: dict) -> RunSettings:
    return RunSettings(**manifest["config"])


def validate_run(run_dir) -> list[str]:
    """Problems found in a run directory; an empty list means it is valid."""
    run_dir = Path(run_dir)
    problems = []
    try:
        manifest = io.read_manifest(run_dir / MANIFEST)
    except (OSError, ValueError) as exc:
        return [f"manifest: {exc}"]
    for key in ("config", "termination", "trace_sha256", "final_energy", "topology", "code_version"):
        if key not in manifest:
            problems.append(f"manifest: missing key {key!r}")
    if problems:
        return problems
    try:
        s = settings_from_manifest(manifest)
    except TypeError as exc:
        return [f"manifest config: {exc}"]
    try:
        text = (run_dir / TRACE).read_text(encoding="utf-8")
        header = text.splitlines()[0].split(",")
        from ..dynamics import TRACE_COLUMNS

        if tuple(header) != TRACE_COLUMNS:
            problems.append("trace: unexpected columns")
        if hashlib.sha256(text.encode()).hexdigest() != manifest["trace_sha256"]:
            problems.append("trace: hash differs from manifest")
    except (OSError, IndexError) as exc:
        problems.append(f"trace: {exc}")
    try:
        field = io.read_field(run_dir / FIELD, geometry_of(s))
    except (OSError, ValueError) as exc:
        return problems + [f"field: {exc}"]
    if _sha256(run_dir / FIELD) != manifest.get("field_sha256"):
        problems.append("field: hash differs from manifest")
    if field.modulus().max() > 1 + 1e-12:
        problems.append("field: |m| exceeds 1")
    model = MeanFieldModel(s.q, s.beta)
    summary = analyse(field, model, build_kernel(s.kernel_radius))
    if s.q == 2 and "error" in summary:
        if summary["error"] != manifest["topology"].get("error"):
            problems.append("vortices: analysis differs from manifest")
    elif s.q == 2:
        try:
            stored = io.read_report(run_dir / VORTICES)
        except (OSError, ValueError, KeyError) as exc:
            problems.append(f"vortices: {exc}")
        else:
            if stored.charges != summary["charges"] or stored.boundary_degree != summary["boundary_degree"]:
                problems.append("vortices: report differs from the dumped field")
        if not summary["conserved"]:
            problems.append(
                f"conservation: total charge {summary['total_charge']} != boundary degree {summary['boundary_degree']}"
            )
    elif summary.get("degree") != manifest["topology"].get("degree"):
        problems.append("sphere: degree differs from manifest")
    energy = free_energy(field, model, build_kernel(s.kernel_radius)).total
    if not math.isclose(energy, manifest["final_energy"]["total"], rel_tol=0, abs_tol=1e-9 * max(1.0, abs(energy))):
        problems.append("energy: recomputed F differs from manifest")
    return problems


def fit_line(ds, ks) -> dict:
    """Least-squares line K = a d + b with residuals, plus the constant fit for comparison."""
    ds, ks = np.asarray(ds, dtype=float), np.asarray(ks, dtype=float)
    slope, intercept = np.polyfit(ds, ks, 1)
    resid = ks - (slope * ds + intercept)
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "residual_norm": float(np.linalg.norm(resid)),
        "constant_residual_norm": float(np.linalg.norm(ks - ks.mean())),
        "K_range": float(ks.max() - ks.min()),
        "residuals": resid.tolist(),
    }
