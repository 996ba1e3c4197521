"""Plain-text output formats: field dumps, traces, vortex reports, manifests."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ..lattice import Field, LatticeGeometry
from ..topology import Vortex, VortexReport

FIELD_MAGIC = "kac-field"
FIELD_VERSION = "v1"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _site_order(g: LatticeGeometry):
    """(x, y) pairs: interior row-major, then collar row-major."""
    b = g.boundary_depth
    ys, xs = np.mgrid[-b : g.height + b, -b : g.width + b]
    inside = g.interior_mask()
    return (
        np.stack([xs[inside], ys[inside]], axis=1),
        np.stack([xs[~inside], ys[~inside]], axis=1),
    )


def format_field(field: Field) -> str:
    g = field.geometry
    lines = [f"# {FIELD_MAGIC} {FIELD_VERSION} q={g.q} w={g.width} h={g.height}\n"]
    b = g.boundary_depth
    for sites in _site_order(g):
        for x, y in sites.tolist():
            vals = field.values[y + b, x + b]
            lines.append(f"{x} {y} " + " ".join(f"{v:.17g}" for v in vals.tolist()) + "\n")
    return "".join(lines)


def write_field(path, field: Field) -> None:
    atomic_write_text(path, format_field(field))


def read_field(path, geometry: LatticeGeometry | None = None) -> Field:
    """Read a field dump. The collar depth is inferred from the coordinates.

    With ``geometry`` given, the dump must match its size, q and collar depth.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[:3] != ["#", FIELD_MAGIC, FIELD_VERSION]:
            raise ValueError(f"{path}: not a {FIELD_MAGIC} {FIELD_VERSION} file")
        meta = dict(item.split("=", 1) for item in header[3:])
        q, w, h = int(meta["q"]), int(meta["w"]), int(meta["h"])
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape[1] != 2 + q:
        raise ValueError(f"{path}: expected {2 + q} columns, got {data.shape[1]}")
    xy = data[:, :2].astype(int)
    depth = int(-xy[:, 0].min())
    if geometry is None:
        geometry = LatticeGeometry(w, h, q, max(depth, 1), max(depth, 1))
    elif (geometry.width, geometry.height, geometry.q, geometry.boundary_depth) != (w, h, q, depth):
        raise ValueError(
            f"{path}: field is {w}x{h}, q={q}, collar {depth}; expected "
            f"{geometry.width}x{geometry.height}, q={geometry.q}, collar {geometry.boundary_depth}"
        )
    field = Field.zeros(geometry)
    hp, wp = geometry.padded_shape
    if len(data) != hp * wp:
        raise ValueError(f"{path}: expected {hp * wp} sites, got {len(data)}")
    field.values[xy[:, 1] + depth, xy[:, 0] + depth] = data[:, 2:]
    return field


def format_report(report: VortexReport) -> str:
    lines = [f"{v.center[0]:.17g} {v.center[1]:.17g} {v.charge}\n" for v in report.vortices]
    conserved = report.total_charge == report.boundary_degree
    lines.append(
        f"boundary_degree={report.boundary_degree} total={report.total_charge} "
        f"conserved={str(conserved).lower()} min_modulus={report.min_modulus:.17g}\n"
    )
    return "".join(lines)


def write_report(path, report: VortexReport) -> None:
    atomic_write_text(path, format_report(report))


def read_report(path) -> VortexReport:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or not lines[-1].startswith("boundary_degree="):
        raise ValueError(f"{path}: missing report footer")
    footer = dict(item.split("=", 1) for item in lines[-1].split())
    vortices = []
    for ln in lines[:-1]:
        x, y, c = ln.split()
        vortices.append(Vortex(center=(float(x), float(y)), charge=int(c)))
    report = VortexReport(vortices, int(footer["boundary_degree"]), float(footer["min_modulus"]))
    if int(footer["total"]) != report.total_charge:
        raise ValueError(f"{path}: footer total disagrees with listed charges")
    if footer["conserved"] != str(report.total_charge == report.boundary_degree).lower():
        raise ValueError(f"{path}: footer conservation flag is inconsistent")
    return report


def write_manifest(path, manifest: dict) -> None:
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
