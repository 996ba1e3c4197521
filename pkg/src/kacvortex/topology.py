"""Winding numbers, vortex detection and the sphere degree of q = 3 fields.

Coordinates follow :mod:`kacvortex.lattice`: site (x, y), collar sites have
x or y outside the interior range. Plaquette (px, py) is the unit square with
lower-left corner site (px, py); its center is (px + 1/2, py + 1/2). Loops
run counterclockwise, so positive charges wind counterclockwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from . import _parallel
from .lattice import Field, square_ring

WINDING_RESIDUAL = 0.01
SPHERE_RESIDUAL = 0.05


def wrap(angle):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)


def _phase(values: np.ndarray) -> np.ndarray:
    return np.arctan2(values[..., 1], values[..., 0])


def _round_winding(total: float, where: str) -> int:
    w = total / (2 * np.pi)
    n = int(np.rint(w))
    if abs(w - n) >= WINDING_RESIDUAL:
        raise ValueError(f"ambiguous winding {w!r} on {where}")
    return n


def winding_number(m: Field, loop) -> int:
    """Degree of m/|m| along a closed loop of (x, y) sites, counterclockwise positive."""
    if m.geometry.q != 2:
        raise ValueError("winding_number needs q = 2")
    loop = np.asarray(loop, dtype=int)
    b = m.geometry.boundary_depth
    rows, cols = loop[:, 1] + b, loop[:, 0] + b
    hp, wp = m.geometry.padded_shape
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= hp or cols.max() >= wp:
        raise ValueError("loop leaves the lattice")
    vals = m.values[rows, cols]
    mod = np.hypot(vals[:, 0], vals[:, 1])
    if np.any(mod == 0):
        x, y = loop[int(np.argmin(mod))]
        raise ValueError(f"zero magnetization at loop site ({x}, {y})")
    theta = _phase(vals)
    total = float(np.sum(wrap(np.roll(theta, -1) - theta)))
    return _round_winding(total, "loop")


@dataclass(frozen=True)
class Vortex:
    center: tuple[float, float]
    charge: int
    size: int = 1


@dataclass
class VortexReport:
    vortices: list = dc_field(default_factory=list)
    boundary_degree: int = 0
    min_modulus: float = 0.0

    @property
    def total_charge(self) -> int:
        return int(sum(v.charge for v in self.vortices))

    @property
    def charges(self) -> list[int]:
        return [v.charge for v in self.vortices]


@dataclass(frozen=True)
class PlaquetteMap:
    """Plaquette windings over a window of the padded grid.

    ``winding[i, j]`` belongs to plaquette (x0 + j, y0 + i); ``ambiguous``
    marks plaquettes with a zero-modulus corner.
    """

    x0: int
    y0: int
    winding: np.ndarray
    ambiguous: np.ndarray
    corner_min: np.ndarray


def plaquette_windings(m: Field, margin: int = 1) -> PlaquetteMap:
    """Windings of all plaquettes whose corners lie within ``margin`` collar layers."""
    g = m.geometry
    if g.q != 2:
        raise ValueError("plaquette windings need q = 2")
    if not 0 <= margin <= g.boundary_depth:
        raise ValueError("margin must lie in [0, boundary_depth]")
    b = g.boundary_depth
    sub = m.values[b - margin : b + g.height + margin, b - margin : b + g.width + margin]
    theta = _phase(sub)
    mod = np.hypot(sub[..., 0], sub[..., 1])
    a, bb, c, d = theta[:-1, :-1], theta[:-1, 1:], theta[1:, 1:], theta[1:, :-1]
    total = wrap(bb - a) + wrap(c - bb) + wrap(d - c) + wrap(a - d)
    w = total / (2 * np.pi)
    n = np.rint(w).astype(int)
    corner_min = np.minimum.reduce([mod[:-1, :-1], mod[:-1, 1:], mod[1:, 1:], mod[1:, :-1]])
    ambiguous = corner_min == 0
    bad = ~ambiguous & (np.abs(w - n) >= WINDING_RESIDUAL)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"ambiguous winding on plaquette ({j - margin}, {i - margin})")
    n[ambiguous] = 0
    return PlaquetteMap(-margin, -margin, n, ambiguous, corner_min)


def boundary_degree(m: Field) -> int:
    """Winding of the innermost collar loop."""
    return winding_number(m, m.geometry.ring(1))


def detect_vortices(m: Field, core_threshold: float = 0.0) -> VortexReport:
    """Locate vortices as clusters of nonzero-winding plaquettes.

    Plaquettes over the interior and the innermost collar loop are scanned.
    Plaquettes with nonzero winding, or with a corner modulus at or below
    ``core_threshold`` (or exactly zero), are core plaquettes; 8-connected core
    plaquettes form one vortex. Its charge is the winding on the rectangle one
    site outside the cluster's bounding box, or the sum of its plaquette
    windings when that rectangle would enclose another cluster. The center is
    the average of plaquette centers weighted by the inverse corner modulus.
    Clusters of charge zero are dropped.
    """
    g = m.geometry
    pm = plaquette_windings(m, margin=1)
    core = (pm.winding != 0) | pm.ambiguous | (pm.corner_min <= core_threshold)
    labels, count = ndimage.label(core, structure=np.ones((3, 3), dtype=int))
    boxes = ndimage.find_objects(labels)
    b = g.boundary_depth
    vortices = []
    for k, box in enumerate(boxes, start=1):
        own = labels[box] == k
        i0, i1 = box[0].start, box[0].stop - 1
        j0, j1 = box[1].start, box[1].stop - 1
        # loop sites surrounding the box, clamped to the padded grid
        x0, y0 = max(pm.x0 + j0 - 1, -b), max(pm.y0 + i0 - 1, -b)
        x1 = min(pm.x0 + j1 + 2, g.width - 1 + b)
        y1 = min(pm.y0 + i1 + 2, g.height - 1 + b)
        # plaquettes inside that loop, in map indices
        pi0, pi1 = max(y0 - pm.y0, 0), min(y1 - pm.y0, labels.shape[0])
        pj0, pj1 = max(x0 - pm.x0, 0), min(x1 - pm.x0, labels.shape[1])
        enclosed = labels[pi0:pi1, pj0:pj1]
        others = np.any((enclosed != 0) & (enclosed != k))
        charge = None
        if not others:
            try:
                charge = winding_number(m, square_ring(x0, y0, x1, y1))
            except ValueError:
                charge = None
        if charge is None:
            charge = int(pm.winding[box][own].sum())
        if charge == 0:
            continue
        ii, jj = np.nonzero(own)
        cx = pm.x0 + j0 + jj + 0.5
        cy = pm.y0 + i0 + ii + 0.5
        weight = 1.0 / np.maximum(pm.corner_min[box][own], 1e-12)
        center = (float(np.sum(weight * cx) / np.sum(weight)), float(np.sum(weight * cy) / np.sum(weight)))
        vortices.append(Vortex(center=center, charge=int(charge), size=int(own.sum())))
    interior_mod = np.hypot(m.interior[..., 0], m.interior[..., 1])
    return VortexReport(
        vortices=vortices,
        boundary_degree=boundary_degree(m),
        min_modulus=float(interior_mod.min()),
    )


def check_conservation(report: VortexReport) -> bool:
    return report.total_charge == report.boundary_degree


@dataclass(frozen=True)
class SphereDegreeReport:
    degree: int
    min_modulus: float
    covered_fraction: float
    interior_fraction: float

    @property
    def residual(self) -> float:
        return abs(self.covered_fraction - abs(self.degree))


def solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of spherical triangles with unit-vector corners (last axis)."""
    triple = np.einsum("...i,...i->...", a, np.cross(b, c))
    denom = 1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) + np.einsum("...i,...i->...", c, a)
    return 2.0 * np.arctan2(triple, denom)


def _surface_sum(n: np.ndarray) -> tuple[float, float]:
    """(closed-surface area, grid-only area) of the triangulated image of ``n``.

    The grid is closed at infinity by fan triangles from its outer loop to the
    north pole.
    """
    a, b, c, d = n[:-1, :-1], n[:-1, 1:], n[1:, 1:], n[1:, :-1]
    per_plaquette = solid_angle(a, b, c) + solid_angle(a, c, d)
    grid = _parallel.ordered_sum(per_plaquette)
    hp, wp = n.shape[:2]
    ring = square_ring(0, 0, wp - 1, hp - 1)
    p = n[ring[:, 1], ring[:, 0]]
    north = np.broadcast_to(np.array([0.0, 0.0, 1.0]), p.shape)
    fan = solid_angle(np.roll(p, -1, axis=0), p, north)
    closing = 0.0
    for v in fan.tolist():
        closing += v
    return grid + closing, grid


def sphere_degree(m: Field, core_threshold: float = 1e-6) -> SphereDegreeReport:
    """Covering degree of m/|m| over the plane compactified by the north pole.

    Counterclockwise plaquettes mapped with the same orientation as the
    stereographic map (x, y) -> (2x, 2y, r^2 - 1)/(r^2 + 1) count positively.
    """
    g = m.geometry
    if g.q != 3:
        raise ValueError("sphere_degree needs q = 3")
    mod = m.modulus()
    if mod.min() < core_threshold:
        i, j = np.unravel_index(int(np.argmin(mod)), mod.shape)
        b = g.boundary_depth
        raise ValueError(
            f"|m| = {mod[i, j]!r} below {core_threshold!r} at site ({j - b}, {i - b}); direction undefined"
        )
    n = m.values / mod[..., None]
    closed, grid = _surface_sum(n)
    raw = -closed / (4 * np.pi)
    degree = int(np.rint(raw))
    if abs(raw - degree) >= SPHERE_RESIDUAL:
        raise ValueError(f"sphere degree {raw!r} is not close to an integer")
    return SphereDegreeReport(
        degree=degree,
        min_modulus=float(mod[g.interior].min()),
        covered_fraction=abs(raw),
        interior_fraction=float(-grid / (4 * np.pi)),
    )
