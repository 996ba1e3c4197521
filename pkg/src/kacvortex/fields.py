"""Boundary conditions, initial data and the block-spin average.

Boundary spins are laid out on square loops around the interior. A loop at
Chebyshev distance ``i`` from a ``W x H`` interior holds ``2(W + H) + 8i - 4``
sites, enumerated counterclockwise from its bottom-left corner with ``j = 1``
at the corner. By default the spins are generated on the microscopic lattice
(each mesoscopic site is a ``block_size x block_size`` block) and averaged
down with :func:`block_spin`; ``mesoscopic=True`` writes unit vectors
straight into the mesoscopic collar.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Field, LatticeGeometry, square_ring


@dataclass(frozen=True)
class BoundarySpec:
    degree: int = 0
    phi0: float = 1.0
    noise_variance: float = 0.0
    seed: int = 0
    heisenberg_theta0: float = np.pi / 2

    def __post_init__(self):
        if int(self.degree) != self.degree:
            raise ValueError(f"degree must be an integer, got {self.degree!r}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance!r}")


@dataclass(frozen=True)
class InitSpec:
    kind: str = "zero"
    max_modulus: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "random"):
            raise ValueError(f"init kind must be 'zero' or 'random', got {self.kind!r}")
        if not 0 <= self.max_modulus < 1:
            raise ValueError(f"max_modulus must lie in [0, 1), got {self.max_modulus!r}")


def loop_length(width: int, height: int, distance: int) -> int:
    return 2 * (width + height) + 8 * distance - 4


def _collar_loops(width: int, height: int, depth: int):
    """Yield (distance, sites) for collar loops 1..depth, sites as (x, y) arrays."""
    for i in range(1, depth + 1):
        yield i, square_ring(-i, -i, width - 1 + i, height - 1 + i)


def _loop_angles(n: int, degree: int, phi0: float, noise: np.ndarray | None) -> np.ndarray:
    j = np.arange(1, n + 1)
    frac = j / n
    if noise is not None:
        frac = frac + noise
    return 2 * np.pi * degree * frac + phi0


def _noise_amplitude(spec: BoundarySpec, shortest_loop: int) -> float:
    a = float(np.sqrt(3.0 * spec.noise_variance))
    # after mean subtraction |eps| <= 2a, so consecutive offsets differ by <= 4a
    if spec.noise_variance > 0 and 2 * np.pi * abs(spec.degree) * (1.0 / shortest_loop + 4 * a) >= np.pi:
        raise ValueError(
            f"noise_variance={spec.noise_variance} too large for degree {spec.degree}: "
            "loop windings would become ambiguous"
        )
    return a


def _scale(geometry: LatticeGeometry, mesoscopic: bool) -> int:
    return 1 if mesoscopic else geometry.block_size


def _planar_collar(geometry: LatticeGeometry, spec: BoundarySpec, mesoscopic: bool, noisy: bool) -> Field:
    if geometry.q != 2:
        raise ValueError("vortex boundaries need q = 2")
    b = _scale(geometry, mesoscopic)
    w, h, depth = geometry.width * b, geometry.height * b, geometry.boundary_depth * b
    a = _noise_amplitude(spec, loop_length(w, h, 1)) if noisy else 0.0
    rng = np.random.default_rng(spec.seed)
    spins = np.zeros((h + 2 * depth, w + 2 * depth, 2))
    for i, sites in _collar_loops(w, h, depth):
        n = len(sites)
        noise = None
        if noisy and a > 0:
            eps = rng.uniform(-a, a, size=n)
            noise = eps - eps.mean()
        theta = _loop_angles(n, spec.degree, spec.phi0, noise)
        spins[sites[:, 1] + depth, sites[:, 0] + depth] = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return _to_field(geometry, spins, b)


def _to_field(geometry: LatticeGeometry, spins: np.ndarray, b: int) -> Field:
    field = Field.zeros(geometry)
    meso = spins if b == 1 else block_spin(spins, b)
    collar = geometry.collar_mask()
    field.values[collar] = meso[collar]
    return field


def uniform_vortex_boundary(geometry: LatticeGeometry, spec: BoundarySpec, mesoscopic: bool = False) -> Field:
    """Collar with phase 2 pi d j / N + phi0 on every loop; interior left at zero."""
    return _planar_collar(geometry, spec, mesoscopic, noisy=False)


def randomized_vortex_boundary(geometry: LatticeGeometry, spec: BoundarySpec, mesoscopic: bool = False) -> Field:
    """Uniform vortex collar with zero-sum uniform phase noise on every loop.

    Loop ``i`` gets phases 2 pi d (j/N + eps_j) + phi0 with eps uniform on
    [-a, a], a = sqrt(3 * noise_variance), shifted to have zero mean.
    """
    return _planar_collar(geometry, spec, mesoscopic, noisy=True)


def heisenberg_boundary(geometry: LatticeGeometry, spec: BoundarySpec, mesoscopic: bool = False) -> Field:
    """Spin-wave collar for q = 3.

    Azimuth winds like the planar collar; the polar angle grows linearly from 0
    on the innermost collar loop (spins exactly (0, 0, 1)) to ``theta0`` on
    the outermost one.
    """
    if geometry.q != 3:
        raise ValueError("heisenberg_boundary needs q = 3")
    theta0 = spec.heisenberg_theta0
    if not 0 < theta0 <= np.pi / 2:
        raise ValueError(f"heisenberg_theta0 must lie in (0, pi/2], got {theta0!r}")
    b = _scale(geometry, mesoscopic)
    w, h, depth = geometry.width * b, geometry.height * b, geometry.boundary_depth * b
    spins = np.zeros((h + 2 * depth, w + 2 * depth, 3))
    for i, sites in _collar_loops(w, h, depth):
        # loops 1..b make up the innermost mesoscopic loop and stay at the pole
        polar = theta0 * max(0, i - b) / max(1, depth - b)
        phi = _loop_angles(len(sites), spec.degree, spec.phi0, None)
        vec = np.stack(
            [np.cos(phi) * np.sin(polar), np.sin(phi) * np.sin(polar), np.full(len(sites), np.cos(polar))],
            axis=1,
        )
        spins[sites[:, 1] + depth, sites[:, 0] + depth] = vec
    return _to_field(geometry, spins, b)


def constant_collar(geometry: LatticeGeometry, vector) -> Field:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (geometry.q,):
        raise ValueError(f"collar vector must have length {geometry.q}")
    if np.linalg.norm(vector) > 1:
        raise ValueError("collar vector must have modulus <= 1")
    field = Field.zeros(geometry)
    field.values[geometry.collar_mask()] = vector
    return field


def zero_collar(geometry: LatticeGeometry) -> Field:
    return Field.zeros(geometry)


def init_interior(geometry: LatticeGeometry, spec: InitSpec, base: Field | None = None) -> Field:
    """Initial interior values; the collar is copied from ``base`` when given.

    Random values have a uniformly distributed direction on the unit sphere and
    a modulus uniform on [0, max_modulus].
    """
    field = Field.zeros(geometry) if base is None else base.copy()
    if base is not None and base.geometry != geometry:
        raise ValueError("base field geometry does not match")
    if spec.kind == "zero":
        field.set_interior(0.0)
        return field
    rng = np.random.default_rng(spec.seed)
    shape = (geometry.height, geometry.width)
    direction = rng.standard_normal(shape + (geometry.q,))
    norm = np.linalg.norm(direction, axis=-1, keepdims=True)
    # a zero draw has probability zero, but guard the division anyway
    direction = np.where(norm > 0, direction / np.where(norm > 0, norm, 1.0), 0.0)
    modulus = rng.uniform(0.0, spec.max_modulus, size=shape + (1,))
    field.set_interior(direction * modulus)
    return field


def block_spin(spins: np.ndarray, block_size: int) -> np.ndarray:
    """Average ``spins`` (rows, cols, q) over non-overlapping square blocks.

    Returns the mesoscopic array (rows // b, cols // b, q). Block members are
    added in row-major order.
    """
    spins = np.asarray(spins, dtype=float)
    b = int(block_size)
    if b < 1:
        raise ValueError("block_size must be >= 1")
    rows, cols = spins.shape[:2]
    if rows % b or cols % b:
        raise ValueError(f"lattice {rows}x{cols} is not divisible by block_size {b}")
    acc = np.zeros((rows // b, cols // b) + spins.shape[2:])
    for i in range(b):
        for j in range(b):
            acc += spins[i::b, j::b]
    return acc / (b * b)
