"""Lattice geometry, the discrete rhombus kernel and kernel convolution.

Sites carry integer coordinates ``(x, y)`` with ``x`` to the right and ``y``
upward. Interior sites are ``0 <= x < width``, ``0 <= y < height``; the frozen
collar surrounds them with ``boundary_depth`` layers. Field values live in a
padded array indexed ``[y + depth, x + depth, component]`` (row-major, rows are
``y``), so interior and collar share one buffer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _parallel


@dataclass(frozen=True)
class LatticeGeometry:
    width: int
    height: int
    q: int
    kernel_radius: int
    boundary_depth: int
    block_size: int = 4

    def __post_init__(self):
        for name in ("width", "height", "kernel_radius", "boundary_depth", "block_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.q not in (2, 3):
            raise ValueError(f"spin dimension q must be 2 or 3, got {self.q!r}")
        if self.boundary_depth < self.kernel_radius:
            raise ValueError(
                f"boundary_depth={self.boundary_depth} does not cover kernel_radius={self.kernel_radius}"
            )

    @property
    def padded_shape(self) -> tuple[int, int]:
        b = self.boundary_depth
        return (self.height + 2 * b, self.width + 2 * b)

    @property
    def n_interior(self) -> int:
        return self.width * self.height

    @property
    def interior(self) -> tuple[slice, slice]:
        b = self.boundary_depth
        return (slice(b, b + self.height), slice(b, b + self.width))

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.padded_shape, dtype=bool)
        mask[self.interior] = True
        return mask

    def collar_mask(self) -> np.ndarray:
        return ~self.interior_mask()

    def index(self, x: int, y: int) -> tuple[int, int]:
        """Padded-array index of site (x, y)."""
        b = self.boundary_depth
        return (y + b, x + b)

    def ring(self, distance: int) -> np.ndarray:
        """Sites at Chebyshev distance ``distance`` from the interior.

        ``distance=0`` is the outermost interior loop, positive distances are
        collar loops. Returned as an (N, 2) array of (x, y), counterclockwise
        from the bottom-left corner.
        """
        if not -min(self.width, self.height) // 2 < distance <= self.boundary_depth:
            raise ValueError(f"ring distance {distance} outside the lattice")
        if distance <= 0:
            d = -distance
            return square_ring(d, d, self.width - 1 - d, self.height - 1 - d)
        d = distance
        return square_ring(-d, -d, self.width - 1 + d, self.height - 1 + d)


def square_ring(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Boundary sites of the rectangle [x0, x1] x [y0, y1], counterclockwise.

    Starts at the bottom-left corner (x0, y0) and walks right along the bottom.
    """
    if x1 < x0 or y1 < y0:
        raise ValueError("empty rectangle")
    if x0 == x1 or y0 == y1:
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        return np.stack([xs.ravel(), ys.ravel()], axis=1)
    bottom = [(x, y0) for x in range(x0, x1)]
    right = [(x1, y) for y in range(y0, y1)]
    top = [(x, y1) for x in range(x1, x0, -1)]
    left = [(x0, y) for y in range(y1, y0, -1)]
    return np.array(bottom + right + top + left, dtype=int)


def build_geometry(width: int, height: int, q: int, kernel_radius: int, block_size: int = 4) -> LatticeGeometry:
    """Geometry with the minimal collar: ``boundary_depth == kernel_radius``."""
    return LatticeGeometry(
        width=width,
        height=height,
        q=q,
        kernel_radius=kernel_radius,
        boundary_depth=kernel_radius,
        block_size=block_size,
    )


@dataclass(frozen=True)
class Kernel:
    """Nonnegative weights on the l1-ball of radius ``radius``, summing to one.

    ``offsets`` are ordered row-major (dy ascending, then dx ascending); every
    convolution and energy sum walks them in this order.
    """

    radius: int
    offsets: np.ndarray
    weights: np.ndarray
    raw_weights: np.ndarray = field(repr=False)

    @property
    def raw_sum(self) -> float:
        return float(sum(self.raw_weights.tolist()))

    def weight(self, dx: int, dy: int) -> float:
        hit = np.flatnonzero((self.offsets[:, 0] == dx) & (self.offsets[:, 1] == dy))
        return float(self.weights[hit[0]]) if hit.size else 0.0


def build_kernel(kernel_radius: int) -> Kernel:
    """Rhombus kernel with strata weights 1 (inside), 1/2 (sides), 1/4 (vertices)."""
    r = kernel_radius
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise ValueError(f"kernel_radius must be an integer >= 1, got {r!r}")
    offsets, raw = [], []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            n1 = abs(dx) + abs(dy)
            if n1 > r:
                continue
            if n1 < r:
                w = 1.0
            elif dx == 0 or dy == 0:
                w = 0.25
            else:
                w = 0.5
            offsets.append((dx, dy))
            raw.append(w)
    raw = np.array(raw)
    # raw weights are multiples of 1/4, so this sum is exact
    total = float(sum(raw.tolist()))
    return Kernel(radius=r, offsets=np.array(offsets, dtype=int), weights=raw / total, raw_weights=raw)


@dataclass
class Field:
    """Magnetization on interior and collar, stored as one padded array.

    ``values`` has shape ``(height + 2*depth, width + 2*depth, q)``.
    """

    geometry: LatticeGeometry
    values: np.ndarray

    def __post_init__(self):
        g = self.geometry
        values = np.asarray(self.values, dtype=float)
        expected = g.padded_shape + (g.q,)
        if values.shape != expected:
            raise ValueError(f"field values have shape {values.shape}, expected {expected}")
        self.values = values

    @classmethod
    def zeros(cls, geometry: LatticeGeometry) -> "Field":
        return cls(geometry, np.zeros(geometry.padded_shape + (geometry.q,)))

    @property
    def interior(self) -> np.ndarray:
        """Writable view of the interior, shape (height, width, q)."""
        return self.values[self.geometry.interior]

    def set_interior(self, values: np.ndarray) -> None:
        self.values[self.geometry.interior] = values

    def collar_values(self) -> np.ndarray:
        return self.values[self.geometry.collar_mask()]

    def copy(self) -> "Field":
        return Field(self.geometry, self.values.copy())

    def with_interior(self, values: np.ndarray) -> "Field":
        out = self.copy()
        out.set_interior(values)
        return out

    def at(self, x: int, y: int) -> np.ndarray:
        return self.values[self.geometry.index(x, y)]

    def modulus(self) -> np.ndarray:
        return np.sqrt(np.einsum("...i,...i->...", self.values, self.values))

    def sup_modulus(self) -> float:
        return float(self.modulus()[self.geometry.interior].max())


def check_compatible(geometry: LatticeGeometry, kernel: Kernel) -> None:
    if kernel.radius > geometry.boundary_depth:
        raise ValueError(
            f"kernel radius {kernel.radius} exceeds boundary depth {geometry.boundary_depth}"
        )


def shifted(padded: np.ndarray, geometry: LatticeGeometry, dx: int, dy: int, rows: slice | None = None):
    """View of the padded values at sites (x + dx, y + dy) for interior (x, y)."""
    b = geometry.boundary_depth
    r0, r1 = (0, geometry.height) if rows is None else (rows.start, rows.stop)
    return padded[b + dy + r0 : b + dy + r1, b + dx : b + dx + geometry.width]


def convolve(field, kernel: Kernel, workers: int | None = None) -> np.ndarray:
    """(J * m)(x) = sum_v J(v) m(x + v) on interior sites, collar included.

    Direct stencil summation, cost O(|interior| * R^2). Returns an array of
    shape (height, width, q).
    """
    geometry = field.geometry
    check_compatible(geometry, kernel)
    padded = field.values
    out = np.zeros((geometry.height, geometry.width, padded.shape[-1]))

    def work(rows: slice) -> None:
        acc = out[rows]
        tmp = np.empty_like(acc)
        for (dx, dy), w in zip(kernel.offsets.tolist(), kernel.weights.tolist()):
            np.multiply(shifted(padded, geometry, dx, dy, rows), w, out=tmp)
            acc += tmp

    _parallel.map_rows(work, geometry.height, workers)
    return out
