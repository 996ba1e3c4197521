"""Excess free energy of a magnetization field, its dissipation rate, and the
Kirchhoff-Onsager vortex interaction.

    F(m | m^c) = 1/4 sum_{x,y in interior} J(x-y) |m(x) - m(y)|^2
               + 1/2 sum_{x in interior, y in collar} J(x-y) |m(x) - m(y)|^2
               + sum_{x in interior} [f_beta(|m(x)|) - f_beta(m_beta)]

Sums are accumulated per site over kernel offsets in their fixed order, then
per row, then over rows in order, so values do not depend on the worker count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _parallel, meanfield
from .lattice import Field, Kernel, check_compatible, convolve, shifted
from .meanfield import MeanFieldModel


@dataclass(frozen=True)
class EnergyBreakdown:
    interaction_interior: float
    interaction_boundary: float
    local_excess: float

    @property
    def total(self) -> float:
        return self.interaction_interior + self.interaction_boundary + self.local_excess


def interior_modulus(field: Field) -> np.ndarray:
    m = field.interior
    rho = np.sqrt(np.einsum("...i,...i->...", m, m))
    if not np.all(np.isfinite(rho)):
        y, x = np.argwhere(~np.isfinite(rho))[0]
        raise ValueError(f"non-finite magnetization at site ({x}, {y})")
    if rho.max(initial=0.0) > meanfield.RHO_MAX:
        y, x = np.unravel_index(int(np.argmax(rho)), rho.shape)
        raise ValueError(
            f"|m| = {rho[y, x]!r} at site ({x}, {y}) exceeds {meanfield.RHO_MAX!r}; entropy undefined"
        )
    return rho


def _interaction_sites(field: Field, kernel: Kernel, workers=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-site sums of J(v) |m(x) - m(x+v)|^2, split by whether x+v is interior."""
    g = field.geometry
    check_compatible(g, kernel)
    padded = field.values
    inside = g.interior_mask()
    m = field.interior
    s_int = np.zeros((g.height, g.width))
    s_bnd = np.zeros((g.height, g.width))

    def work(rows: slice) -> None:
        mi = m[rows]
        for (dx, dy), w in zip(kernel.offsets.tolist(), kernel.weights.tolist()):
            diff = mi - shifted(padded, g, dx, dy, rows)
            sq = w * np.einsum("...i,...i->...", diff, diff)
            mask = shifted(inside, g, dx, dy, rows)
            s_int[rows] += np.where(mask, sq, 0.0)
            s_bnd[rows] += np.where(mask, 0.0, sq)

    _parallel.map_rows(work, g.height, workers)
    return s_int, s_bnd


def free_energy(m: Field, model: MeanFieldModel, kernel: Kernel, workers=None) -> EnergyBreakdown:
    if m.geometry.q != model.q:
        raise ValueError("field and model disagree on q")
    rho = interior_modulus(m)
    s_int, s_bnd = _interaction_sites(m, kernel, workers)
    local = np.asarray(meanfield.f_beta(rho, model)) - model.f_beta_min
    return EnergyBreakdown(
        interaction_interior=0.25 * _parallel.ordered_sum(s_int),
        interaction_boundary=0.5 * _parallel.ordered_sum(s_bnd),
        local_excess=_parallel.ordered_sum(local),
    )


def entropy_slope_ratio(rho: np.ndarray, q: int) -> np.ndarray:
    """entropy'(rho) / rho, continued by its limit q at rho = 0."""
    rho = np.asarray(rho, dtype=float)
    t = np.asarray(meanfield.i_prime(rho, q))
    safe = np.where(rho > 0, rho, 1.0)
    return np.where(rho > 0, t / safe, float(q))


def gradient(m: Field, model: MeanFieldModel, kernel: Kernel, jm: np.ndarray | None = None, workers=None) -> np.ndarray:
    """Derivative of F with respect to the interior values: -J*m + entropy'(|m|)/(beta |m|) m."""
    rho = interior_modulus(m)
    if jm is None:
        jm = convolve(m, kernel, workers)
    return -jm + (entropy_slope_ratio(rho, model.q) / model.beta)[..., None] * m.interior


def response(jm: np.ndarray, beta: float, q: int) -> np.ndarray:
    """G = f(beta |Jm|) Jm / |Jm|, with G = 0 where Jm vanishes."""
    norm = np.sqrt(np.einsum("...i,...i->...", jm, jm))
    scale = np.asarray(meanfield.f(beta * norm, q))
    ratio = np.where(norm > 0, scale / np.where(norm > 0, norm, 1.0), 0.0)
    return ratio[..., None] * jm


def dissipation_rate(m: Field, model: MeanFieldModel, kernel: Kernel, workers=None) -> float:
    """-dF/dt along the gradient flow, i.e. -sum <grad F, -m + G(m)>."""
    jm = convolve(m, kernel, workers)
    grad = gradient(m, model, kernel, jm=jm, workers=workers)
    flow = -m.interior + response(jm, model.beta, model.q)
    per_site = -np.einsum("...i,...i->...", grad, flow)
    return _parallel.ordered_sum(per_site)


def _unpack(vortex):
    if hasattr(vortex, "center"):
        return np.asarray(vortex.center, dtype=float), int(vortex.charge)
    pos, charge = vortex
    return np.asarray(pos, dtype=float), int(charge)


def kirchhoff_onsager(vortices) -> float:
    """W0 = -pi sum_{i != j} d_i d_j log|x_i - x_j| over ordered pairs."""
    items = [_unpack(v) for v in vortices]
    total = 0.0
    for i, (xi, di) in enumerate(items):
        for j, (xj, dj) in enumerate(items):
            if i == j:
                continue
            r = float(np.hypot(*(xi - xj)))
            if r == 0.0:
                raise ValueError(f"vortices {i} and {j} coincide at {tuple(xi)}")
            total += -np.pi * di * dj * np.log(r)
    return total


def ko_correction(m: Field, model: MeanFieldModel, kernel: Kernel, vortices, workers=None) -> float:
    """K = F - W0."""
    return free_energy(m, model, kernel, workers).total - kirchhoff_onsager(vortices)
