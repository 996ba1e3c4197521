"""Mean-field thermodynamics of a unit spin in R^q, q in {2, 3}.

``phi_hat(t)`` is the moment generating function of the uniform measure on the
sphere, I0(t) for q=2 and sinh(t)/t for q=3. Its log-derivative ``f`` maps a
field strength to a magnetization; ``i_prime`` is the inverse map, and
``entropy`` is the Legendre transform of log phi_hat.

All functions accept scalars or arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
from scipy import special

RHO_MAX = 1.0 - 1e-9

_SERIES_TERMS = 20
# sinh(t)/t = sum t^{2k} / (2k+1)!
_SINHC = np.array([1.0 / factorial(2 * k + 1) for k in range(_SERIES_TERMS)])
# (t coth t - 1) / t^2 * sinh(t)/t = sum_{k>=1} 2k t^{2k-2} / (2k+1)!
_LANGEVIN_NUM = np.array([2.0 * k / factorial(2 * k + 1) for k in range(1, _SERIES_TERMS + 1)])
# (sinh^2 t - t^2) / t^4 = sum_{k>=2} 2^{2k-1} t^{2k-4} / (2k)!
_LANGEVIN_DNUM = np.array([2.0 ** (2 * k - 1) / factorial(2 * k) for k in range(2, _SERIES_TERMS + 2)])
# I0(t) - 1 = sum_{k>=1} (t^2/4)^k / (k!)^2
_I0M1 = np.array([1.0 / factorial(k) ** 2 for k in range(1, _SERIES_TERMS + 1)])


def _check_q(q: int) -> None:
    if q not in (2, 3):
        raise ValueError(f"spin dimension q must be 2 or 3, got {q!r}")


def _as_array(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if np.any(np.isnan(a)):
        raise ValueError(f"{name} contains NaN")
    return a


def _out(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


def _poly(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Horner evaluation of sum coeffs[k] x^k."""
    acc = np.zeros_like(x)
    for c in coeffs[::-1]:
        acc = acc * x + c
    return acc


def _sinhc(t: np.ndarray) -> np.ndarray:
    return _poly(_SINHC, t * t)


def f(t, q: int):
    """Magnetization response: I1(t)/I0(t) for q=2, coth(t) - 1/t for q=3."""
    _check_q(q)
    t = _as_array(t, "t")
    if np.any(t < 0):
        raise ValueError("f is defined for t >= 0 only")
    if q == 2:
        return _out(special.i1e(t) / special.i0e(t))
    small = t < 1.0
    ts = np.where(small, t, 0.0)
    series = ts * _poly(_LANGEVIN_NUM, ts * ts) / _sinhc(ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = 1.0 / np.tanh(t) - 1.0 / t
    return _out(np.where(small, series, big))


def f_prime(t, q: int):
    """Derivative of ``f`` in t."""
    _check_q(q)
    t = _as_array(t, "t")
    if np.any(t < 0):
        raise ValueError("f is defined for t >= 0 only")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if q == 2:
            r = special.i1e(t) / special.i0e(t)
            direct = 1.0 - r / t - r * r
            # large t: 1 - f = 1/(2t) + 1/(8t^2) + 1/(8t^3) + 25/(128t^4) + ...
            u = 1.0 / t
            asym = u * u * (0.5 + u * (0.25 + u * (0.375 + u * 25.0 / 32.0)))
            out = np.where(t == 0, 0.5, np.where(t > 1e3, asym, direct))
        else:
            ts = np.where(t < 1.0, t, 0.0)
            series = _poly(_LANGEVIN_DNUM, ts * ts) / _sinhc(ts) ** 2
            e = np.exp(-2.0 * t)
            big = 1.0 / (t * t) - 4.0 * e / (1.0 - e) ** 2
            out = np.where(t < 1.0, series, big)
    return _out(np.asarray(out))


def log_phi_hat(t, q: int):
    """log of the spherical moment generating function at field strength t >= 0."""
    _check_q(q)
    t = _as_array(t, "t")
    if np.any(t < 0):
        raise ValueError("log_phi_hat is defined for t >= 0 only")
    small = t <= 1.0
    ts = np.where(small, t, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if q == 2:
            series = np.log1p(_poly(_I0M1, ts * ts / 4.0) * ts * ts / 4.0)
            big = t + np.log(special.i0e(t))
        else:
            series = np.log1p(_poly(_SINHC[1:], ts * ts) * ts * ts)
            big = t - np.log(2.0 * t) + np.log1p(-np.exp(-2.0 * t))
    return _out(np.where(small, series, big))


def i_prime(rho, q: int, max_iter: int = 200):
    """Inverse of ``f``: the t >= 0 with f(t, q) = rho.

    Newton iteration from the left of the root; ``f`` is increasing and
    concave, so the iterates increase monotonically to the root.
    """
    _check_q(q)
    rho = _as_array(rho, "rho")
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    if np.any(rho > RHO_MAX):
        raise ValueError(f"rho must be <= {RHO_MAX!r} (entropy is singular at 1)")
    t = rho * (q - rho * rho) / (1.0 - rho * rho)
    t = np.ravel(t).copy()
    r = np.ravel(rho)
    active = r > 0
    t[~active] = 0.0
    for it in range(max_iter):
        if not active.any():
            break
        ta = t[active]
        step = (np.asarray(f(ta, q)) - r[active]) / np.asarray(f_prime(ta, q))
        new = np.maximum(ta - step, 0.0)
        t[active] = new
        # after the first step the iterates sit left of the root and increase;
        # a non-increasing step means rounding has taken over
        moved = new - ta
        done = (np.abs(moved) <= 1e-15 * np.maximum(new, 1.0)) | ((it > 0) & (moved <= 0))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return _out(t.reshape(rho.shape))


def entropy(rho, q: int):
    """Legendre transform of log phi_hat at modulus rho: rho*t - log phi_hat(t)."""
    t = np.asarray(i_prime(rho, q))
    rho = np.asarray(rho, dtype=float)
    return _out(np.maximum(rho * t - np.asarray(log_phi_hat(t, q)), 0.0))


@dataclass(frozen=True)
class MeanFieldModel:
    q: int
    beta: float

    def __post_init__(self):
        _check_q(self.q)
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(f"beta must be a positive number, got {self.beta!r}")

    @property
    def ordered(self) -> bool:
        return self.beta > self.q

    @cached_property
    def m_beta(self) -> float:
        return solve_m_beta(self)

    @cached_property
    def f_beta_min(self) -> float:
        return f_beta(self.m_beta, self)


def f_beta(m_modulus, model: MeanFieldModel):
    """Mean-field free energy -rho^2/2 + entropy(rho)/beta."""
    rho = np.asarray(m_modulus, dtype=float)
    return _out(-0.5 * rho * rho + np.asarray(entropy(rho, model.q)) / model.beta)


def solve_m_beta(model: MeanFieldModel) -> float:
    """Spontaneous magnetization: positive root of m = f(beta m), or 0 if beta <= q."""
    beta, q = float(model.beta), model.q
    if beta <= q:
        return 0.0
    lo, hi = 1e-12, 1.0 - 1e-12
    # g(m) = m - f(beta m) is negative just above 0 and positive near 1
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if mid - f(beta * mid, q) < 0:
            lo = mid
        else:
            hi = mid
    return hi
