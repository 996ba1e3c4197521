"""Gradient-flow relaxation of a magnetization field.

The flow is dm/dt = -m + G(m) with G(m) = f(beta |J*m|) J*m / |J*m|. Written
with the integrating factor, one step of length h from t_k to t_{k+1} reads

    m_{k+1} = e^{-h} m_k + int_0^h e^{s-h} G(m(t_k + s - h)) ds.

The integrand is evaluated on the previous step (time delay h) and replaced
by the straight line through its end values G(m_{k-1}) and G(m_k); the
integral of e^{s-h} times that line is taken exactly:

    m_{k+1} = e^{-h} m_k + a G(beta(t_k), m_{k-1}) + b G(beta(t_{k+1}), m_k),
    b = (h - 1 + e^{-h}) / h,  a = (1 - (1 + h) e^{-h}) / h,  a + b = 1 - e^{-h}.

Both weights are nonnegative and sum to the decay gap, so every step is a
convex combination of m_k and two values of G. Fixed points of G are fixed
points of the scheme, and bounds such as |m| <= lambda carry over exactly.
On the first interval the delayed field is zero and the step is pure decay,
m_1 = e^{-h} m_0. Each step evaluates G once; the right-end value is reused
as the next step's left-end value.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _parallel
from .energy import EnergyBreakdown, dissipation_rate, free_energy, response
from .lattice import Field, Kernel, LatticeGeometry, convolve
from .meanfield import MeanFieldModel

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    h: float = 0.05
    t_max: float = 20000.0
    tol: float = 1e-8
    record_every: int = 200

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be > 0, got {self.h!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol!r}")
        if not self.t_max >= self.h:
            raise ValueError(f"t_max must be >= h, got {self.t_max!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every!r}")


@dataclass(frozen=True)
class Schedule:
    """Piecewise linear beta(t) through ``knots``; held at the end values outside."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(t), float(b)) for t, b in self.knots)
        if not knots:
            raise ValueError("schedule needs at least one knot")
        ts = [t for t, _ in knots]
        if any(b2 <= b1 for b1, b2 in zip(ts, ts[1:])):
            raise ValueError("schedule times must be strictly increasing")
        if any(not (b > 0 and math.isfinite(b)) for _, b in knots):
            raise ValueError("schedule beta values must be positive and finite")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, beta: float) -> "Schedule":
        return cls(((0.0, beta),))

    @classmethod
    def default(
        cls,
        beta1: float,
        t1: float = 100.0,
        t2: float = 10.0,
        beta2: float = 2.0,
        swing: float = 0.4,
    ) -> "Schedule":
        """Heat from 0.8*beta1 to beta2 at t2, swing twice around beta1 with
        shrinking amplitude, and settle at beta1 at t1."""
        if not 0 < t2 < t1:
            raise ValueError("need 0 < t2 < t1")
        span = abs(beta1 - beta2)
        ts = np.linspace(t2, t1, 6)
        amps = [swing, -swing / 2, swing / 4, -swing / 8]
        knots = [(0.0, 0.8 * beta1), (t2, beta2)]
        knots += [(float(t), max(beta1 + a * span, 0.5 * beta2)) for t, a in zip(ts[1:5], amps)]
        knots.append((t1, beta1))
        return cls(tuple(knots))

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        knots = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"schedule line {lineno}: expected 't beta', got {line!r}")
            knots.append((float(parts[0]), float(parts[1])))
        return cls(tuple(knots))

    @classmethod
    def load(cls, path) -> "Schedule":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        return "".join(f"{t!r} {b!r}\n" for t, b in self.knots)

    @property
    def end(self) -> float:
        return self.knots[-1][0]

    @property
    def final_beta(self) -> float:
        return self.knots[-1][1]

    def __call__(self, t: float) -> float:
        ts = [k[0] for k in self.knots]
        if t <= ts[0]:
            return self.knots[0][1]
        if t >= ts[-1]:
            return self.knots[-1][1]
        i = int(np.searchsorted(ts, t, side="right"))
        (t0, b0), (t1, b1) = self.knots[i - 1], self.knots[i]
        return b0 + (b1 - b0) * (t - t0) / (t1 - t0)


TRACE_COLUMNS = (
    "t",
    "beta",
    "F_total",
    "F_interaction_int",
    "F_interaction_bnd",
    "F_local",
    "dissipation",
    "sup_residual",
    "sup_modulus",
)


@dataclass
class Trace:
    rows: list = dc_field(default_factory=list)
    termination: str = "running"
    steps: int = 0

    def add(self, t: float, beta: float, energy: EnergyBreakdown, dissipation: float, residual: float, sup_mod: float):
        self.rows.append(
            (
                t,
                beta,
                energy.total,
                energy.interaction_interior,
                energy.interaction_boundary,
                energy.local_excess,
                dissipation,
                residual,
                sup_mod,
            )
        )

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(TRACE_COLUMNS) + "\n")
        for row in self.rows:
            out.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    @property
    def converged(self) -> bool:
        return self.termination == "converged"


def _beta_at(beta, t: float) -> float:
    return float(beta(t)) if callable(beta) else float(beta)


@lru_cache(maxsize=256)
def _model(q: int, beta: float) -> MeanFieldModel:
    return MeanFieldModel(q, beta)


def forcing(m: Field, beta: float, kernel: Kernel, workers=None) -> np.ndarray:
    """G(m) = f(beta |J*m|) J*m / |J*m| on the interior (zero where J*m = 0)."""
    return response(convolve(m, kernel, workers), beta, m.geometry.q)


def rhs(m: Field, beta: float, model_or_q, kernel: Kernel, workers=None) -> np.ndarray:
    """Right side -m + G(m) of the flow on interior sites; the collar is frozen."""
    q = model_or_q.q if isinstance(model_or_q, MeanFieldModel) else int(model_or_q)
    if q != m.geometry.q:
        raise ValueError("field and model disagree on q")
    return -m.interior + forcing(m, beta, kernel, workers)


def _sup_norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.einsum("...i,...i->...", v, v)).max(initial=0.0))


def euler_lagrange_residual(m: Field, model: MeanFieldModel, kernel: Kernel, workers=None) -> float:
    """max over interior sites of |-m + G(m)|."""
    return _sup_norm(rhs(m, model.beta, model, kernel, workers))


def step_weights(h: float) -> tuple[float, float, float]:
    """(decay, a, b) for the delayed step; a weighs the older forcing value."""
    e = math.exp(-h)
    em1 = -math.expm1(-h)  # 1 - e^{-h}
    if h < 0.1:
        # (h - 1 + e^{-h}) / h = sum_{n>=2} (-h)^n / (h n!), summed without cancellation
        b, term = 0.0, 1.0
        for n in range(2, 20):
            term *= -h / n if n > 2 else h / 2
            b += term
    else:
        b = (h - em1) / h
    a = em1 - b
    return e, a, b


def step(m: Field, t: float, config: RunConfig, beta, kernel: Kernel, previous: Field | None = None, workers=None) -> Field:
    """One delayed step from time t to t + h.

    ``previous`` is the field at t - h. Without it the step is pure decay at
    t = 0 (the delayed field vanishes on the first interval) and otherwise uses
    ``m`` itself as the delayed value, which is the exponential Euler step.
    """
    decay, a, b = step_weights(config.h)
    out = m.copy()
    if previous is None and t == 0:
        out.set_interior(decay * m.interior)
        return out
    right = forcing(m, _beta_at(beta, t + config.h), kernel, workers)
    if previous is None:
        left = forcing(m, _beta_at(beta, t), kernel, workers)
    else:
        left = forcing(previous, _beta_at(beta, t), kernel, workers)
    out.set_interior(decay * m.interior + a * left + b * right)
    return out


class Integrator:
    """Stateful driver of the delayed scheme.

    Holds the current field, the time, the step count and the forcing value
    G(beta(t_k), m_{k-1}) needed as the left end of the next step.
    """

    def __init__(
        self,
        field: Field,
        kernel: Kernel,
        config: RunConfig,
        schedule: Schedule,
        t: float = 0.0,
        step_count: int = 0,
        previous: Field | None = None,
        workers=None,
    ):
        self.field = field.copy()
        self.kernel = kernel
        self.config = config
        self.schedule = schedule
        self.step_count = step_count
        self.t = t
        self.previous = None if previous is None else previous.copy()
        self.workers = _parallel.resolve_workers(workers)
        bad = ~np.isfinite(self.field.values).all(axis=-1)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            b = field.geometry.boundary_depth
            raise FloatingPointError(f"non-finite magnetization at site ({j - b}, {i - b}) at t={t!r}")
        self.decay, self.a, self.b = step_weights(config.h)
        if step_count > 0 and previous is None:
            raise ValueError("resuming after step 0 needs the previous field")
        self._left = None
        if self.previous is not None:
            self._left = forcing(self.previous, schedule(self.t), kernel, self.workers)
        self._right = None

    @property
    def q(self) -> int:
        return self.field.geometry.q

    def time_at(self, k: int) -> float:
        return k * self.config.h

    def prepare(self) -> np.ndarray:
        """Forcing at the right end of the coming step, G(beta(t_{k+1}), m_k)."""
        if self._right is None:
            t_next = self.time_at(self.step_count + 1)
            self._right = forcing(self.field, self.schedule(t_next), self.kernel, self.workers)
        return self._right

    def holding(self) -> bool:
        """True once beta no longer changes between t_k and t_{k+1}."""
        return self.t >= self.schedule.end

    def residual(self) -> float:
        """sup |-m + G(m)| at the current time."""
        if self.holding():
            return _sup_norm(-self.field.interior + self.prepare())
        return _sup_norm(-self.field.interior + forcing(self.field, self.schedule(self.t), self.kernel, self.workers))

    def advance(self) -> None:
        right = self.prepare()
        m = self.field.interior
        if self._left is None:
            new = self.decay * m
        else:
            new = self.decay * m + self.a * self._left + self.b * right
        if not np.all(np.isfinite(new)):
            y, x = np.argwhere(~np.isfinite(new).all(axis=-1))[0]
            raise FloatingPointError(f"non-finite magnetization at site ({x}, {y}) at t={self.t!r}")
        self.previous = self.field
        self.field = self.field.with_interior(new)
        self._left = right
        self._right = None
        self.step_count += 1
        self.t = self.time_at(self.step_count)

    def record(self, trace: Trace, residual: float | None = None) -> None:
        beta = self.schedule(self.t)
        model = _model(self.q, beta)
        energy = free_energy(self.field, model, self.kernel, self.workers)
        rate = dissipation_rate(self.field, model, self.kernel, self.workers)
        if residual is None:
            residual = self.residual()
        trace.add(self.t, beta, energy, rate, residual, self.field.sup_modulus())

    def run(self, trace: Trace | None = None, checkpoint=None) -> Trace:
        """Step until the residual drops to tol (after the schedule ends) or t_max.

        ``checkpoint`` is an optional ``(path, every_steps)`` pair.
        """
        cfg = self.config
        trace = Trace() if trace is None else trace
        max_steps = int(math.floor(cfg.t_max / cfg.h + 1e-9))
        while True:
            res = self.residual()
            k = self.step_count
            done = self.holding() and res <= cfg.tol
            out_of_time = k >= max_steps
            if k % cfg.record_every == 0 or done or out_of_time:
                if not trace.rows or trace.rows[-1][0] != self.t:
                    self.record(trace, res)
            if done or out_of_time:
                trace.termination = "converged" if done else "t_max"
                trace.steps = k
                return trace
            self.advance()
            if checkpoint is not None and self.step_count % checkpoint[1] == 0:
                save_checkpoint(checkpoint[0], self, trace)


def run_annealed(m0: Field, model_q, kernel: Kernel, config: RunConfig, schedule: Schedule, workers=None, checkpoint=None):
    """Relax ``m0`` under beta(t) from ``schedule``; converge once beta is held."""
    q = model_q.q if isinstance(model_q, MeanFieldModel) else int(model_q)
    if q != m0.geometry.q:
        raise ValueError("field and model disagree on q")
    integ = Integrator(m0, kernel, config, schedule, workers=workers)
    trace = integ.run(checkpoint=checkpoint)
    return integ.field, trace


def run_to_equilibrium(m0: Field, model: MeanFieldModel, kernel: Kernel, config: RunConfig, workers=None, checkpoint=None):
    """Relax ``m0`` at constant beta until sup |rhs| <= tol or t_max."""
    return run_annealed(m0, model, kernel, config, Schedule.constant(model.beta), workers=workers, checkpoint=checkpoint)


def resume(path, kernel: Kernel | None = None, workers=None, checkpoint_every: int | None = None):
    """Continue a checkpointed run to completion; the trace continues too."""
    integ, trace = load_checkpoint(path, kernel, workers=workers)
    cp = None if checkpoint_every is None else (path, checkpoint_every)
    trace = integ.run(trace=trace, checkpoint=cp)
    return integ.field, trace


def _geometry_dict(g: LatticeGeometry) -> dict:
    return {k: int(v) for k, v in asdict(g).items()}


def save_checkpoint(path, integ: Integrator, trace: Trace | None = None) -> None:
    """Write the integrator state (and the trace so far) atomically."""
    path = Path(path)
    header = {
        "format": "kac-checkpoint",
        "version": CHECKPOINT_VERSION,
        "geometry": _geometry_dict(integ.field.geometry),
        "q": integ.q,
        "t": integ.t,
        "step_count": integ.step_count,
        "beta": integ.schedule(integ.t),
        "schedule": [list(k) for k in integ.schedule.knots],
        "config": asdict(integ.config),
        "kernel_radius": integ.kernel.radius,
        "rng_state": None,
    }
    arrays = {"values": integ.field.values}
    if integ.previous is not None:
        arrays["previous"] = integ.previous.values
    if trace is not None:
        arrays["trace"] = np.array(trace.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, kernel: Kernel | None = None, workers=None) -> tuple[Integrator, Trace]:
    """Rebuild the integrator and the trace recorded up to the checkpoint."""
    from .lattice import build_kernel

    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "kac-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
        geometry = LatticeGeometry(**header["geometry"])
        values = data["values"].copy()
        previous = data["previous"].copy() if "previous" in data.files else None
        rows = [tuple(float(v) for v in r) for r in data["trace"]] if "trace" in data.files else []
    if kernel is None:
        kernel = build_kernel(header["kernel_radius"])
    elif kernel.radius != header["kernel_radius"]:
        raise ValueError("checkpoint was written with a different kernel radius")
    schedule = Schedule(tuple(tuple(k) for k in header["schedule"]))
    integ = Integrator(
        Field(geometry, values),
        kernel,
        RunConfig(**header["config"]),
        schedule,
        t=header["t"],
        step_count=header["step_count"],
        previous=None if previous is None else Field(geometry, previous),
        workers=workers,
    )
    return integ, Trace(rows=rows)
