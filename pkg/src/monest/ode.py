"""Fixed-step RK4 integration with guard-crossing events and pulse forcing.

All simulations in this package run through :func:`integrate`.  The step
size is fixed (no adaptive control) so that repeated runs are
bit-reproducible and per-step monotonicity checks have stable tolerances.
Guard crossings are localized by bisection in time, re-stepping from the
beginning of the offending step, to within ``h * 1e-6``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "IntegrationFault",
    "VectorField",
    "EventSpec",
    "Trajectory",
    "rk4_step",
    "integrate",
    "impulse_train",
]

# Relative accuracy of event-time localization, as a fraction of the step.
EVENT_TIME_TOL = 1e-6


class IntegrationFault(RuntimeError):
    """Raised on a non-finite right-hand side or an exhausted step budget."""

    def __init__(self, message: str, t: float | None = None, x: np.ndarray | None = None):
        super().__init__(message)
        self.t = t
        self.x = x


@dataclass(frozen=True)
class VectorField:
    """Right-hand side of an ODE, ``dx/dt = rhs(t, x)`` on R^dimension."""

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.rhs(t, x)


@dataclass(frozen=True)
class EventSpec:
    """Scalar guard whose sign change across a step marks an event.

    direction: 'rising' fires on guard going negative -> non-negative,
    'falling' on positive -> non-positive, 'any' on either.
    action: 'record' only logs the event, 'stop' truncates the trajectory
    at the event time, 'toggle' additionally invokes the integrate()
    ``on_event`` callback (used for hybrid switching logic).
    """

    guard: Callable[[float, np.ndarray], float]
    direction: str = "any"
    action: str = "record"
    name: str = "event"

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"unknown event direction {self.direction!r}")
        if self.action not in ("record", "stop", "toggle"):
            raise ValueError(f"unknown event action {self.action!r}")


@dataclass
class Trajectory:
    """Time-indexed log of the full extended state plus recorded events."""

    times: np.ndarray
    samples: np.ndarray  # shape (len(times), dimension)
    events: list = field(default_factory=list)  # (time, event name) pairs

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        return self.samples[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def rk4_step(field: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """Single classical Runge-Kutta step of size h > 0."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    k1 = field.rhs(t, x)
    k2 = field.rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = field.rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = field.rhs(t + h, x + h * k3)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationFault("non-finite state after RK4 step", t=t, x=np.asarray(x))
    return out


def _crossed(direction: str, g0: float, g1: float) -> bool:
    if direction == "rising":
        return g0 < 0.0 <= g1
    if direction == "falling":
        return g0 > 0.0 >= g1
    return (g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)


def _bisect_event(field, event, t0, x0, h, g0):
    """Localize the first guard crossing inside (t0, t0+h].

    Bisects on the crossing time, re-stepping from (t0, x0); terminates
    once the bracket is narrower than EVENT_TIME_TOL * h.
    """
    lo, hi = 0.0, h
    x_hi = rk4_step(field, t0, x0, h)
    tol = EVENT_TIME_TOL * h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        x_mid = rk4_step(field, t0, x0, mid)
        g_mid = event.guard(t0 + mid, x_mid)
        if _crossed(event.direction, g0, g_mid):
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return hi, x_hi


def integrate(
    field: VectorField,
    x0: np.ndarray,
    t0: float,
    tf: float,
    h: float,
    events: Sequence[EventSpec] = (),
    on_event: Optional[Callable[[str, float, np.ndarray], None]] = None,
    observer: Optional[Callable[[float, np.ndarray], None]] = None,
    max_steps: int = 50_000_000,
    record_stride: int = 1,
) -> Trajectory:
    """Integrate dx/dt = field(t, x) from t0 to tf with fixed step h.

    Samples land on the uniform grid t0 + k*h (event handling happens
    inside a step and does not shift the grid).  ``observer`` is called at
    every recorded grid point, after any events in the preceding step have
    been applied; ``on_event`` is called for events with action 'toggle'
    and may mutate external discrete state consulted by ``field``.
    A 'stop' event truncates the trajectory at the event time.
    """
    if tf <= t0:
        raise ValueError("tf must exceed t0")
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")

    x = np.array(x0, dtype=float)
    t = float(t0)
    times = [t]
    samples = [x.copy()]
    recorded_events: list = []
    if observer is not None:
        observer(t, x)

    # Guard values at the current point; None disarms detection for one
    # evaluation right after an event fired on that guard.
    g_prev: list = [ev.guard(t, x) for ev in events]

    n_steps_total = int(np.ceil((tf - t0) / h - 1e-12))
    if n_steps_total > max_steps:
        raise IntegrationFault(
            f"step budget exceeded: {n_steps_total} > max_steps={max_steps}", t=t0
        )

    for k in range(1, n_steps_total + 1):
        t_next = min(t0 + k * h, tf)
        stopped = False
        # Sub-step loop: handle possibly several events inside one grid step.
        while t < t_next - 1e-15 * max(1.0, abs(t_next)):
            h_sub = t_next - t
            x_trial = rk4_step(field, t, x, h_sub)
            g_trial = [ev.guard(t_next, x_trial) for ev in events]
            hit = None
            for i, ev in enumerate(events):
                if g_prev[i] is None:
                    continue
                if _crossed(ev.direction, g_prev[i], g_trial[i]):
                    dt_ev, x_ev = _bisect_event(field, ev, t, x, h_sub, g_prev[i])
                    if hit is None or dt_ev < hit[0]:
                        hit = (dt_ev, x_ev, i)
            if hit is None:
                t, x, g_prev = t_next, x_trial, g_trial
                break
            dt_ev, x_ev, i = hit
            ev = events[i]
            t, x = t + dt_ev, x_ev
            recorded_events.append((t, ev.name))
            if ev.action == "stop":
                times.append(t)
                samples.append(x.copy())
                if observer is not None:
                    observer(t, x)
                stopped = True
                break
            if ev.action == "toggle" and on_event is not None:
                on_event(ev.name, t, x)
            # Re-evaluate guards at the event point with the (possibly
            # toggled) dynamics; disarm the fired guard for one evaluation
            # so that g ~ 0 at the event surface cannot re-trigger.
            g_prev = [e.guard(t, x) for e in events]
            g_prev[i] = None
        if stopped:
            break
        if k % record_stride == 0 or t >= tf - 1e-15 * max(1.0, abs(tf)):
            times.append(t)
            samples.append(x.copy())
            if observer is not None:
                observer(t, x)

    return Trajectory(np.asarray(times), np.asarray(samples), recorded_events)


def impulse_train(t, delay: float, period: float, width: float):
    """Rectangular unit pulse train: 1 iff (t - delay) mod period in [0, width).

    Realizes impulsive forcing as finite pulses of the given width.  Total
    in t (scalar or array); broadcasting over ``delay`` is supported.
    """
    if not (period > width > 0.0):
        raise ValueError("require period > width > 0")
    phase = np.mod(np.asarray(t) - delay, period)
    out = (phase < width).astype(float)
    if out.ndim == 0:
        return float(out)
    return out
