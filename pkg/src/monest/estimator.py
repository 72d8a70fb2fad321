"""Certainty-equivalence control and the finite-form adaptation law.

The estimate is an algebraic output map, never an integrated state:

    theta_hat = Gamma (psi * alpha - Psi + theta_I [+ C_j, gated])

with only the auxiliary integral theta_I evolving in time.  This is the
defining feature of the algorithm: it avoids differentiating the error
signal psi.  The module also provides the closed-form effective
derivative of theta_hat (used as the ground-truth oracle in tests) and
the hysteretic switching supervisor for plants whose monotonicity holds
only on an atlas of balls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ErrorFunctional,
    LocalMonotoneAtlas,
    MonotoneParametrization,
    PartitionedState,
    PhiFunction,
    PlantModel,
    central_difference,
)

__all__ = [
    "GuardFault",
    "AtlasFault",
    "EstimatorConfig",
    "EstimatorState",
    "control_u",
    "theta_P",
    "theta_hat",
    "theta_I_rhs",
    "effective_update_rhs",
    "switching_step",
    "steering_u1",
]


class GuardFault(RuntimeError):
    """A standing assumption failed at a concrete state (witness attached)."""

    def __init__(self, message: str, x=None, t=None, value=None):
        super().__init__(message)
        self.x = x
        self.t = t
        self.value = value


class AtlasFault(RuntimeError):
    """Switching supervisor reached an inconsistent discrete state."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Gain matrix, injection function and the parametrization(s) in use.

    Exactly one of ``parametrization`` (global monotonicity) or ``atlas``
    (local monotonicity with switching) should be supplied.
    """

    Gamma: np.ndarray  # (d, d) symmetric positive definite
    phi: PhiFunction
    err: ErrorFunctional
    parametrization: Optional[MonotoneParametrization] = None
    atlas: Optional[LocalMonotoneAtlas] = None

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        object.__setattr__(self, "Gamma", G)
        if not np.allclose(G, G.T, atol=1e-12):
            raise ValueError("Gamma must be symmetric")
        if np.min(np.linalg.eigvalsh(G)) <= 0.0:
            raise ValueError("Gamma must be positive definite")
        if (self.parametrization is None) == (self.atlas is None):
            raise ValueError("supply exactly one of parametrization or atlas")

    @property
    def d(self) -> int:
        return self.Gamma.shape[0]


@dataclass
class EstimatorState:
    """Integral state plus the supervisor's discrete bookkeeping.

    ``C`` holds the continuity corrections; ``last_off_theta_P`` stores
    theta_P at each ball's most recent deactivation so the correction can
    bridge the dead interval; ``last_on_theta_hat`` is the held output
    while all balls are off.
    """

    theta_I: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    C: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    last_off_theta_P: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    has_off_record: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    last_on_theta_hat: Optional[np.ndarray] = None

    @staticmethod
    def fresh(theta_I0, n_balls: int = 0) -> "EstimatorState":
        theta_I0 = np.atleast_1d(np.asarray(theta_I0, dtype=float))
        d = theta_I0.size
        return EstimatorState(
            theta_I=theta_I0.copy(),
            sigma=np.zeros(n_balls, dtype=int),
            C=np.zeros((n_balls, d)),
            last_off_theta_P=np.zeros((n_balls, d)),
            has_off_record=np.zeros(n_balls, dtype=bool),
        )

    def active_ball(self) -> Optional[int]:
        on = np.flatnonzero(self.sigma)
        if len(on) > 1:
            raise AtlasFault(f"multiple balls active: {on.tolist()}")
        return int(on[0]) if len(on) == 1 else None


def control_u(plant: PlantModel, err: ErrorFunctional, phi: PhiFunction,
              theta_hat_value: np.ndarray, x: PartitionedState, t: float) -> float:
    """Certainty-equivalence input cancelling the estimated drift.

    u = (L_g psi)^-1 (-L_{f(x, theta_hat)} psi - phi(psi) - dpsi/dt); with
    theta_hat equal to the true parameter the closed loop obeys
    dpsi/dt = -phi(psi).
    """
    grad = np.asarray(err.grad_x_psi(x, t), dtype=float)
    g_full = np.concatenate([np.atleast_1d(plant.g1(x)), np.atleast_1d(plant.g2(x))])
    lg = float(grad @ g_full)
    if abs(lg) < err.lg_psi_floor:
        raise GuardFault("L_g psi fell below its assumed floor", x=x, t=t, value=lg)
    f_full = np.concatenate([
        np.atleast_1d(plant.f1(x)),
        np.atleast_1d(plant.f2(x, theta_hat_value)),
    ])
    lf = float(grad @ f_full)
    return (-lf - phi(err.psi(x, t)) - err.dpsi_dt(x, t)) / lg


def theta_P(p: MonotoneParametrization, err: ErrorFunctional,
            x: PartitionedState, t: float) -> np.ndarray:
    """Proportional part psi * alpha - Psi of the finite form."""
    psi = err.psi(x, t)
    return psi * np.asarray(p.alpha(x, t), dtype=float) - \
        np.atleast_1d(np.asarray(p.realizability.Psi(x, t), dtype=float))


def _active_parametrization(state: EstimatorState, cfg: EstimatorConfig):
    if cfg.parametrization is not None:
        return cfg.parametrization, None
    j = state.active_ball()
    if j is None:
        return None, None
    return cfg.atlas.balls[j].parametrization, j


def theta_hat(state: EstimatorState, cfg: EstimatorConfig,
              x: PartitionedState, t: float) -> np.ndarray:
    """Finite-form estimate: a pure output map of (state, x, t).

    In switching mode the output includes the active ball's continuity
    correction C_j; while every ball is off the last on-value is held
    (the gated update leaves theta_I frozen, so this is consistent).
    """
    p, j = _active_parametrization(state, cfg)
    if p is None:
        if state.last_on_theta_hat is not None:
            return state.last_on_theta_hat.copy()
        return cfg.Gamma @ state.theta_I
    corr = state.C[j] if j is not None else 0.0
    return cfg.Gamma @ (theta_P(p, cfg.err, x, t) + state.theta_I + corr)


def _partial_x1(fun, x: PartitionedState, t: float):
    """(d, m1) matrix of central differences of fun w.r.t. x1."""
    cols = []
    for i in range(x.m1):
        def bump(x1v):
            return fun(PartitionedState(x1v, x.x2), t)
        cols.append(np.atleast_1d(central_difference(bump, x.x1, i)))
    if not cols:
        return np.zeros((np.atleast_1d(fun(x, t)).size, 0))
    return np.stack(cols, axis=-1)


def _partial_t(fun, x: PartitionedState, t: float):
    step = 1e-5 * (1.0 + abs(t))
    return (np.atleast_1d(fun(x, t + step)) - np.atleast_1d(fun(x, t - step))) / (2.0 * step)


def theta_I_rhs(state: EstimatorState, cfg: EstimatorConfig, plant: PlantModel,
                x: PartitionedState, t: float, u: float) -> np.ndarray:
    """Time derivative of the integral part of the finite form.

    d theta_I/dt = phi(psi) alpha + dPsi/dt - psi dalpha/dt
                   - (psi L_{f1} alpha - L_{f1} Psi)
                   - (psi L_{g1} alpha - L_{g1} Psi) u
                   + beta (f2(x, theta_hat) + g2 u)

    and is multiplied by the gate sigma_j in switching mode (zero while
    every ball is off).
    """
    p, _ = _active_parametrization(state, cfg)
    if p is None:
        return np.zeros(cfg.d)
    err = cfg.err
    r = p.realizability
    psi = err.psi(x, t)
    alpha = np.asarray(p.alpha(x, t), dtype=float)

    dPsi_dt = np.atleast_1d(r.dPsi_dt(x, t)) if r.dPsi_dt is not None \
        else _partial_t(r.Psi, x, t)
    dalpha_dt = np.atleast_1d(r.dalpha_dt(x, t)) if r.dalpha_dt is not None \
        else _partial_t(p.alpha, x, t)

    rhs = cfg.phi(psi) * alpha + dPsi_dt - psi * dalpha_dt

    if x.m1 > 0:
        dPsi_dx1 = np.atleast_2d(r.dPsi_dx1(x, t)) if r.dPsi_dx1 is not None \
            else _partial_x1(r.Psi, x, t)
        dalpha_dx1 = np.atleast_2d(r.dalpha_dx1(x, t)) if r.dalpha_dx1 is not None \
            else _partial_x1(p.alpha, x, t)
        f1 = np.atleast_1d(plant.f1(x))
        g1 = np.atleast_1d(plant.g1(x))
        rhs = rhs - (psi * (dalpha_dx1 @ f1) - dPsi_dx1 @ f1)
        rhs = rhs - (psi * (dalpha_dx1 @ g1) - dPsi_dx1 @ g1) * u

    beta = np.atleast_2d(np.asarray(r.beta(x, t), dtype=float))
    if np.any(beta != 0.0):
        th = theta_hat(state, cfg, x, t)
        x2dot_known = np.atleast_1d(plant.f2(x, th)) + np.atleast_1d(plant.g2(x)) * u
        rhs = rhs + beta @ x2dot_known
    return rhs


def effective_update_rhs(cfg: EstimatorConfig, plant: PlantModel,
                         x: PartitionedState, t: float,
                         theta_hat_value: np.ndarray, psi_dot: float,
                         parametrization: Optional[MonotoneParametrization] = None
                         ) -> np.ndarray:
    """Closed-form d theta_hat/dt along trajectories (test-harness oracle).

    d theta_hat/dt = Gamma ((psi_dot + phi(psi)) alpha
                            - beta (f2(x, theta) - f2(x, theta_hat)))

    Uses the plant's sealed true parameter, so it is for diagnostics and
    tests only; the running estimator never evaluates it.
    """
    p = parametrization if parametrization is not None else cfg.parametrization
    if p is None:
        raise ValueError("effective_update_rhs needs an explicit parametrization in atlas mode")
    err = cfg.err
    psi = err.psi(x, t)
    alpha = np.asarray(p.alpha(x, t), dtype=float)
    core_term = (psi_dot + cfg.phi(psi)) * alpha
    beta = np.atleast_2d(np.asarray(p.realizability.beta(x, t), dtype=float))
    if np.any(beta != 0.0):
        gap = np.atleast_1d(plant.f2(x, plant.true_theta())) - \
            np.atleast_1d(plant.f2(x, theta_hat_value))
        core_term = core_term - beta @ gap
    return cfg.Gamma @ core_term


# Absolute slack accepted when matching the state to a switching surface.
# Sliding-mode steering chatters across its manifold, which limits how
# tightly a fixed-step integrator can pin the crossing state; the slack
# stays far below the gap between the delta- and r-spheres.
SURFACE_TOL = 1e-3


def switching_step(state: EstimatorState, cfg: EstimatorConfig,
                   x: PartitionedState, t: float,
                   ball: Optional[int] = None) -> tuple:
    """Apply one supervisor transition at a localized boundary crossing.

    Turning a ball on (state reached the inner delta-sphere) updates its
    continuity correction from the theta_P values stored at the previous
    deactivation, so theta_hat is continuous across the dead interval;
    turning it off (outer sphere) stores those values.  Returns the
    updated state and the index of the active ball (None while steering).
    """
    atlas = cfg.atlas
    if atlas is None:
        raise ValueError("switching_step requires an atlas configuration")
    candidates = range(len(atlas.balls)) if ball is None else [ball]
    for j in candidates:
        b = atlas.balls[j]
        dist = b.distance(x)
        scale = 1.0 + b.radius
        if state.sigma[j] == 0 and abs(dist - b.delta) <= SURFACE_TOL * scale:
            other = state.active_ball()
            if other is not None:
                raise AtlasFault(
                    f"ball {j} activating while ball {other} is active at t={t}"
                )
            tp_now = theta_P(b.parametrization, cfg.err, x, t)
            if state.has_off_record[j]:
                state.C[j] = state.last_off_theta_P[j] - tp_now + state.C[j]
            state.sigma[j] = 1
            return state, j
        if state.sigma[j] == 1 and abs(dist - b.radius) <= SURFACE_TOL * scale:
            tp_now = theta_P(b.parametrization, cfg.err, x, t)
            state.last_on_theta_hat = cfg.Gamma @ (tp_now + state.theta_I + state.C[j])
            state.last_off_theta_P[j] = tp_now
            state.has_off_record[j] = True
            state.sigma[j] = 0
            return state, None
    raise AtlasFault(f"no switching surface matches the state at t={t}")


def initial_sigma(atlas: LocalMonotoneAtlas, x0: PartitionedState) -> np.ndarray:
    """Activation pattern at t=0: on iff inside a ball's delta-sphere."""
    sigma = np.zeros(len(atlas.balls), dtype=int)
    for j, b in enumerate(atlas.balls):
        if b.distance(x0) <= b.delta:
            sigma[j] = 1
    if sigma.sum() > 1:
        raise AtlasFault("initial state inside several activation spheres")
    return sigma


def steering_u1(err: ErrorFunctional, x: PartitionedState, t: float = 0.0) -> float:
    """Sliding-style steering law of the sine example: -x2 - psi - sign(psi).

    sign(0) is taken as 0.  Plant-specific steering laws live with their
    plants; this is the double-integrator instance.
    """
    psi = err.psi(x, t)
    return float(-x.x2[0] - psi - np.sign(psi))
