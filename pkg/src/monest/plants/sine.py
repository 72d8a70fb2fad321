"""Double-integrator plant with a sine nonlinearity in the parameter.

    dx1/dt = x2
    dx2/dt = sin(theta x1) + u,   theta in [0.6, 1.4] unknown

Monotonicity of sin(theta x1) in theta holds only on slabs of x1, so the
plant ships a two-ball atlas with hysteretic switching between a sliding
steering law and the certainty-equivalence identification law.  This is
the primary desk vehicle for the transient bounds, the exponential
envelope, excitation diagnostics, and the switching supervisor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import estimator as est
from ..core import (
    Box,
    ErrorFunctional,
    LocalMonotoneAtlas,
    MonotoneBall,
    MonotoneParametrization,
    PartitionedState,
    PlantModel,
    RealizabilityPair,
    linear_phi,
)
from ..ode import EventSpec, VectorField, integrate

__all__ = [
    "THETA_BOX",
    "X1_STAR",
    "BALL_INTERVALS",
    "SineScenario",
    "SineRun",
    "build_sine_scenario",
    "sine_plant",
    "sine_parametrization",
]

THETA_BOX = Box([0.6], [1.4])
X1_STAR = -2.985
# Monotonicity slabs in x1; the middle chart printed alongside them is a
# degenerate interval and is not shipped (see the decisions ledger).
BALL_INTERVALS = ((-3.38, -2.59), (2.59, 3.38))
# Activation radius as a fraction of the chart half-width.
DELTA_FRACTION = 0.25


def sine_plant(theta_true: float) -> PlantModel:
    return PlantModel(
        f1=lambda x: np.array([x.x2[0]]),
        f2=lambda x, th: np.array([math.sin(float(np.atleast_1d(th)[0]) * x.x1[0])]),
        g1=lambda x: np.array([0.0]),
        g2=lambda x: np.array([1.0]),
        df2_dtheta=lambda x, th: np.array(
            [[x.x1[0] * math.cos(float(np.atleast_1d(th)[0]) * x.x1[0])]]
        ),
        theta_true=[theta_true],
        theta_domain=THETA_BOX,
        m1=1,
        m2=1,
    )


@dataclass(frozen=True)
class SetPoint:
    """Identification set-point x1*(t) with optional dither and hops.

    The sinusoidal dither enriches excitation near convergence; the hops
    move the target far enough that the state leaves the active ball on
    purpose, exercising the switching supervisor.  Hops are smooth-ramped:
    the deviation functional must stay C^1 in time or the finite-form
    output would be kicked discontinuously.
    """

    base: float = X1_STAR
    dither_amp: float = 0.0
    dither_freq: float = 2.0
    hop_amp: float = 0.0
    hop_period: float = 6.0
    hop_ramp: float = 1.0

    def _hop(self, t: float):
        """Smoothstep square-ish wave and its time derivative."""
        ph = t % (2.0 * self.hop_period)
        if ph < self.hop_ramp:  # falling edge at the start of the even half
            s = ph / self.hop_ramp
            return self.hop_amp * (1.0 - s * s * (3.0 - 2.0 * s)), \
                -self.hop_amp * 6.0 * s * (1.0 - s) / self.hop_ramp
        if self.hop_period <= ph < self.hop_period + self.hop_ramp:
            s = (ph - self.hop_period) / self.hop_ramp
            return self.hop_amp * s * s * (3.0 - 2.0 * s), \
                self.hop_amp * 6.0 * s * (1.0 - s) / self.hop_ramp
        if ph >= self.hop_period:
            return self.hop_amp, 0.0
        return 0.0, 0.0

    def value(self, t: float) -> float:
        out = self.base
        if self.dither_amp:
            out += self.dither_amp * math.sin(self.dither_freq * t)
        if self.hop_amp:
            out += self._hop(t)[0]
        return out

    def rate(self, t: float) -> float:
        out = 0.0
        if self.dither_amp:
            out += self.dither_amp * self.dither_freq * math.cos(self.dither_freq * t)
        if self.hop_amp:
            out += self._hop(t)[1]
        return out


def sine_error(setpoint: SetPoint) -> ErrorFunctional:
    return ErrorFunctional(
        psi=lambda x, t: x.x1[0] + x.x2[0] - setpoint.value(t),
        grad_x_psi=lambda x, t: np.array([1.0, 1.0]),
        dpsi_dt=lambda x, t: -setpoint.rate(t),
        lg_psi_floor=0.5,
    )


def sine_parametrization(setpoint: SetPoint, with_psi: bool = True,
                         D1: float = 0.05) -> MonotoneParametrization:
    """The example's parametrization: alpha = -x1, Psi = (x1-x1*)x2 + x2^2/2.

    With alpha independent of x2, Psi = 0 (``with_psi=False``) is an
    equally valid realizability pair with beta = 0; the nonzero printed
    pair yields beta = psi, which is checked numerically rather than
    assumed sign-definite.
    """
    def psi_val(x, t):
        return x.x1[0] + x.x2[0] - setpoint.value(t)

    if with_psi:
        pair = RealizabilityPair(
            Psi=lambda x, t: np.array([(x.x1[0] - setpoint.value(t)) * x.x2[0]
                                       + 0.5 * x.x2[0] ** 2]),
            beta=lambda x, t: np.array([[psi_val(x, t)]]),
            dPsi_dx1=lambda x, t: np.array([[x.x2[0]]]),
            dPsi_dx2=lambda x, t: np.array([[x.x1[0] - setpoint.value(t) + x.x2[0]]]),
            dPsi_dt=lambda x, t: np.array([-setpoint.rate(t) * x.x2[0]]),
            dalpha_dx1=lambda x, t: np.array([[-1.0]]),
            dalpha_dx2=lambda x, t: np.array([[0.0]]),
            dalpha_dt=lambda x, t: np.array([0.0]),
        )
    else:
        zero1 = lambda x, t: np.array([0.0])
        zero11 = lambda x, t: np.array([[0.0]])
        pair = RealizabilityPair(
            Psi=zero1, beta=zero11,
            dPsi_dx1=zero11, dPsi_dx2=zero11, dPsi_dt=zero1,
            dalpha_dx1=lambda x, t: np.array([[-1.0]]),
            dalpha_dx2=zero11, dalpha_dt=zero1,
        )
    return MonotoneParametrization(
        f=lambda x, th, t: x.x2[0] + math.sin(float(np.atleast_1d(th)[0]) * x.x1[0]),
        alpha=lambda x, t: np.array([-x.x1[0]]),
        D=1.0,
        D1=D1,
        realizability=pair,
        df_dtheta=lambda x, th, t: np.array(
            [x.x1[0] * math.cos(float(np.atleast_1d(th)[0]) * x.x1[0])]
        ),
    )


def sine_atlas(setpoint: SetPoint, err: ErrorFunctional,
               with_psi: bool = True) -> LocalMonotoneAtlas:
    p = sine_parametrization(setpoint, with_psi=with_psi)
    balls = []
    for lo, hi in BALL_INTERVALS:
        half = 0.5 * (hi - lo)
        balls.append(MonotoneBall(
            center=np.array([0.5 * (lo + hi), 0.0]),
            radius=half,
            delta=DELTA_FRACTION * half,
            parametrization=p,
            steering_u=lambda x, t: est.steering_u1(err, x, t),
            name=f"x1@{0.5 * (lo + hi):+.3f}",
        ))
    return LocalMonotoneAtlas(tuple(balls))


@dataclass
class SineRun:
    times: np.ndarray
    states: np.ndarray  # columns: x1, x2, theta_I
    columns: dict
    events: list
    switch_log: list  # (t, ball, new_sigma, |theta_hat jump|)
    theta_true: float
    theta_hat0: float
    psi0: float
    Gamma: float
    K: float
    config: dict

    @property
    def theta_hat(self) -> np.ndarray:
        return self.columns["theta_hat"]

    @property
    def final_theta_err(self) -> float:
        return abs(self.columns["theta_hat"][-1] - self.theta_true)


class SineScenario:
    """Closed loop of plant, atlas estimator and switching supervisor."""

    def __init__(self, theta_true, x0, tf, h, K, Gamma, theta_hat0,
                 setpoint: SetPoint, with_psi: bool = True):
        if not THETA_BOX.contains([theta_true]):
            raise ValueError(f"theta_true={theta_true} outside the admissible box")
        self.theta_true = float(theta_true)
        self.x0 = np.asarray(x0, dtype=float)
        self.tf = float(tf)
        self.h = float(h)
        self.K = float(K)
        self.Gamma = float(Gamma)
        self.setpoint = setpoint
        self.plant = sine_plant(self.theta_true)
        self.err = sine_error(setpoint)
        self.atlas = sine_atlas(setpoint, self.err, with_psi=with_psi)
        self.cfg = est.EstimatorConfig(
            Gamma=np.array([[self.Gamma]]),
            phi=linear_phi(self.K),
            err=self.err,
            atlas=self.atlas,
        )
        self.theta_hat0 = self.theta_true if theta_hat0 is None else float(theta_hat0)
        self.config = {
            "scenario": "sine", "theta_true": self.theta_true,
            "x0": self.x0.tolist(), "tf": self.tf, "h": self.h,
            "K": self.K, "Gamma": self.Gamma, "theta_hat0": self.theta_hat0,
            "dither_amp": setpoint.dither_amp, "dither_freq": setpoint.dither_freq,
            "hop_amp": setpoint.hop_amp, "hop_period": setpoint.hop_period,
            "with_psi": with_psi,
        }

    # -- finite-form plumbing -------------------------------------------------

    def _split(self, y) -> PartitionedState:
        return PartitionedState(y[0:1], y[1:2])

    def _nearest_ball(self, x: PartitionedState) -> int:
        d = [b.distance(x) for b in self.atlas.balls]
        return int(np.argmin(d))

    def _display_theta_hat(self, state, x, t) -> float:
        # Before the first activation the gated output has no held value;
        # show the ungated finite form of the nearest chart so the first
        # activation is seamless.
        if state.active_ball() is None and state.last_on_theta_hat is None:
            p = self.atlas.balls[self._nearest_ball(x)].parametrization
            return float((self.cfg.Gamma @ (est.theta_P(p, self.err, x, t)
                                            + state.theta_I))[0])
        return float(est.theta_hat(state, self.cfg, x, t)[0])

    def _control(self, state, x, t):
        j = state.active_ball()
        if j is None:
            jn = self._nearest_ball(x)
            return self.atlas.balls[jn].steering_u(x, t), None
        th = est.theta_hat(state, self.cfg, x, t)
        return est.control_u(self.plant, self.err, self.cfg.phi, th, x, t), j

    def run(self, record_stride: int = 1) -> SineRun:
        state = est.EstimatorState.fresh(np.zeros(1), n_balls=len(self.atlas))
        x_init = self._split(self.x0)
        state.sigma = est.initial_sigma(self.atlas, x_init)
        # Choose theta_I(0) so the displayed estimate starts at theta_hat0.
        j0 = state.active_ball()
        p0 = self.atlas.balls[j0 if j0 is not None else self._nearest_ball(x_init)] \
            .parametrization
        state.theta_I = np.array([self.theta_hat0 / self.Gamma]) \
            - est.theta_P(p0, self.err, x_init, 0.0)

        def rhs(t, y):
            state.theta_I = y[2:3]  # integral state lives in the ODE vector
            x = self._split(y)
            u, j = self._control(state, x, t)
            dx1 = y[1]
            dx2 = math.sin(self.theta_true * y[0]) + u
            dthI = est.theta_I_rhs(state, self.cfg, self.plant, x, t, u)
            return np.array([dx1, dx2, dthI[0]])

        field = VectorField(3, rhs)

        events = []
        for jj, b in enumerate(self.atlas.balls):
            def dist_to(y, c=b.center):
                return math.hypot(y[0] - c[0], y[1] - c[1])
            events.append(EventSpec(
                guard=lambda t, y, b=b, f=dist_to: f(y) - b.delta,
                direction="falling", action="toggle", name=f"ball{jj}:delta"))
            events.append(EventSpec(
                guard=lambda t, y, b=b, f=dist_to: f(y) - b.radius,
                direction="rising", action="toggle", name=f"ball{jj}:r"))

        switch_log = []

        def on_event(name, t, y):
            state.theta_I = y[2:3].copy()
            jj = int(name.split(":")[0].removeprefix("ball"))
            surface = name.split(":")[1]
            x = self._split(y)
            if surface == "delta" and state.sigma[jj] == 0:
                before = self._display_theta_hat(state, x, t)
                est.switching_step(state, self.cfg, x, t, ball=jj)
                after = self._display_theta_hat(state, x, t)
                switch_log.append((t, jj, 1, abs(after - before)))
            elif surface == "r" and state.sigma[jj] == 1:
                before = self._display_theta_hat(state, x, t)
                est.switching_step(state, self.cfg, x, t, ball=jj)
                after = self._display_theta_hat(state, x, t)
                switch_log.append((t, jj, 0, abs(after - before)))

        cols = {k: [] for k in ("psi", "theta_hat", "u", "sigma", "active_ball",
                                "alpha", "x1_star", "psi_dot", "V")}

        def observer(t, y):
            state.theta_I = y[2:3].copy()
            x = self._split(y)
            u, j = self._control(state, x, t)
            th = self._display_theta_hat(state, x, t)
            psi = self.err.psi(x, t)
            psi_dot = y[1] + math.sin(self.theta_true * y[0]) + u - self.setpoint.rate(t)
            cols["psi"].append(psi)
            cols["theta_hat"].append(th)
            cols["u"].append(u)
            cols["sigma"].append(1.0 if j is not None else 0.0)
            cols["active_ball"].append(float(j) if j is not None else -1.0)
            cols["alpha"].append(-y[0])
            cols["x1_star"].append(self.setpoint.value(t))
            cols["psi_dot"].append(psi_dot)
            cols["V"].append((th - self.theta_true) ** 2 / self.Gamma)

        traj = integrate(field, np.append(self.x0, state.theta_I), 0.0, self.tf,
                         self.h, events=events, on_event=on_event,
                         observer=observer, record_stride=record_stride)

        return SineRun(
            times=traj.times,
            states=traj.samples,
            columns={k: np.asarray(v) for k, v in cols.items()},
            events=traj.events,
            switch_log=switch_log,
            theta_true=self.theta_true,
            theta_hat0=self.theta_hat0,
            psi0=float(cols["psi"][0]) if cols["psi"] else 0.0,
            Gamma=self.Gamma,
            K=self.K,
            config=self.config,
        )


def build_sine_scenario(
    theta_true: float,
    x0=(X1_STAR, 0.0),
    tf: float = 50.0,
    h: float = 1e-3,
    K: float = 1.0,
    Gamma: float = 1.0,
    theta_hat0: Optional[float] = None,
    dither_amp: float = 0.0,
    dither_freq: float = 2.0,
    hop_amp: float = 0.0,
    hop_period: float = 6.0,
    hop_ramp: float = 1.0,
    with_psi: bool = True,
) -> SineScenario:
    """Wire the complete closed-loop scenario for the sine plant.

    ``theta_hat0`` defaults to the true value (matched start); pass an
    offset value to exercise adaptation.  ``dither_*`` superimpose a
    smooth wiggle on the set-point, ``hop_*`` a square wave that forces
    steering excursions.
    """
    setpoint = SetPoint(base=X1_STAR, dither_amp=dither_amp, dither_freq=dither_freq,
                        hop_amp=hop_amp, hop_period=hop_period, hop_ramp=hop_ramp)
    return SineScenario(theta_true, x0, tf, h, K, Gamma, theta_hat0,
                        setpoint, with_psi=with_psi)
