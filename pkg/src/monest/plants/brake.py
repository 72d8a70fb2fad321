"""Single braking wheel with steady-state LuGre tire friction.

    dx1/dt = -F_s / m                     x1: longitudinal velocity [m/s]
    dx2/dt = (F_s r - u) / J              x2: wheel angular velocity [rad/s]
    dx3/dt = -(1/x1)(A(x3) F_s - (r/J) u) x3: wheel slip

with A(x3) = (1-x3)/m + r^2/J and the friction force linear in the
road-condition parameter theta.  A slip observer provides the scalar
error x3 - x3_hat, a high-gain tracker xi substitutes for the regressor
alpha(x, t) (whose x-partials would otherwise obstruct realizability),
and the finite-form estimator

    theta_hat = -gamma ((x3 - x3_hat) xi + theta_I),
    d theta_I / dt = (x3 - x3_hat)(xi - dxi/dt)

feeds a certainty-equivalence torque controller that regulates the slip
to the force-maximizing value.  Runs stop when x1 drops to 5 m/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..estimator import GuardFault
from ..ode import EventSpec, VectorField, integrate

__all__ = [
    "BrakeParams",
    "RoadProfile",
    "BrakeState",
    "BrakeGains",
    "BrakeRun",
    "REFERENCE_PROFILE",
    "lugre_force",
    "optimal_slip",
    "brake_rhs",
    "xi_rhs",
    "alpha_regressor",
    "domination_bound",
    "build_brake_scenario",
    "brake_experiment",
]

# Velocity at which the run is stopped to avoid the 1/x1 singularity.
V_STOP = 5.0
# Initial longitudinal velocity.  The source material reports braking
# distances but not initial conditions; this value was calibrated offline
# (grid scan, see README) so the two fixed-slip baselines land on the
# reported 57.52 m / 55.32 m marks.
X1_INITIAL = 31.3
# Slip window used whenever the friction curve is probed or the integrator
# transiently steps outside the physical range.
SLIP_FLOOR, SLIP_CEIL = 1e-6, 0.999
# theta window for evaluating the friction model with an estimate that the
# (projection-free) estimator may push outside the physical range.
THETA_EVAL_MIN, THETA_EVAL_MAX = 0.05, 2.0


@dataclass(frozen=True)
class BrakeParams:
    """Wheel, tire and load constants of the braking example."""

    sigma0: float = 200.0  # normalized longitudinal stiffness [1/m]
    L: float = 0.25        # contact patch length [m]
    muC: float = 0.5       # Coulomb friction coefficient
    muS: float = 0.9       # static friction coefficient
    vs: float = 12.5       # Stribeck velocity [m/s]
    r: float = 0.3         # wheel radius [m]
    m: float = 200.0       # mass [kg]
    J: float = 0.23        # wheel inertia [kg m^2]
    Fn: float = 3000.0     # normal load [N]
    Ks: float = 30.0       # slip-tracking gain

    def __post_init__(self):
        vals = (self.sigma0, self.L, self.muC, self.muS, self.vs,
                self.r, self.m, self.J, self.Fn, self.Ks)
        if any(v <= 0.0 for v in vals):
            raise ValueError("all brake parameters must be positive")
        if self.muS < self.muC:
            raise ValueError("require muS >= muC")

    @property
    def patch_stiffness(self) -> float:
        # Dimensionless rubber/patch stiffness sigma0 * L.  Read as the
        # product, not the printed quotient: only the product reproduces
        # the reported fixed-slip baseline ordering (see decisions ledger).
        return self.sigma0 * self.L

    @property
    def A_coef(self) -> float:
        return self.r * self.r / self.J


@dataclass(frozen=True)
class RoadProfile:
    """Piecewise-constant road parameter theta(s) over traveled distance.

    ``segments`` is a sequence of (s_end, theta) pairs with strictly
    increasing s_end; the final segment may use None (open-ended).
    """

    segments: tuple

    def __post_init__(self):
        segs = tuple((None if e is None else float(e), float(th))
                     for e, th in self.segments)
        object.__setattr__(self, "segments", segs)
        ends = [e for e, _ in segs[:-1]]
        if any(e is None for e in ends) or segs[-1][0] is not None:
            raise ValueError("only the last segment may be open-ended")
        if any(b <= a for a, b in zip(ends, ends[1:])) or (ends and ends[0] <= 0):
            raise ValueError("segment ends must be strictly increasing and positive")
        if any(not (0.0 < th <= 2.0) for _, th in segs):
            raise ValueError("theta values must lie in (0, 2]")

    def segment_index(self, s: float) -> int:
        for i, (end, _) in enumerate(self.segments):
            if end is None or s <= end:
                return i
        return len(self.segments) - 1

    def theta_at(self, s: float) -> float:
        return self.segments[self.segment_index(s)][1]

    @staticmethod
    def from_json(data) -> "RoadProfile":
        segs = []
        for item in data:
            if set(item) - {"s_end", "theta"}:
                raise ValueError(f"unknown road profile keys: {sorted(set(item) - {'s_end', 'theta'})}")
            segs.append((item.get("s_end"), item["theta"]))
        return RoadProfile(tuple(segs))


REFERENCE_PROFILE = RoadProfile((
    (8.0, 0.3), (16.0, 1.3), (24.0, 0.7), (32.0, 0.4), (40.0, 1.5), (None, 0.6),
))


@dataclass
class BrakeState:
    """Full extended state of the braking loop."""

    x1: float       # longitudinal velocity [m/s]
    x2: float       # angular velocity [rad/s]
    x3: float       # slip
    x3_hat: float   # slip observer state
    xi: float       # regressor tracker state
    theta_I: float  # estimator integral state
    s: float        # traveled distance [m]

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x3_hat,
                         self.xi, self.theta_I, self.s])

    @staticmethod
    def from_array(y) -> "BrakeState":
        return BrakeState(*map(float, y))


def _stribeck(x2: float, x3: float, p: BrakeParams) -> float:
    """Velocity-weakening factor muC + (muS - muC) exp(-|r x2 x3| / (|1-x3| vs))."""
    return p.muC + (p.muS - p.muC) * math.exp(
        -abs(p.r * x2 * x3) / (abs(1.0 - x3) * p.vs))


def _lugre(Fn: float, x2: float, x3: float, theta: float, p: BrakeParams) -> float:
    c = p.patch_stiffness
    z = x3 / (1.0 - x3)
    g = theta * _stribeck(x2, x3, p)
    sign = 0.0 if x2 == 0.0 else math.copysign(1.0, x2)
    return Fn * sign * (c * g * z) / (c * z + g)


def lugre_force(Fn: float, x: BrakeState, theta: float, p: BrakeParams) -> float:
    """Steady-state LuGre tire/road force at the current state.

    Vanishes as the slip goes to zero, flips sign with the wheel spin
    direction, and is strictly increasing in the road parameter theta.
    """
    if not (0.0 < x.x3 < 1.0):
        raise GuardFault("slip outside (0, 1)", x=x, value=x.x3)
    return _lugre(Fn, x.x2, x.x3, theta, p)


def _force_at_slip(theta: float, x1: float, x3: float, p: BrakeParams) -> float:
    # Probe force with the wheel speed kinematically consistent with the
    # probe slip: x2 = x1 (1 - x3) / r.
    return _lugre(p.Fn, x1 * (1.0 - x3) / p.r, x3, theta, p)


def _slip_stationarity(theta: float, x1: float, x3: float, p: BrakeParams):
    """H(x3) = c z^2 g' + g^2 z' and H'(x3); H = 0 at interior force maxima."""
    c = p.patch_stiffness
    dmu = p.muS - p.muC
    e_coef = x1 / p.vs  # exponent rate with the kinematic tie
    ex = math.exp(-e_coef * x3)
    g = theta * (p.muC + dmu * ex)
    g1 = -theta * dmu * ex * e_coef
    g2 = theta * dmu * ex * e_coef * e_coef
    one = 1.0 - x3
    z = x3 / one
    z1 = 1.0 / (one * one)
    z2 = 2.0 / (one * one * one)
    H = c * z * z * g1 + g * g * z1
    dH = c * (2.0 * z * z1 * g1 + z * z * g2) + 2.0 * g * g1 * z1 + g * g * z2
    return H, dH


def _golden_max(fun, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def optimal_slip(theta: float, x1: float, p: BrakeParams, tol: float = 1e-6,
                 guess: Optional[float] = None) -> float:
    """Slip maximizing the braking force at the current operating point.

    Without a warm start: coarse bracket scan plus golden-section
    refinement (a dense-grid rescan backs up a failed bracket); with a
    ``guess``, a safeguarded Newton iteration on the stationarity
    condition, which keeps the map smooth along a closed-loop run.
    Monotone force profiles return the boundary of the probe interval.
    """
    if not (0.0 < theta <= 2.0):
        raise GuardFault("theta outside (0, 2]", value=theta)

    def F(x3):
        return _force_at_slip(theta, x1, x3, p)

    lo, hi = 1e-4, SLIP_CEIL
    if guess is not None and lo < guess < hi:
        # Newton is iterated to machine accuracy: the in-loop slip target
        # must be a path-independent smooth function of (theta, x1), or the
        # warm-start hysteresis shows up as noise in derivative checks.
        x3 = guess
        for _ in range(12):
            H, dH = _slip_stationarity(theta, x1, x3, p)
            if dH >= 0.0:
                break
            step = H / dH
            x3_new = x3 - step
            if not (lo < x3_new < hi):
                break
            x3 = x3_new
            if abs(step) < 1e-13 * max(1.0, x3):
                return x3
        # fall through to the bracketing path on failure

    n = 64
    xs = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    vals = [F(x) for x in xs]
    i = max(range(n), key=vals.__getitem__)
    if i == 0 or i == n - 1:
        # No interior bracket: rescan densely, then accept a boundary
        # point if the profile is monotone over the whole interval.
        xs = [lo + (hi - lo) * k / 999 for k in range(1000)]
        vals = [F(x) for x in xs]
        i = max(range(1000), key=vals.__getitem__)
        if i == 0 or i == 999:
            return xs[i]
        return _golden_max(F, xs[i - 1], xs[i + 1], tol)
    return _golden_max(F, xs[i - 1], xs[i + 1], tol)


def alpha_regressor(x1: float, x2: float, x3: float, p: BrakeParams) -> float:
    """Regressor alpha = (1/x1)((1-x3)/m + r^2/J) g(x2, x3, 1)."""
    A = (1.0 - x3) / p.m + p.A_coef
    return A * _stribeck(x2, x3, p) / x1


def _alpha_partials(x1: float, x2: float, x3: float, p: BrakeParams):
    """alpha and its partial derivatives w.r.t. x1, x2, x3."""
    dmu = p.muS - p.muC
    one = 1.0 - x3
    E = p.r * x2 * x3 / (one * p.vs)
    ex = math.exp(-abs(E))
    g1v = p.muC + dmu * ex
    A = one / p.m + p.A_coef
    alpha = A * g1v / x1
    dg_dx2 = -dmu * ex * p.r * x3 / (one * p.vs)
    dg_dx3 = -dmu * ex * p.r * x2 / (one * one * p.vs)
    da_dx1 = -alpha / x1
    da_dx2 = A * dg_dx2 / x1
    da_dx3 = (-g1v / p.m + A * dg_dx3) / x1
    return alpha, da_dx1, da_dx2, da_dx3


@dataclass(frozen=True)
class BrakeGains:
    """Estimator and tracker gains of the braking loop."""

    gamma: float = 100.0
    K_xi: float = 10.0
    eps0: float = 0.001


def xi_rhs(state: BrakeState, u: float, p: BrakeParams, gains: BrakeGains) -> float:
    """High-gain tracker for the regressor signal alpha(x(t), t).

    Propagates the theta-free part of d alpha/dt exactly and dominates the
    friction-dependent remainder with a saturated injection.  The boundary
    layer spans 2 eps0 so that, with the default gain of twice the sampled
    domination bound, the injection reaches the bound exactly at the
    prescribed error eps0 while the inner-loop rate K_xi / (2 eps0) stays
    inside the fixed-step stability region at the default step.
    """
    alpha, _, da_dx2, da_dx3 = _alpha_partials(state.x1, state.x2, state.x3, p)
    e = state.xi - alpha
    sat = max(-1.0, min(1.0, e / (2.0 * gains.eps0)))
    return (-da_dx2 * u / p.J
            + da_dx3 * (p.r / p.J) * u / state.x1
            - gains.K_xi * sat)


@lru_cache(maxsize=8)
def domination_bound(p: BrakeParams, x1_range=(5.0, 40.0), x2_range=(1.0, 100.0),
                     x3_range=(0.01, 0.4), theta_range=(0.05, 2.0),
                     n_per_axis: int = 12) -> float:
    """Largest magnitude of the friction-dependent part of d alpha/dt.

    Sampled over the operational box; the slip axis is capped (closed-loop
    slips stay well below it) because the expression diverges as slip
    approaches 1.
    """
    worst = 0.0
    grid = lambda lo, hi: [lo + (hi - lo) * i / (n_per_axis - 1) for i in range(n_per_axis)]
    for x1 in grid(*x1_range):
        for x2 in grid(*x2_range):
            for x3 in grid(*x3_range):
                _, da1, da2, da3 = _alpha_partials(x1, x2, x3, p)
                A = (1.0 - x3) / p.m + p.A_coef
                for th in grid(*theta_range):
                    F = _lugre(p.Fn, x2, x3, th, p)
                    val = abs((-da1 / p.m + da2 * p.r / p.J - da3 * A / x1) * F)
                    worst = max(worst, val)
    return worst


def _clip_theta(th: float) -> float:
    return max(THETA_EVAL_MIN, min(THETA_EVAL_MAX, th))


def _clip_slip(x3: float) -> float:
    return max(SLIP_FLOOR, min(SLIP_CEIL, x3))


def brake_rhs(state: BrakeState, u: float, theta_road: float, p: BrakeParams,
              gains: BrakeGains, theta_hat: float) -> np.ndarray:
    """Extended derivative: wheel dynamics, observer, tracker, estimator.

    The friction evaluations clamp the slip into (0, 1); transient
    integrator excursions of a few ULP past zero would otherwise flip the
    force sign.
    """
    if state.x1 < V_STOP - 1.0:
        raise GuardFault("velocity below the stop threshold", x=state, value=state.x1)
    x3c = _clip_slip(state.x3)
    F_true = _lugre(p.Fn, state.x2, x3c, theta_road, p)
    F_hat = _lugre(p.Fn, state.x2, x3c, _clip_theta(theta_hat), p)
    A = (1.0 - x3c) / p.m + p.A_coef
    psi = state.x3 - state.x3_hat
    dx1 = -F_true / p.m
    dx2 = (F_true * p.r - u) / p.J
    dx3 = -(A * F_true - (p.r / p.J) * u) / state.x1
    dx3_hat = -(A * F_hat - (p.r / p.J) * u) / state.x1 + psi
    dxi = xi_rhs(state, u, p, gains)
    dtheta_I = psi * (state.xi - dxi)
    return np.array([dx1, dx2, dx3, dx3_hat, dxi, dtheta_I, state.x1])


def control_torque(state: BrakeState, x3_star: float, F_ff: float,
                   p: BrakeParams) -> float:
    """Brake torque regulating the slip to x3_star.

    ``F_ff`` is the feedforward friction force: either the measured one
    (available on a vehicle as -m times the longitudinal deceleration) or
    the certainty-equivalence value F_s(Fn, x, theta_hat).  The slip
    regulation gain term is the same either way.
    """
    x3c = _clip_slip(state.x3)
    A = (1.0 - x3c) / p.m + p.A_coef
    return (p.J / p.r) * (A * F_ff - p.Ks * state.x1 * (state.x3 - x3_star))


@dataclass
class BrakeRun:
    times: np.ndarray
    states: np.ndarray
    columns: dict
    distance: float
    diverged: bool
    config: dict

    def theta_hat(self) -> np.ndarray:
        return self.columns["theta_hat"]


class BrakeScenario:
    """Braking experiment: adaptive or fixed-slip target, shared estimator.

    ``feedforward`` selects the torque feedforward force: "measured"
    (deceleration-derived, the default, which keeps the slip loop decoupled
    from estimation transients) or "estimate" (certainty-equivalence
    F_s(Fn, x, theta_hat); road steps then collapse the slip while the
    estimate re-converges, see the decisions ledger).
    """

    def __init__(self, profile: RoadProfile, mode, p: BrakeParams, gains: BrakeGains,
                 x1_0: float, x3_0: float, theta_I0: float, h: float, tf_max: float,
                 feedforward: str = "measured"):
        if feedforward not in ("measured", "estimate"):
            raise ValueError(f"unknown feedforward mode {feedforward!r}")
        self.feedforward = feedforward
        self.profile = profile
        self.mode = mode  # "adaptive" or a fixed slip target (float)
        self.p = p
        self.gains = gains
        self.h = float(h)
        self.tf_max = float(tf_max)
        x2_0 = x1_0 / p.r  # zero-slip kinematics
        alpha0 = alpha_regressor(x1_0, x2_0, x3_0, p)
        self.state0 = BrakeState(x1=x1_0, x2=x2_0, x3=x3_0, x3_hat=x3_0,
                                 xi=alpha0, theta_I=theta_I0, s=0.0)
        self.config = {
            "scenario": "brake",
            "mode": "adaptive" if mode == "adaptive" else f"fixed:{float(mode)}",
            "x1_0": x1_0, "x3_0": x3_0, "theta_I0": theta_I0,
            "h": self.h, "tf_max": self.tf_max, "feedforward": feedforward,
            "gamma": gains.gamma, "K_xi": gains.K_xi, "eps0": gains.eps0,
            "profile": [{"s_end": e, "theta": th} for e, th in profile.segments],
        }

    def theta_hat_of(self, st: BrakeState) -> float:
        return -self.gains.gamma * ((st.x3 - st.x3_hat) * st.xi + st.theta_I)

    def run(self, record_stride: int = 1) -> BrakeRun:
        p, gains, profile = self.p, self.gains, self.profile
        slip_guess = [None]

        def x3_star_of(st: BrakeState, theta_hat: float) -> float:
            if self.mode != "adaptive":
                return float(self.mode)
            target = optimal_slip(_clip_theta(theta_hat), st.x1, p,
                                  guess=slip_guess[0])
            slip_guess[0] = target
            return target

        def torque(st: BrakeState, th: float, x3s: float, theta_road: float) -> float:
            if self.feedforward == "measured":
                F_ff = _lugre(p.Fn, st.x2, _clip_slip(st.x3), theta_road, p)
            else:
                F_ff = _lugre(p.Fn, st.x2, _clip_slip(st.x3), _clip_theta(th), p)
            return control_torque(st, x3s, F_ff, p)

        def rhs(t, y):
            st = BrakeState.from_array(y)
            th = self.theta_hat_of(st)
            x3s = x3_star_of(st, th)
            theta_road = profile.theta_at(st.s)
            u = torque(st, th, x3s, theta_road)
            return brake_rhs(st, u, theta_road, p, gains, th)

        field = VectorField(7, rhs)
        stop = EventSpec(guard=lambda t, y: y[0] - V_STOP,
                         direction="falling", action="stop", name="v_stop")

        cols = {k: [] for k in ("theta_road", "theta_hat", "psi", "u", "Fs",
                                "x3_star", "alpha", "xi_err", "psi_dot",
                                "segment", "s", "V")}
        diverged = [False]

        def observer(t, y):
            st = BrakeState.from_array(y)
            th = self.theta_hat_of(st)
            x3s = x3_star_of(st, th)
            theta_road = profile.theta_at(st.s)
            u = torque(st, th, x3s, theta_road)
            x3c = _clip_slip(st.x3)
            F_true = _lugre(p.Fn, st.x2, x3c, theta_road, p)
            F_hat = _lugre(p.Fn, st.x2, x3c, _clip_theta(th), p)
            A = (1.0 - x3c) / p.m + p.A_coef
            psi = st.x3 - st.x3_hat
            alpha = alpha_regressor(st.x1, st.x2, x3c, p)
            if th < -0.5 or th > 2.5:
                diverged[0] = True
            cols["theta_road"].append(theta_road)
            cols["theta_hat"].append(th)
            cols["psi"].append(psi)
            cols["u"].append(u)
            cols["Fs"].append(F_true)
            cols["x3_star"].append(x3s)
            cols["alpha"].append(alpha)
            cols["xi_err"].append(st.xi - alpha)
            cols["psi_dot"].append(-psi - A * (F_true - F_hat) / st.x1)
            cols["segment"].append(float(profile.segment_index(st.s)))
            cols["s"].append(st.s)
            cols["V"].append((th - theta_road) ** 2 / gains.gamma)

        traj = integrate(field, self.state0.as_array(), 0.0, self.tf_max, self.h,
                         events=[stop], observer=observer,
                         record_stride=record_stride)
        return BrakeRun(
            times=traj.times,
            states=traj.samples,
            columns={k: np.asarray(v) for k, v in cols.items()},
            distance=float(traj.samples[-1, 6]),
            diverged=diverged[0],
            config=self.config,
        )


def build_brake_scenario(
    profile: RoadProfile = REFERENCE_PROFILE,
    mode="adaptive",
    p: BrakeParams = BrakeParams(),
    x1_0: float = X1_INITIAL,
    x3_0: float = 0.02,
    theta_I0: float = 0.0,
    gamma: float = 100.0,
    K_xi: Optional[float] = None,
    eps0: float = 0.001,
    h: float = 1e-4,
    tf_max: float = 60.0,
    feedforward: str = "measured",
) -> BrakeScenario:
    """Wire a braking experiment.

    ``mode`` is "adaptive" (slip target recomputed from the estimate every
    step) or a number (fixed slip target; the estimator still runs, since
    the torque feedforward needs it).  ``K_xi`` defaults to twice the
    sampled domination bound of the tracker's disturbance term.
    """
    if x1_0 <= V_STOP:
        raise ValueError("initial velocity must exceed the stop threshold")
    if mode != "adaptive":
        mode = float(mode)
        if not (0.0 < mode < 1.0):
            raise ValueError("fixed slip target must lie in (0, 1)")
    if K_xi is None:
        K_xi = 2.0 * domination_bound(p)
    gains = BrakeGains(gamma=gamma, K_xi=K_xi, eps0=eps0)
    return BrakeScenario(profile, mode, p, gains, x1_0, x3_0, theta_I0, h, tf_max,
                         feedforward=feedforward)


def brake_experiment(profile: RoadProfile, mode, p: BrakeParams = BrakeParams(),
                     record_stride: int = 1, **kwargs) -> dict:
    """Run one braking experiment and report the traveled distance."""
    scenario = build_brake_scenario(profile=profile, mode=mode, p=p, **kwargs)
    run = scenario.run(record_stride=record_stride)
    return {"distance": run.distance, "run": run, "diverged": run.diverged}
