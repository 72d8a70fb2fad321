"""Plant-class abstractions: partitioned states, error functionals,
monotone parametrizations, and sampled verifiers for their assumptions.

The estimation laws in :mod:`monest.estimator` apply to plants

    dx1/dt = f1(x) + g1(x) u        (uncertainty-independent partition)
    dx2/dt = f2(x, theta) + g2(x) u (uncertainty-dependent partition)

whose scalar transverse nonlinearity f(x, theta, t) is monotone in a
linear functional alpha(x, t)^T theta and sector-bounded by constants
D1 <= D.  Those hypotheses are analytic; here they become executable
contracts checked by dense random + grid sampling, with the witness point
reported on violation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ode import IntegrationFault

__all__ = [
    "Box",
    "PartitionedState",
    "PlantModel",
    "ErrorFunctional",
    "RealizabilityPair",
    "MonotoneParametrization",
    "PhiFunction",
    "linear_phi",
    "MonotoneBall",
    "LocalMonotoneAtlas",
    "MonotonicityReport",
    "check_monotonicity",
    "hadamard_gap",
    "pe_complete_integrand",
    "central_difference",
]

# Step scale for central differences when analytic partials are absent.
FD_STEP = 1e-5
# Inner products below this magnitude are treated as degenerate pairs.
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used for both state domains and parameter sets."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.atleast_1d(np.asarray(self.lows, dtype=float))
        highs = np.atleast_1d(np.asarray(self.highs, dtype=float))
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        if lows.shape != highs.shape or np.any(lows > highs):
            raise ValueError("invalid box bounds")

    @property
    def dim(self) -> int:
        return self.lows.size

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return bool(np.all(v >= self.lows - tol) and np.all(v <= self.highs + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lows, self.highs, size=(n, self.dim))

    def grid(self, points_per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.lows, self.highs)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class PartitionedState:
    """State split into uncertainty-independent x1 and -dependent x2 parts.

    Either partition may be empty (the braking-wheel plant has m1 = 0).
    """

    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x1", np.atleast_1d(np.asarray(self.x1, dtype=float)))
        object.__setattr__(self, "x2", np.atleast_1d(np.asarray(self.x2, dtype=float)))

    @property
    def m1(self) -> int:
        return self.x1.size

    @property
    def m2(self) -> int:
        return self.x2.size

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.x1, self.x2])

    @staticmethod
    def split(x: np.ndarray, m1: int) -> "PartitionedState":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return PartitionedState(x[:m1], x[m1:])


class PlantModel:
    """Evaluators for the partitioned plant plus the hidden true parameter.

    The true parameter vector is intentionally kept behind
    :meth:`true_theta`; simulators and diagnostic monitors may call it,
    estimator code must not.
    """

    def __init__(self, f1, f2, g1, g2, theta_true, theta_domain: Box,
                 m1: int, m2: int, df2_dtheta=None):
        self.f1 = f1  # (x) -> (m1,)
        self.f2 = f2  # (x, theta) -> (m2,)
        self.g1 = g1  # (x) -> (m1,)
        self.g2 = g2  # (x) -> (m2,)
        self.m1 = m1
        self.m2 = m2
        self.theta_domain = theta_domain
        self.df2_dtheta = df2_dtheta  # optional analytic (x, theta) -> (m2, d)
        theta_true = np.atleast_1d(np.asarray(theta_true, dtype=float))
        if not theta_domain.contains(theta_true):
            raise ValueError("theta_true outside its declared domain")
        self._theta_true = theta_true

    @property
    def d(self) -> int:
        return self._theta_true.size

    def true_theta(self) -> np.ndarray:
        """Sealed accessor: simulation and diagnostics only."""
        return self._theta_true.copy()

    def f(self, x: PartitionedState, theta, u: float) -> np.ndarray:
        """Full drift + input field over the concatenated state."""
        return np.concatenate([
            self.f1(x) + self.g1(x) * u,
            self.f2(x, theta) + self.g2(x) * u,
        ])


@dataclass(frozen=True)
class ErrorFunctional:
    """Scalar deviation psi(x, t) from the target manifold psi = 0.

    ``lg_psi_floor`` is the assumed positive lower bound on |L_g psi|;
    control synthesis aborts with a witness when it is violated.
    """

    psi: Callable[[PartitionedState, float], float]
    grad_x_psi: Callable[[PartitionedState, float], np.ndarray]  # (n,)
    dpsi_dt: Callable[[PartitionedState, float], float]
    lg_psi_floor: float = 1e-9


@dataclass(frozen=True)
class RealizabilityPair:
    """Functions (Psi, beta) making the finite-form update implementable.

    They must satisfy  dPsi/dx2 - psi * dalpha/dx2 = beta  pointwise.  All
    partials are supplied analytically by the shipped plants; pass None to
    fall back to central differences of Psi and alpha.
    """

    Psi: Callable[[PartitionedState, float], np.ndarray]  # (d,)
    beta: Callable[[PartitionedState, float], np.ndarray]  # (d, m2)
    dPsi_dx1: Optional[Callable] = None  # (d, m1)
    dPsi_dx2: Optional[Callable] = None  # (d, m2)
    dPsi_dt: Optional[Callable] = None  # (d,)
    dalpha_dx1: Optional[Callable] = None  # (d, m1)
    dalpha_dx2: Optional[Callable] = None  # (d, m2)
    dalpha_dt: Optional[Callable] = None  # (d,)


@dataclass(frozen=True)
class MonotoneParametrization:
    """Scalar transverse nonlinearity with monotone linear-functional bound.

    f(x, theta, t) is L_{f(x,theta)} psi; alpha is the direction in which
    parameter mismatch is felt; D and D1 are the sector constants (upper
    and lower growth rates).
    """

    f: Callable[[PartitionedState, np.ndarray, float], float]
    alpha: Callable[[PartitionedState, float], np.ndarray]  # (d,)
    D: float
    D1: float
    realizability: RealizabilityPair
    df_dtheta: Optional[Callable] = None  # analytic (x, theta, t) -> (d,)

    def __post_init__(self):
        if not (0.0 < self.D1 <= self.D):
            raise ValueError("require 0 < D1 <= D")


@dataclass(frozen=True)
class PhiFunction:
    """Strictly sign-matched injection term phi with antiderivative Q.

    phi(psi) * psi > 0 for psi != 0 and Q(psi) = int_0^psi phi grows
    without bound; both are relied on by the transient-performance bounds.
    """

    phi: Callable[[float], float]
    Q: Callable[[float], float]

    def __call__(self, psi: float) -> float:
        return self.phi(psi)


def linear_phi(K: float) -> PhiFunction:
    if K <= 0.0:
        raise ValueError("K must be positive")
    return PhiFunction(phi=lambda s: K * s, Q=lambda s: 0.5 * K * s * s)


@dataclass(frozen=True)
class MonotoneBall:
    """One chart of a local-monotonicity atlas.

    Identification is active inside the ball of radius ``radius`` around
    ``center``; it is re-armed only after the state returns to within
    ``delta`` of the center (hysteresis).  ``steering_u`` drives the state
    back toward the center while identification is off.
    """

    center: np.ndarray
    radius: float
    delta: float
    parametrization: MonotoneParametrization
    steering_u: Callable[[PartitionedState, float], float]
    name: str = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not (0.0 < self.delta < self.radius):
            raise ValueError("require 0 < delta < radius")

    def distance(self, x: PartitionedState) -> float:
        return float(np.linalg.norm(x.full - self.center))


@dataclass(frozen=True)
class LocalMonotoneAtlas:
    balls: tuple

    def __post_init__(self):
        balls = tuple(self.balls)
        object.__setattr__(self, "balls", balls)
        for i, a in enumerate(balls):
            for b in balls[i + 1:]:
                if np.linalg.norm(a.center - b.center) <= a.radius + b.delta or \
                   np.linalg.norm(a.center - b.center) <= b.radius + a.delta:
                    raise ValueError(
                        f"atlas balls {a.name!r} and {b.name!r} can activate simultaneously"
                    )

    def __len__(self) -> int:
        return len(self.balls)


@dataclass(frozen=True)
class MonotonicityReport:
    holds: bool
    worst_violation: float  # most negative normalized sign product, in [-1, 1]
    D_est: float
    D1_est: float
    witness: Optional[dict] = None


def _sample_points(box: Box, n: int, rng: np.random.Generator) -> np.ndarray:
    """Half random, half regular grid (corners included)."""
    n_rand = n // 2
    per_axis = max(2, int(round((n - n_rand) ** (1.0 / box.dim))))
    grid = box.grid(per_axis)
    rand = box.sample(rng, max(n_rand, n - len(grid)))
    return np.vstack([grid, rand])


def check_monotonicity(
    p: MonotoneParametrization,
    domain: Box,
    theta_box: Box,
    n_samples: int = 10_000,
    m1: int = 1,
    t_range: tuple = (0.0, 0.0),
    seed: int = 0,
) -> MonotonicityReport:
    """Sampled verification of the monotone sector conditions.

    Over sampled (x, t, theta, theta') the signed product
    (f(x,theta',t) - f(x,theta,t)) * alpha(x,t)^T (theta' - theta) must be
    positive whenever the f-values differ, and the ratio of |f-difference|
    to |alpha^T d theta| estimates the sector constants.  A pair with
    alpha^T d theta ~ 0 but differing f-values is reported as a violation
    (the linear functional cannot explain the change), not an exception.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    xs = _sample_points(domain, n_samples, rng)
    n = len(xs)
    ts = rng.uniform(t_range[0], t_range[1], size=n) if t_range[1] > t_range[0] \
        else np.full(n, float(t_range[0]))
    th = theta_box.sample(rng, n)
    th_p = theta_box.sample(rng, n)

    D_est = 0.0
    D1_est = np.inf
    worst = 1.0
    witness = None
    holds = True
    for i in range(n):
        x = PartitionedState.split(xs[i], m1)
        t = float(ts[i])
        df = p.f(x, th_p[i], t) - p.f(x, th[i], t)
        a = float(np.dot(p.alpha(x, t), th_p[i] - th[i]))
        f_scale = 1.0 + abs(p.f(x, th[i], t))
        if abs(a) <= DEGENERATE_TOL:
            if abs(df) > 1e-9 * f_scale:
                holds = False
                worst = min(worst, -1.0)
                if witness is None:
                    witness = {"x": xs[i], "t": t, "theta": th[i], "theta_prime": th_p[i],
                               "kind": "degenerate"}
            continue
        ratio = abs(df) / abs(a)
        D_est = max(D_est, ratio)
        D1_est = min(D1_est, ratio)
        if abs(df) > 1e-12 * f_scale:
            s = (df * a) / (abs(df) * abs(a))
            if s <= 0.0:
                holds = False
                if s < worst and witness is None:
                    witness = {"x": xs[i], "t": t, "theta": th[i], "theta_prime": th_p[i],
                               "kind": "sign"}
                worst = min(worst, s)
    if not np.isfinite(D1_est):
        D1_est = 0.0
    return MonotonicityReport(holds, worst, D_est, D1_est, witness)


def central_difference(fun, v: np.ndarray, i: int, *args):
    """Central difference of fun w.r.t. component i of leading vector arg."""
    step = FD_STEP * (1.0 + abs(float(v[i])))
    vp = v.copy(); vp[i] += step
    vm = v.copy(); vm[i] -= step
    return (np.asarray(fun(vp, *args)) - np.asarray(fun(vm, *args))) / (2.0 * step)


def _gauss_legendre_01(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _theta_jacobian(f2, x: PartitionedState, theta: np.ndarray, analytic=None) -> np.ndarray:
    if analytic is not None:
        return np.atleast_2d(np.asarray(analytic(x, theta), dtype=float))
    theta = np.asarray(theta, dtype=float)
    cols = [central_difference(lambda th: f2(x, th), theta, j) for j in range(theta.size)]
    jac = np.stack([np.atleast_1d(c) for c in cols], axis=-1)
    if not np.all(np.isfinite(jac)):
        raise IntegrationFault("non-finite parameter Jacobian on the averaging segment")
    return jac


def hadamard_gap(f2, x: PartitionedState, theta, theta_prime,
                 quad_points: int = 16, df2_dtheta=None) -> np.ndarray:
    """Segment-averaged parameter Jacobian F(x, theta, theta').

    F = int_0^1 d f2(x, s(l)) / d s dl with s(l) = theta' l + theta (1-l),
    evaluated by Gauss-Legendre quadrature; it converts the parameter
    difference into the exact function difference,
    F (theta' - theta) = f2(x, theta') - f2(x, theta).
    """
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    nodes, weights = _gauss_legendre_01(quad_points)
    F = None
    for lam, w in zip(nodes, weights):
        s = theta_prime * lam + theta * (1.0 - lam)
        J = _theta_jacobian(f2, x, s, analytic=df2_dtheta)
        F = w * J if F is None else F + w * J
    return F


def pe_complete_integrand(p: MonotoneParametrization, f2, x: PartitionedState,
                          theta, theta_hat, t: float,
                          quad_points: int = 16, df2_dtheta=None) -> np.ndarray:
    """Integrand F0^T F0 + beta F of the refined excitation condition.

    F0 averages the gradient of the scalar f over the segment between the
    true and estimated parameters; the beta F term restores the part of
    the update neglected in the plain excitation test.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    nodes, weights = _gauss_legendre_01(quad_points)
    F0 = np.zeros(theta.size)
    for lam, w in zip(nodes, weights):
        s = theta * lam + theta_hat * (1.0 - lam)
        if p.df_dtheta is not None:
            g = np.asarray(p.df_dtheta(x, s, t), dtype=float)
        else:
            g = np.array([
                float(central_difference(lambda th: p.f(x, th, t), s, j))
                for j in range(s.size)
            ])
        if not np.all(np.isfinite(g)):
            raise IntegrationFault("non-finite gradient on the averaging segment")
        F0 = F0 + w * g
    out = np.outer(F0, F0)
    beta = np.atleast_2d(np.asarray(p.realizability.beta(x, t), dtype=float))
    if np.any(beta != 0.0):
        F = hadamard_gap(f2, x, theta, theta_hat, quad_points, df2_dtheta)
        out = out + beta @ F
    return out
