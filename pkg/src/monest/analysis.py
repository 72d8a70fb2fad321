"""Executable forms of the stability and convergence guarantees.

Windowed excitation Gramians, a-priori transient-performance bounds with
their observed counterparts, exponential envelopes, the parameter-error
Lyapunov monitor, and an empirical convergence-rate fit.  Everything here
is pure post-processing over recorded, uniformly sampled trajectories;
trajectory integrals use the trapezoidal rule, consistent with the
fixed-step sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import MonotoneParametrization, PartitionedState, PhiFunction, PlantModel, \
    pe_complete_integrand

__all__ = [
    "GramianSeries",
    "BoundReport",
    "pe_gramian",
    "pe_complete_gramian",
    "performance_bounds",
    "evaluate_bounds",
    "lambda_inverse",
    "exp_envelope",
    "envelope_margin",
    "lyapunov_monitor",
    "exp_rate_fit",
]


@dataclass
class GramianSeries:
    """Smallest eigenvalues of sliding-window excitation Gramians."""

    window: float
    times: np.ndarray  # window start times
    min_eigs: np.ndarray
    delta_est: float


@dataclass
class BoundReport:
    """A-priori transient bounds next to their observed counterparts."""

    l2_phi_bound: float
    l2_psidot_bound: float
    linf_psi_bound: float
    observed_l2_phi: float = float("nan")
    observed_l2_psidot: float = float("nan")
    observed_linf_psi: float = float("nan")
    satisfied: Optional[bool] = None


def _check_uniform(times: np.ndarray) -> float:
    dt = np.diff(times)
    if len(dt) == 0:
        raise ValueError("need at least two samples")
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise ValueError("signal sampling must be uniform")
    return float(dt[0])


def _windowed_min_eigs(times: np.ndarray, series: np.ndarray, window: float) -> GramianSeries:
    dt = _check_uniform(times)
    m = int(round(window / dt))
    if m < 2:
        raise ValueError("window must span at least 2 sample intervals")
    if m >= len(times):
        raise ValueError("window exceeds signal length")
    # Cumulative trapezoid of the matrix series, then sliding differences.
    inc = 0.5 * dt * (series[1:] + series[:-1])
    cum = np.concatenate([np.zeros((1,) + series.shape[1:]), np.cumsum(inc, axis=0)])
    grams = cum[m:] - cum[:-m]
    min_eigs = np.array([np.min(np.linalg.eigvalsh(G)) for G in grams])
    return GramianSeries(
        window=m * dt,
        times=times[: len(grams)],
        min_eigs=min_eigs,
        delta_est=float(np.min(min_eigs)),
    )


def pe_gramian(times: np.ndarray, alpha: np.ndarray, window: float) -> GramianSeries:
    """Sliding-window Gramians int_t^{t+L} alpha alpha^T dtau of a signal.

    A uniformly positive smallest eigenvalue over all windows certifies
    persistent excitation with level delta_est for window length L.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[0] != len(times):
        alpha = alpha.T
    outer = np.einsum("ni,nj->nij", alpha, alpha)
    return _windowed_min_eigs(np.asarray(times, dtype=float), outer, window)


def pe_complete_gramian(times, states: Sequence[PartitionedState], theta_hats,
                        plant: PlantModel, p: MonotoneParametrization,
                        window: float, quad_points: int = 8) -> GramianSeries:
    """Sliding-window Gramians of the refined integrand F0^T F0 + beta F.

    Diagnostic only: the integrand compares the recorded estimates with
    the plant's sealed true parameter.
    """
    theta = plant.true_theta()
    theta_hats = np.atleast_2d(np.asarray(theta_hats, dtype=float))
    if theta_hats.shape[0] != len(times):
        theta_hats = theta_hats.T
    mats = np.stack([
        pe_complete_integrand(p, plant.f2, x, theta, th, float(t),
                              quad_points=quad_points, df2_dtheta=plant.df2_dtheta)
        for t, x, th in zip(times, states, theta_hats)
    ])
    # Symmetrize: the beta F cross term need not be symmetric pointwise.
    mats = 0.5 * (mats + np.transpose(mats, (0, 2, 1)))
    return _windowed_min_eigs(np.asarray(times, dtype=float), mats, window)


def lambda_inverse(phi: PhiFunction, d: float, max_doublings: int = 200) -> float:
    """Largest |psi| whose accumulated injection equals d: Q(|psi|) = d.

    Q is strictly increasing on psi >= 0 for admissible phi, so the level
    set is a single point found by doubling then bisection.
    """
    if d <= 0.0:
        return 0.0
    hi = 1.0
    for _ in range(max_doublings):
        if phi.Q(hi) >= d:
            break
        hi *= 2.0
    else:
        raise RuntimeError("Q did not reach the requested level on the probe range")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi.Q(mid) < d:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _gamma_inv_quad(theta_err0, Gamma) -> float:
    v = np.atleast_1d(np.asarray(theta_err0, dtype=float))
    G = np.atleast_2d(np.asarray(Gamma, dtype=float))
    return float(v @ np.linalg.solve(G, v))


def performance_bounds(phi: PhiFunction, psi0: float, theta_err0, Gamma,
                       D: float) -> BoundReport:
    """A-priori transient bounds from the initial data.

    ||phi(psi)||_2^2 and ||dpsi/dt||_2^2 are bounded by
    2 Q(psi0) + ||theta_err0||^2 in the (2 D Gamma)^-1 norm, and
    ||psi||_inf by Lambda(Q(psi0) + ||theta_err0||^2 in (4 D Gamma)^-1).
    """
    if D <= 0.0:
        raise ValueError("D must be positive")
    q0 = phi.Q(psi0)
    quad = _gamma_inv_quad(theta_err0, Gamma)
    l2 = 2.0 * q0 + quad / (2.0 * D)
    linf = lambda_inverse(phi, q0 + quad / (4.0 * D))
    return BoundReport(l2_phi_bound=l2, l2_psidot_bound=l2, linf_psi_bound=linf)


def evaluate_bounds(report: BoundReport, times, psi, psi_dot,
                    phi: PhiFunction, atol: float = 1e-9) -> BoundReport:
    """Fill the observed counterparts of a bound report from a recorded run.

    ``atol`` absorbs integrator round-off: a matched run has exactly zero
    theoretical bounds but a trajectory with float-level fuzz.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    psi_dot = np.asarray(psi_dot, dtype=float)
    phi_vals = np.array([phi(s) for s in psi])
    report.observed_l2_phi = float(np.trapezoid(phi_vals ** 2, times))
    report.observed_l2_psidot = float(np.trapezoid(psi_dot ** 2, times))
    report.observed_linf_psi = float(np.max(np.abs(psi)))
    report.satisfied = bool(
        report.observed_l2_phi <= report.l2_phi_bound + atol
        and report.observed_l2_psidot <= report.l2_psidot_bound + atol
        and report.observed_linf_psi <= report.linf_psi_bound + atol
    )
    return report


def exp_envelope(psi0: float, K: float, D: float, Gamma, theta_err0, t) -> float:
    """Exponential envelope |psi0| e^{-K t} + residual radius.

    The residual term 0.5 sqrt(||theta_err0||^2 in the (K D Gamma)^-1
    norm) is the floor into which |psi| converges under a linear
    injection phi = K psi.
    """
    if K <= 0.0 or D <= 0.0:
        raise ValueError("K and D must be positive")
    radius = 0.5 * np.sqrt(_gamma_inv_quad(theta_err0, Gamma) / (K * D))
    return abs(psi0) * np.exp(-K * np.asarray(t, dtype=float)) + radius


def envelope_margin(times, psi, K: float, D: float, Gamma, theta_err0,
                    atol: float = 1e-9) -> dict:
    """Check a whole trajectory against the envelope; positive margin = ok.

    ``atol`` absorbs integrator round-off in the degenerate matched case
    where the envelope is identically |psi(0)| e^{-Kt} with psi(0) = 0.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    env = exp_envelope(psi[0], K, D, Gamma, theta_err0, times - times[0])
    margin = env - np.abs(psi)
    return {
        "violations": int(np.sum(margin < -atol)),
        "worst_margin": float(np.min(margin)),
    }


def lyapunov_monitor(times, theta_hats, Gamma, theta_true,
                     on_mask=None, segment_ids=None, theta_domain=None) -> dict:
    """Per-step monitor of the parameter-error norm ||theta_hat - theta||^2
    in the Gamma^-1 metric.

    ``theta_true`` may be a fixed vector or a per-sample array (plants
    whose true parameter changes along the run).  Pairs that straddle a
    change of ``segment_ids`` or an off interval of ``on_mask`` are
    skipped: the decrease guarantee applies between such jumps only.
    """
    theta_hats = np.atleast_2d(np.asarray(theta_hats, dtype=float))
    n = len(times)
    if theta_hats.shape[0] != n:
        theta_hats = theta_hats.T
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_true.ndim <= 1:
        theta_true = np.broadcast_to(np.atleast_1d(theta_true), theta_hats.shape)
    err = theta_hats - theta_true
    Ginv = np.linalg.inv(np.atleast_2d(np.asarray(Gamma, dtype=float)))
    V = np.einsum("ni,ij,nj->n", err, Ginv, err)

    ok = np.ones(n, dtype=bool) if on_mask is None else np.asarray(on_mask, dtype=bool)
    pair_ok = ok[1:] & ok[:-1]
    if segment_ids is not None:
        seg = np.asarray(segment_ids)
        pair_ok &= seg[1:] == seg[:-1]
    dV = V[1:] - V[:-1]
    max_increase = float(np.max(dV[pair_ok])) if np.any(pair_ok) else 0.0

    exit_omega = False
    if theta_domain is not None:
        inside = [theta_domain.contains(th) for th in theta_hats]
        exit_omega = not all(inside)
    final_err = float(np.linalg.norm(err[-1]))
    return {
        "max_increase": max_increase,
        "exit_omega": exit_omega,
        "final_err": final_err,
        "V": V,
    }


def exp_rate_fit(times, theta_err_norm, decades: float = 3.0) -> dict:
    """Least-squares exponential-rate fit of a decaying parameter error.

    Fits log||theta_err|| against time from the first sample until the
    error has dropped by ``decades`` orders of magnitude (or the record
    ends), returning the decay rate and the fit quality.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(theta_err_norm, dtype=float)
    usable = norms > 0.0
    times, norms = times[usable], norms[usable]
    if len(norms) == 0:
        raise ValueError("no positive samples to fit")
    floor = norms[0] * 10.0 ** (-decades)
    below = np.flatnonzero(norms <= floor)
    end = int(below[0]) + 1 if len(below) else len(norms)
    t_fit, y_fit = times[:end], np.log(norms[:end])
    if len(t_fit) < 10:
        raise ValueError("fewer than 10 usable samples for the rate fit")
    slope, intercept = np.polyfit(t_fit, y_fit, 1)
    resid = y_fit - (slope * t_fit + intercept)
    ss_tot = float(np.sum((y_fit - np.mean(y_fit)) ** 2))
    r_squared = 1.0 if ss_tot < 1e-300 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return {"lambda_est": float(-slope), "r_squared": r_squared}
