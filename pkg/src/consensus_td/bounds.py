"""
Rate constants and the finite-time envelope curves.

Everything the convergence analysis promises is reduced to explicit
constants of the instance, the network, and the projection ball, and to
right-hand-side curves in the iteration count k:

  * a per-agent direction bound L_v with ||h_v|| + ||M_v|| <= L_v along any
    trajectory confined to the ball, and L = sum_v L_v;
  * the consensus-error envelope
        delta^k ||Theta(0)|| / eta + (2L/eta) sum_{t<k} delta^(k-1-t) alpha(t),
    evaluated with exact partial sums;
  * the value-error envelopes for the averaged outputs under constant and
    1/sqrt(k+1) stepsizes (constants beta0, beta1);
  * the parameter-error envelopes under sigma_min-aware stepsizes: a
    geometric + offset curve for constant alpha in (0, 1/sigma_min) with
    rho = max(1 - sigma_min alpha, delta), and a ln(k+1)/(k+1) curve for
    alpha(k) = alpha0/(k+1) with alpha0 > 1/sigma_min (constants beta2,
    beta3).

The explicit L_v formula is a constructive choice: with ball radius R and
row-normalized features, ||h_v|| <= ||b_v|| + sigma_max R =: H_v and
|d_v| <= C_v + (1+gamma) R =: D_v, so ||h_v|| + ||M_v|| <= 2 H_v + D_v. Runs
verify it path-wise.

Degenerate schedules (eta = 0) and instances whose steady-state matrix is
not positive definite are refused here, not silently patched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .engine import ProjectionSet, StepsizePlan
from .errors import (
    DegenerateEtaError,
    NotPositiveDefiniteError,
    StepsizeOutOfRangeError,
    UnsupportedPlanError,
)
from .mrp import InstanceOracles, MarkovRewardProcess
from .network import SpectralInfo


@dataclass(frozen=True)
class InitMoments:
    """Initialization moments, averaged over the actual replication draws."""

    E_theta0_dist_sq: float  # E ||mean_v theta_v(0) - theta*||^2
    E_Theta0_norm: float  # E ||Theta(0)||_F
    E_Theta0_norm_sq: float  # E ||Theta(0)||_F^2


def init_moments(theta0_list, theta_star: np.ndarray) -> InitMoments:
    """Exact empirical averages over a list of (N, K) initializations."""
    dist_sq = []
    norms = []
    for theta0 in theta0_list:
        mean_row = np.asarray(theta0).mean(axis=0)
        dist_sq.append(float(np.sum((mean_row - theta_star) ** 2)))
        norms.append(float(np.linalg.norm(theta0)))
    norms = np.asarray(norms)
    return InitMoments(
        E_theta0_dist_sq=float(np.mean(dist_sq)),
        E_Theta0_norm=float(np.mean(norms)),
        E_Theta0_norm_sq=float(np.mean(norms**2)),
    )


def compute_L(
    oracles: InstanceOracles, proj: ProjectionSet, mrp: MarkovRewardProcess
) -> tuple[np.ndarray, float]:
    """Per-agent direction bounds L_v = 2 H_v + D_v and their sum L."""
    R = proj.radius
    H = np.linalg.norm(oracles.b, axis=1) + oracles.sigma_max * R
    D = mrp.reward_bounds + (1.0 + mrp.gamma) * R
    L_v = 2.0 * H + D
    return L_v, float(L_v.sum())


@dataclass(frozen=True)
class RateConstants:
    """All scalars entering the envelope curves.

    beta1, beta2, beta3 are fixed by the instance and network; beta0 and rho
    additionally depend on the stepsize and are exposed as methods.
    """

    L_v: np.ndarray
    L: float
    R0: float
    sigma_min: float
    sigma_max: float
    lambda_min_sym: float
    eta: float
    delta: float
    B: int
    N: int
    gamma: float
    moments: InitMoments

    @property
    def beta1(self) -> float:
        return (
            4.0
            * self.L
            * (self.L + self.N * self.sigma_max * self.R0)
            / (self.N * self.eta * (1.0 - self.delta))
        )

    @property
    def beta2(self) -> float:
        return (
            4.0
            * (self.L + self.N * self.sigma_max * self.R0)
            * self.moments.E_Theta0_norm
            / (self.N * self.eta)
        )

    @property
    def beta3(self) -> float:
        return (
            16.0
            * self.L
            * (self.L + self.N * self.sigma_max * self.R0)
            / (self.N * self.eta * (1.0 - self.delta))
        )

    def beta0(self, alpha0: float) -> float:
        """Theorem-level offset constant; alpha0 is the first stepsize."""
        return self.moments.E_theta0_dist_sq + (
            alpha0
            * self.moments.E_Theta0_norm
            * (self.L + 2.0 * self.N * self.sigma_max * self.R0)
            / (self.N * self.eta * (1.0 - self.delta))
        )

    def rho(self, alpha: float) -> float:
        return max(1.0 - self.sigma_min * alpha, self.delta)

    def sigma_discrepancy(self) -> bool:
        """True when the symmetric part's smallest eigenvalue falls below
        sigma_min; the envelopes use sigma_min either way."""
        return self.lambda_min_sym < self.sigma_min


def compute_constants(
    mrp: MarkovRewardProcess,
    oracles: InstanceOracles,
    proj: ProjectionSet,
    spectral: SpectralInfo,
    moments: InitMoments,
) -> RateConstants:
    """Assemble RateConstants; refuses degenerate or non-PD instances."""
    if spectral.degenerate:
        raise DegenerateEtaError(
            "eta = 0 for this schedule; envelope constants are undefined"
        )
    if not oracles.positive_definite:
        raise NotPositiveDefiniteError(
            "steady-state matrix is not positive definite; bounds do not apply"
        )
    L_v, L = compute_L(oracles, proj, mrp)
    R0 = proj.radius + float(np.linalg.norm(oracles.theta_star))
    return RateConstants(
        L_v=L_v,
        L=L,
        R0=R0,
        sigma_min=oracles.sigma_min,
        sigma_max=oracles.sigma_max,
        lambda_min_sym=oracles.lambda_min_sym,
        eta=spectral.eta,
        delta=spectral.delta,
        B=spectral.B,
        N=mrp.N,
        gamma=mrp.gamma,
        moments=moments,
    )


def _alpha_prefix(plan: StepsizePlan, kmax: int) -> np.ndarray:
    ks = np.arange(kmax, dtype=float)
    if plan.kind == "constant":
        return np.full(kmax, plan.param)
    if plan.kind == "inv_sqrt":
        return 1.0 / np.sqrt(ks + 1.0)
    return plan.param / (ks + 1.0)


def lemma1_envelope(
    ks, constants: RateConstants, Theta0_norm: float, plan: StepsizePlan
):
    """Consensus-error envelope at iteration(s) k.

    delta^k ||Theta(0)|| / eta + (2L/eta) sum_{t<k} delta^(k-1-t) alpha(t),
    with the partial sums computed exactly by the cumulative recurrence
    S_{k+1} = delta S_k + alpha(k). Accepts a scalar or an array of ks.
    """
    if constants.eta <= 0.0:
        raise DegenerateEtaError("eta = 0; consensus envelope undefined")
    ks_arr = np.atleast_1d(np.asarray(ks, dtype=np.int64))
    if np.any(ks_arr < 0):
        raise ValueError("k must be nonnegative")
    kmax = int(ks_arr.max())
    delta, eta, L = constants.delta, constants.eta, constants.L
    # S[k] = sum_{t<k} delta^(k-1-t) alpha(t); S[0] = 0.
    S = np.zeros(kmax + 1)
    if kmax > 0:
        alpha = _alpha_prefix(plan, kmax)
        S[1:] = lfilter([1.0], [1.0, -delta], alpha)
    vals = delta**ks_arr.astype(float) * (Theta0_norm / eta) + (2.0 * L / eta) * S[
        ks_arr
    ]
    return vals if np.ndim(ks) else float(vals[0])


def theorem1_envelope(ks, constants: RateConstants, plan: StepsizePlan):
    """Value-error envelope for the averaged outputs.

    Constant alpha:  beta0/(alpha (1-gamma)) * 1/(k+1) + beta1 alpha/(1-gamma).
    1/sqrt(k+1):     (beta0 + beta1 (1 + ln(k+1))) / (2 (1-gamma) sqrt(k+1)).
    """
    if constants.eta <= 0.0:
        raise DegenerateEtaError("eta = 0; value envelope undefined")
    ks_arr = np.atleast_1d(np.asarray(ks, dtype=float))
    one_minus_gamma = 1.0 - constants.gamma
    if plan.kind == "constant":
        alpha = plan.param
        vals = constants.beta0(alpha) / (alpha * one_minus_gamma) / (
            ks_arr + 1.0
        ) + constants.beta1 * alpha / one_minus_gamma
    elif plan.kind == "inv_sqrt":
        vals = (constants.beta0(1.0) + constants.beta1 * (1.0 + np.log(ks_arr + 1.0))) / (
            2.0 * one_minus_gamma * np.sqrt(ks_arr + 1.0)
        )
    else:
        raise UnsupportedPlanError(
            "harmonic stepsizes belong to the parameter-error bound"
        )
    return vals if np.ndim(ks) else float(vals[0])


def theorem1_asymptote(constants: RateConstants, plan: StepsizePlan) -> float:
    """Large-k limit of the constant-step value envelope."""
    if plan.kind != "constant":
        raise UnsupportedPlanError("asymptote only defined for constant stepsizes")
    return constants.beta1 * plan.param / (1.0 - constants.gamma)


def theorem2_envelope(
    ks, constants: RateConstants, plan: StepsizePlan, which: str = "raw_iterate"
):
    """Parameter-error envelope under sigma_min-aware stepsizes.

    which='raw_iterate' with a constant plan bounds E||theta_v(k)-theta*||^2
    for alpha in (0, 1/sigma_min); which='averaged' with a harmonic plan
    bounds E||hat_theta_v(k)-theta*||^2 for alpha0 > 1/sigma_min.
    """
    if constants.eta <= 0.0:
        raise DegenerateEtaError("eta = 0; parameter envelope undefined")
    if which not in ("raw_iterate", "averaged"):
        raise ValueError(f"unknown target {which!r}")
    ks_arr = np.atleast_1d(np.asarray(ks, dtype=float))
    m = constants.moments
    if plan.kind == "constant":
        if which != "raw_iterate":
            raise UnsupportedPlanError(
                "constant stepsizes bound the raw iterates, not the averages"
            )
        alpha = plan.param
        if not 0.0 < alpha < 1.0 / constants.sigma_min:
            raise StepsizeOutOfRangeError(
                f"constant alpha must lie in (0, 1/sigma_min) = "
                f"(0, {1.0 / constants.sigma_min:.6g}), got {alpha:.6g}"
            )
        rho = constants.rho(alpha)
        init = 2.0 * (m.E_theta0_dist_sq + 2.0 * m.E_Theta0_norm_sq)
        vals = (
            init * rho**ks_arr
            + constants.beta2 * alpha / (1.0 - rho)
            + constants.beta3 * alpha**2 / ((1.0 - rho) * (1.0 - constants.delta))
        )
    elif plan.kind == "harmonic":
        if which != "averaged":
            raise UnsupportedPlanError(
                "harmonic stepsizes bound the averaged outputs, not raw iterates"
            )
        alpha0 = plan.param
        if alpha0 <= 1.0 / constants.sigma_min:
            raise StepsizeOutOfRangeError(
                f"alpha0 must exceed 1/sigma_min = "
                f"{1.0 / constants.sigma_min:.6g}, got {alpha0:.6g}"
            )
        coef = constants.beta2 / (
            2.0 * constants.sigma_min * (1.0 - constants.delta)
        ) + alpha0 * constants.beta3 / (4.0 * constants.sigma_min)
        vals = coef * np.log(ks_arr + 1.0) / (ks_arr + 1.0)
    else:
        raise UnsupportedPlanError(
            "1/sqrt(k+1) stepsizes belong to the value-error bound"
        )
    return vals if np.ndim(ks) else float(vals[0])
