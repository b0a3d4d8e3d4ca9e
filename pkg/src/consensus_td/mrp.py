"""
Markov reward process with per-agent rewards and linear value features.

A fixed stationary policy induces a Markov chain P on n states. Each of the
N agents observes its own reward table R_v(i, j) for the shared transition
(i, j), and the network's value function is defined through the averaged
reward (1/N) sum_v R_v. Value estimates are restricted to the span of K
feature vectors stacked as the rows phi(i)^T of the n x K matrix Phi.

This module computes every exact quantity the simulator and the bound
checkers test against: the stationary distribution pi, the steady-state
matrix A and per-agent vectors b_v with A theta* = mean_v b_v, the exact
discounted value function J*, the Bellman operator, the pi-weighted norm,
and the pi-weighted projection onto span(Phi). Everything is dense linear
algebra; direct O(n^3) solves are fine at the intended scale (n <= 1e3,
K <= 64).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatchError,
    NoConvergenceError,
    RankDeficientError,
    ReducibleChainError,
    SingularGramError,
    SingularMatrixError,
)

ROW_SUM_TOL = 1e-12
RANK_TOL = 1e-10
PIVOT_TOL = 1e-14


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


def is_irreducible(P: np.ndarray) -> bool:
    """True when the positive-entry pattern of P is strongly connected."""
    pattern = csr_matrix(P > 0)
    ncomp, _ = connected_components(pattern, directed=True, connection="strong")
    return ncomp == 1


@dataclass(frozen=True)
class MarkovRewardProcess:
    """Fixed-policy chain with one reward table per agent.

    Parameters
    ----------
    P : ndarray, shape (n, n)
        Row-stochastic transition matrix.
    gamma : float
        Discount factor in (0, 1).
    rewards : ndarray, shape (N, n, n)
        rewards[v, i, j] is agent v's reward for the transition i -> j.
    """

    P: np.ndarray
    gamma: float
    rewards: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        rewards = np.asarray(self.rewards, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionMismatchError(f"P must be square, got {P.shape}")
        n = P.shape[0]
        if rewards.ndim != 3 or rewards.shape[1:] != (n, n):
            raise DimensionMismatchError(
                f"rewards must have shape (N, {n}, {n}), got {rewards.shape}"
            )
        if np.any(P < 0):
            raise ValueError("P has negative entries")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("rows of P must sum to 1 within 1e-12")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        if not is_irreducible(P):
            raise ReducibleChainError(
                "transition chain is reducible (more than one communicating class)"
            )
        object.__setattr__(self, "P", _freeze(P))
        object.__setattr__(self, "rewards", _freeze(rewards))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def N(self) -> int:
        return self.rewards.shape[0]

    @cached_property
    def reward_bounds(self) -> np.ndarray:
        """Per-agent uniform reward bound C_v = max_ij |R_v(i, j)|."""
        return np.max(np.abs(self.rewards), axis=(1, 2))

    @cached_property
    def expected_rewards(self) -> np.ndarray:
        """(N, n) array of one-step expected rewards sum_j P_ij R_v(i, j)."""
        return np.einsum("ij,vij->vi", self.P, self.rewards)

    @cached_property
    def mean_expected_reward(self) -> np.ndarray:
        """Length-n vector of the agent-averaged expected one-step reward."""
        return self.expected_rewards.mean(axis=0)


@dataclass(frozen=True)
class FeatureMap:
    """Linear value features: row i of Phi is phi(i)^T.

    Requires full column rank (smallest singular value above 1e-10) and
    row norms at most 1.
    """

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=float)
        if Phi.ndim != 2:
            raise DimensionMismatchError(f"Phi must be 2-D, got shape {Phi.shape}")
        n, K = Phi.shape
        if K > n:
            raise DimensionMismatchError(f"need K <= n, got K={K}, n={n}")
        svals = np.linalg.svd(Phi, compute_uv=False)
        if svals[-1] <= RANK_TOL:
            raise RankDeficientError(
                f"feature matrix is rank deficient (sigma_min={svals[-1]:.3e})"
            )
        row_norms = np.linalg.norm(Phi, axis=1)
        if np.max(row_norms) > 1.0 + 1e-12:
            raise ValueError(
                f"feature rows must have norm <= 1, max is {row_norms.max():.6f}"
            )
        object.__setattr__(self, "Phi", _freeze(Phi))

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def K(self) -> int:
        return self.Phi.shape[1]


def stationary_distribution(
    P: np.ndarray, tol: float = 1e-14, max_iter: int = 10**6
) -> np.ndarray:
    """Stationary distribution of an irreducible row-stochastic matrix.

    Power iteration on P^T from the uniform vector until successive iterates
    agree within `tol` in the max norm. Raises ReducibleChainError when the
    positive-entry pattern is not strongly connected and NoConvergenceError
    when the iteration cap is hit (e.g. periodic chains).
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape != (n, n):
        raise DimensionMismatchError(f"P must be square, got {P.shape}")
    if not is_irreducible(P):
        raise ReducibleChainError("transition chain is reducible")
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x_new = P.T @ x
        x_new /= x_new.sum()
        if np.max(np.abs(x_new - x)) <= tol:
            x = x_new
            break
        x = x_new
    else:
        raise NoConvergenceError(
            f"power iteration did not reach tol={tol} in {max_iter} iterations"
        )
    residual = np.max(np.abs(x @ P - x))
    if residual > 1e-12:
        raise NoConvergenceError(f"stationary residual {residual:.3e} above 1e-12")
    if np.any(x <= 0):
        raise ReducibleChainError("stationary distribution has nonpositive entries")
    return x


def compute_A_b(
    mrp: MarkovRewardProcess, feats: FeatureMap, pi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state matrix A and per-agent vectors b_v, exactly.

    A = sum_i pi(i) phi(i) (phi(i) - gamma sum_j P_ij phi(j))^T and
    b_v = sum_i pi(i) (sum_j P_ij R_v(i, j)) phi(i). Deterministic sums,
    no sampling. Returns (A, b) with b of shape (N, K).
    """
    Phi = feats.Phi
    if Phi.shape[0] != mrp.n or pi.shape != (mrp.n,):
        raise DimensionMismatchError("feature map / pi incompatible with chain size")
    A = Phi.T @ (pi[:, None] * (Phi - mrp.gamma * (mrp.P @ Phi)))
    b = (pi[None, :] * mrp.expected_rewards) @ Phi
    return A, b


def _solve_with_pivot_check(A: np.ndarray, rhs: np.ndarray, err: str) -> np.ndarray:
    with warnings.catch_warnings():
        # Singularity is detected via the pivot check below.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A)
    if np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
        raise SingularMatrixError(err)
    return scipy.linalg.lu_solve((lu, piv), rhs)


def solve_theta_star(A: np.ndarray, b_bar: np.ndarray) -> np.ndarray:
    """Solve A theta* = b_bar by dense LU with partial pivoting.

    Raises SingularMatrixError when a pivot falls below 1e-14; verifies the
    residual against 1e-8 * max(1, ||b_bar||).
    """
    A = np.asarray(A, dtype=float)
    b_bar = np.asarray(b_bar, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b_bar.shape != (A.shape[0],):
        raise DimensionMismatchError(f"incompatible shapes {A.shape}, {b_bar.shape}")
    theta = _solve_with_pivot_check(A, b_bar, "steady-state matrix is singular")
    residual = np.linalg.norm(A @ theta - b_bar)
    if residual > 1e-8 * max(1.0, np.linalg.norm(b_bar)):
        raise SingularMatrixError(f"solve residual {residual:.3e} above tolerance")
    return theta


def exact_value_function(mrp: MarkovRewardProcess) -> np.ndarray:
    """Exact discounted value function: solve (I - gamma P) J = r_bar.

    r_bar(i) is the agent-averaged expected one-step reward from state i.
    The system is nonsingular for gamma < 1 and row-stochastic P.
    """
    n = mrp.n
    rbar = mrp.mean_expected_reward
    J = _solve_with_pivot_check(
        np.eye(n) - mrp.gamma * mrp.P, rbar, "value-function system is singular"
    )
    residual = np.max(np.abs((np.eye(n) - mrp.gamma * mrp.P) @ J - rbar))
    if residual > 1e-10:
        raise SingularMatrixError(f"value residual {residual:.3e} above 1e-10")
    return J


def bellman_operator(J: np.ndarray, mrp: MarkovRewardProcess) -> np.ndarray:
    """One application of the Bellman operator for the averaged reward.

    (TJ)(i) = sum_j P_ij { (1/N) sum_v R_v(i, j) + gamma J(j) }.
    """
    J = np.asarray(J, dtype=float)
    if J.shape != (mrp.n,):
        raise DimensionMismatchError(f"J must have shape ({mrp.n},), got {J.shape}")
    return mrp.mean_expected_reward + mrp.gamma * (mrp.P @ J)


def d_norm(x: np.ndarray, pi: np.ndarray) -> float:
    """Weighted norm sqrt(sum_i pi(i) x(i)^2)."""
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if x.shape != pi.shape:
        raise DimensionMismatchError(f"shapes {x.shape} and {pi.shape} differ")
    return float(np.sqrt(np.sum(pi * x * x)))


def projection_Pi(J: np.ndarray, feats: FeatureMap, pi: np.ndarray) -> np.ndarray:
    """Project J onto span(Phi) in the pi-weighted inner product.

    Returns Phi (Phi^T D Phi)^-1 Phi^T D J with D = diag(pi). Idempotent,
    and the minimizer of the weighted distance to J over the span.
    """
    J = np.asarray(J, dtype=float)
    if J.shape != (feats.n,):
        raise DimensionMismatchError(f"J must have shape ({feats.n},), got {J.shape}")
    Phi = feats.Phi
    gram = Phi.T @ (pi[:, None] * Phi)
    try:
        coef = _solve_with_pivot_check(gram, Phi.T @ (pi * J), "gram matrix singular")
    except SingularMatrixError as exc:
        raise SingularGramError(str(exc)) from exc
    return Phi @ coef


@dataclass(frozen=True)
class InstanceOracles:
    """Exact ground-truth quantities for one instance.

    Holds the stationary distribution, the steady-state pair (A, b_v), the
    fixed point theta* of A theta = b_bar, the exact value function J*, the
    extreme singular values of A, and the smallest eigenvalue of the
    symmetric part of A. `positive_definite` is False when the quadratic
    form x^T A x is not strictly positive; such instances simulate fine but
    are rejected by the bound evaluators.
    """

    pi: np.ndarray
    A: np.ndarray
    b: np.ndarray
    b_bar: np.ndarray
    theta_star: np.ndarray
    J_star: np.ndarray
    sigma_min: float
    sigma_max: float
    lambda_min_sym: float

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.pi)

    @property
    def positive_definite(self) -> bool:
        return self.lambda_min_sym > 0.0


def compute_oracles(mrp: MarkovRewardProcess, feats: FeatureMap) -> InstanceOracles:
    """Build all exact oracles for (mrp, feats) and check their identities.

    On the normal (positive-definite) path this verifies A theta* = b_bar to
    1e-8 and the discount-weighted projection inequality relating the fixed
    point's approximation error to the best approximation of J*.
    """
    if feats.n != mrp.n:
        raise DimensionMismatchError("feature map size does not match chain size")
    pi = stationary_distribution(mrp.P)
    A, b = compute_A_b(mrp, feats, pi)
    b_bar = b.mean(axis=0)
    lambda_min_sym = float(np.linalg.eigvalsh((A + A.T) / 2.0).min())
    if lambda_min_sym <= 0.0:
        warnings.warn(
            f"steady-state matrix is not positive definite "
            f"(lambda_min_sym={lambda_min_sym:.3e}); bound evaluation will refuse "
            f"this instance",
            RuntimeWarning,
            stacklevel=2,
        )
    theta_star = solve_theta_star(A, b_bar)
    J_star = exact_value_function(mrp)
    svals = np.linalg.svd(A, compute_uv=False)
    oracles = InstanceOracles(
        pi=_freeze(pi),
        A=_freeze(A),
        b=_freeze(b),
        b_bar=_freeze(b_bar),
        theta_star=_freeze(theta_star),
        J_star=_freeze(J_star),
        sigma_min=float(svals[-1]),
        sigma_max=float(svals[0]),
        lambda_min_sym=lambda_min_sym,
    )
    if oracles.positive_definite:
        lhs = d_norm(feats.Phi @ theta_star - J_star, pi)
        rhs = d_norm(projection_Pi(J_star, feats, pi) - J_star, pi) / (1.0 - mrp.gamma)
        if lhs > rhs + 1e-10:
            raise AssertionError(
                f"fixed-point error {lhs:.6e} exceeds projection bound {rhs:.6e}"
            )
    return oracles


@dataclass(frozen=True)
class InstanceParams:
    """Parameters for random instance generation."""

    n: int
    K: int
    N: int
    gamma: float
    reward_scale: float = 1.0
    orthonormal_features: bool = False

    def __post_init__(self):
        if self.n < 1 or self.K < 1 or self.N < 1:
            raise ValueError("n, K, N must be positive")
        if self.K > self.n:
            raise ValueError(f"need K <= n, got K={self.K}, n={self.n}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.reward_scale < 0.0:
            raise ValueError("reward_scale must be nonnegative")


def generate_instance(
    cfg: InstanceParams, seed: int
) -> tuple[MarkovRewardProcess, FeatureMap]:
    """Draw a random instance, deterministic for a given seed.

    P mixes a row-normalized positive random matrix (90%) with the uniform
    kernel (10%), which makes the chain irreducible and aperiodic by
    construction. Rewards are uniform on [-C, C]. Features are standard
    normal rows rescaled to norm <= 1 (or an orthonormal-column basis when
    requested); rank-deficient draws are retried up to 10 times.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n, K = cfg.n, cfg.K
    raw = rng.random((n, n))
    P = 0.9 * (raw / raw.sum(axis=1, keepdims=True)) + 0.1 / n
    rewards = rng.uniform(-cfg.reward_scale, cfg.reward_scale, size=(cfg.N, n, n))
    mrp = MarkovRewardProcess(P=P, gamma=cfg.gamma, rewards=rewards)

    last_error: Exception | None = None
    for _ in range(10):
        if cfg.orthonormal_features:
            # Column-orthonormal Q has row norms <= 1 automatically.
            Phi, _ = np.linalg.qr(rng.standard_normal((n, K)))
        else:
            Phi = rng.standard_normal((n, K))
            Phi = Phi / np.maximum(1.0, np.linalg.norm(Phi, axis=1))[:, None]
        try:
            return mrp, FeatureMap(Phi=Phi)
        except RankDeficientError as exc:
            last_error = exc
    raise RankDeficientError(f"features rank deficient after 10 draws: {last_error}")


FORMAT_VERSION = "1"


def instance_to_dict(
    mrp: MarkovRewardProcess, feats: FeatureMap, seed: int
) -> dict:
    """JSON-ready document; arrays are row-major flat lists of floats."""
    return {
        "format_version": FORMAT_VERSION,
        "n": mrp.n,
        "K": feats.K,
        "N": mrp.N,
        "gamma": mrp.gamma,
        "seed": int(seed),
        "P": mrp.P.ravel().tolist(),
        "rewards": [r.ravel().tolist() for r in mrp.rewards],
        "Phi": feats.Phi.ravel().tolist(),
    }


def instance_from_dict(doc: dict) -> tuple[MarkovRewardProcess, FeatureMap, int]:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported instance format_version {doc.get('format_version')!r}"
        )
    n, K, N = int(doc["n"]), int(doc["K"]), int(doc["N"])
    P = np.asarray(doc["P"], dtype=float).reshape(n, n)
    rewards = np.asarray(doc["rewards"], dtype=float).reshape(N, n, n)
    Phi = np.asarray(doc["Phi"], dtype=float).reshape(n, K)
    mrp = MarkovRewardProcess(P=P, gamma=float(doc["gamma"]), rewards=rewards)
    return mrp, FeatureMap(Phi=Phi), int(doc["seed"])


def save_instance(path, mrp: MarkovRewardProcess, feats: FeatureMap, seed: int):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(mrp, feats, seed), fh)
        fh.write("\n")


def load_instance(path) -> tuple[MarkovRewardProcess, FeatureMap, int]:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
