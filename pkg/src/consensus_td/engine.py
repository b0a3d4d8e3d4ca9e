"""
The distributed TD(0) iteration: consensus, local temporal-difference step,
ball projection, and stepsize-weighted output averaging.

Each agent v keeps a parameter row theta_v. One iteration k does, in order:

    y_v      = sum_u W_vu(k) theta_u(k)                       (consensus)
    d_v      = r_v(k) + theta_v(k)^T (gamma phi(s') - phi(s)) (TD term)
    theta_v+ = project_ball(y_v + alpha(k) d_v phi(s))        (local step)
    S+       = S + alpha(k)
    hat_v+   = (S hat_v + alpha(k) theta_v(k)) / S+           (output avg)

d_v deliberately uses the pre-consensus theta_v(k), and the output average
uses the pre-update theta_v(k); both choices follow the update's literal
definition. The step also exposes the direction decomposition used by the
rate analysis: h_v = b_v - A theta_v(k), the zero-mean residual
M_v = d_v phi(s) - h_v (so alpha d_v phi(s) = alpha (h_v + M_v) exactly),
and the projection error e_v = pre-projection point minus projected point.

Per-agent arithmetic is written as elementwise multiply + reduce rather
than BLAS dot products so that the N = 1 reduction reproduces a plain
centralized implementation bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteValueError
from .mrp import FeatureMap, InstanceOracles, MarkovRewardProcess
from .network import WeightSchedule, consensus_error
from .sampling import (
    INIT_SUBSTREAM,
    TUPLE_SUBSTREAM,
    RngStream,
    SampleTuple,
    TupleSampler,
)

PLAN_KINDS = ("constant", "inv_sqrt", "harmonic")


@dataclass(frozen=True)
class StepsizePlan:
    """Stepsize sequence alpha(k): constant, 1/sqrt(k+1), or alpha0/(k+1)."""

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ValueError(f"unknown stepsize kind {self.kind!r}")
        if self.param <= 0.0:
            raise ValueError("stepsize parameter must be positive")

    @classmethod
    def constant(cls, alpha: float) -> "StepsizePlan":
        return cls(kind="constant", param=alpha)

    @classmethod
    def inv_sqrt(cls) -> "StepsizePlan":
        return cls(kind="inv_sqrt")

    @classmethod
    def harmonic(cls, alpha0: float) -> "StepsizePlan":
        return cls(kind="harmonic", param=alpha0)

    def at(self, k: int) -> float:
        if self.kind == "constant":
            return self.param
        if self.kind == "inv_sqrt":
            return 1.0 / np.sqrt(k + 1.0)
        return self.param / (k + 1.0)


@dataclass(frozen=True)
class ProjectionSet:
    """Euclidean ball of radius `radius` centered at the origin."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("projection radius must be positive")

    @classmethod
    def unbounded(cls) -> "ProjectionSet":
        """Diagnostic mode that disables clipping (radius = inf).

        Runs stay well-defined (e_v = 0 throughout) but the direction bounds
        and rate envelopes do not apply; such runs are excluded from bound
        checks and need an explicit theta0."""
        return cls(radius=float("inf"))


def default_projection(theta_star: np.ndarray, margin: float = 0.5) -> ProjectionSet:
    """Ball radius (1 + margin) * ||theta*||, so theta* is interior."""
    norm = float(np.linalg.norm(theta_star))
    return ProjectionSet(radius=(1.0 + margin) * norm if norm > 0 else 1.0)


def project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered ball: rescale when outside."""
    x = np.asarray(x, dtype=float)
    norm = np.sqrt((x * x).sum())
    if norm > radius:
        return x * (radius / norm)
    return x.copy()


def project_rows(X: np.ndarray, radius: float) -> np.ndarray:
    """Row-wise ball projection; same arithmetic as project_ball per row."""
    norms = np.sqrt((X * X).sum(axis=1))
    out = X.copy()
    over = norms > radius
    if np.any(over):
        out[over] = X[over] * (radius / norms[over])[:, None]
    return out


@dataclass
class RunState:
    """Mutable iteration state: Theta rows are theta_v(k), ThetaHat rows the
    output averages, S the shared stepsize accumulator sum_{t<k} alpha(t)."""

    k: int
    Theta: np.ndarray
    ThetaHat: np.ndarray
    S: float


@dataclass(frozen=True)
class StepDiagnostics:
    """Direction decomposition of one step, all of shape (N, K)."""

    h: np.ndarray
    M: np.ndarray
    e: np.ndarray

    @property
    def h_norms(self) -> np.ndarray:
        return np.linalg.norm(self.h, axis=1)

    @property
    def M_norms(self) -> np.ndarray:
        return np.linalg.norm(self.M, axis=1)

    @property
    def e_norms(self) -> np.ndarray:
        return np.linalg.norm(self.e, axis=1)


def step(
    state: RunState,
    W: np.ndarray,
    tup: SampleTuple,
    alpha_k: float,
    mrp: MarkovRewardProcess,
    feats: FeatureMap,
    oracles: InstanceOracles,
    proj: ProjectionSet,
) -> tuple[RunState, StepDiagnostics]:
    """One synchronized iteration for all agents.

    alpha_k = 0 is accepted as a diagnostic (pure consensus); normal runs
    use positive stepsizes from a StepsizePlan. Raises NonFiniteValueError,
    tagged with the iteration index, if any intermediate is non-finite.
    """
    Theta = state.Theta
    N, K = Theta.shape
    if W.shape != (N, N):
        raise DimensionMismatchError(f"W must be ({N},{N}), got {W.shape}")
    if alpha_k < 0.0:
        raise ValueError("alpha_k must be nonnegative")
    Phi = feats.Phi
    phi_s = Phi[tup.s]
    g = mrp.gamma * Phi[tup.s_next] - phi_s
    d = tup.r + (Theta * g).sum(axis=1)  # (N,)
    Y = W @ Theta
    pre = Y + alpha_k * np.outer(d, phi_s)
    if not np.all(np.isfinite(pre)):
        raise NonFiniteValueError(state.k)
    Theta_next = project_rows(pre, proj.radius)
    h = oracles.b - Theta @ oracles.A.T
    M = d[:, None] * phi_s[None, :] - h
    e = pre - Theta_next
    S_new = state.S + alpha_k
    if S_new > 0.0:
        ThetaHat_next = (state.S * state.ThetaHat + alpha_k * Theta) / S_new
    else:
        ThetaHat_next = state.ThetaHat.copy()
    new_state = RunState(k=state.k + 1, Theta=Theta_next, ThetaHat=ThetaHat_next, S=S_new)
    return new_state, StepDiagnostics(h=h, M=M, e=e)


def initial_parameters(
    gen: np.random.Generator, N: int, K: int, radius: float
) -> np.ndarray:
    """Rows i.i.d. uniform in the ball: normalized Gaussian direction times
    radius * U^(1/K)."""
    directions = gen.standard_normal((N, K))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * gen.random(N) ** (1.0 / K)
    return directions * radii[:, None]


@dataclass
class Trajectory:
    """Recorded run metrics at iterations k = record_every, 2*record_every, ...

    Per-agent columns are (num_records, N). max_hM_norm and max_e_over_alpha
    are running maxima over all steps up to each record point (e/alpha ratios
    are tracked at every step, not only recorded ones).
    """

    ks: np.ndarray
    consensus_err: np.ndarray
    dist_theta: np.ndarray
    dist_theta_hat: np.ndarray
    dnorm_sq_hat: np.ndarray
    max_hM_norm: np.ndarray
    max_e_over_alpha: np.ndarray
    theta0: np.ndarray
    theta0_norm: float
    seed: int
    stream_id: int

    @property
    def num_agents(self) -> int:
        return self.dist_theta.shape[1]

    def final_max_e_over_alpha(self) -> np.ndarray:
        return self.max_e_over_alpha[-1]

    def final_max_hM_norm(self) -> np.ndarray:
        return self.max_hM_norm[-1]

    def write_csv(self, path):
        header = (
            "k,agent,consensus_err,dist_theta,dist_theta_hat,"
            "dnorm_sq_hat,max_hM_norm,max_e_over_alpha"
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i, k in enumerate(self.ks):
                for v in range(self.num_agents):
                    fh.write(
                        f"{int(k)},{v},"
                        f"{self.consensus_err[i]:.17g},"
                        f"{self.dist_theta[i, v]:.17g},"
                        f"{self.dist_theta_hat[i, v]:.17g},"
                        f"{self.dnorm_sq_hat[i, v]:.17g},"
                        f"{self.max_hM_norm[i, v]:.17g},"
                        f"{self.max_e_over_alpha[i, v]:.17g}\n"
                    )


def run(
    mrp: MarkovRewardProcess,
    feats: FeatureMap,
    oracles: InstanceOracles,
    weights: WeightSchedule,
    plan: StepsizePlan,
    proj: ProjectionSet,
    K_iters: int,
    rng: RngStream,
    record_every: int = 10,
    theta0: np.ndarray | None = None,
) -> Trajectory:
    """Run the full iteration for K_iters steps and record diagnostics.

    theta_v(0) is drawn i.i.d. uniform in the ball from the rng's
    initialization substream unless theta0 is given; tuples come from the
    independent tuple substream, so the draw sequence is a pure function of
    (seed, stream_id). Records land at k = record_every, 2*record_every, ...
    """
    if K_iters < 1:
        raise ValueError("K_iters must be >= 1")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    N, K = mrp.N, feats.K
    if theta0 is None:
        if not np.isfinite(proj.radius):
            raise ValueError(
                "no-projection diagnostic runs need an explicit theta0"
            )
        theta0 = initial_parameters(rng.substream(INIT_SUBSTREAM), N, K, proj.radius)
    else:
        theta0 = np.array(theta0, dtype=float)
        if theta0.shape != (N, K):
            raise DimensionMismatchError(f"theta0 must be ({N},{K})")
    gen = rng.substream(TUPLE_SUBSTREAM)
    sampler = TupleSampler(mrp, oracles.pi)
    G = feats.Phi.T @ (oracles.pi[:, None] * feats.Phi)  # Phi^T D Phi
    theta_star = oracles.theta_star

    state = RunState(k=0, Theta=theta0.copy(), ThetaHat=theta0.copy(), S=0.0)
    max_hM = np.zeros(N)
    max_e_ratio = np.zeros(N)
    ks, cons, dist_t, dist_h, dnorm_h, rec_hM, rec_e = [], [], [], [], [], [], []
    for k in range(K_iters):
        W = weights.at(k)
        tup = sampler.draw(gen)
        alpha_k = plan.at(k)
        state, diag = step(state, W, tup, alpha_k, mrp, feats, oracles, proj)
        np.maximum(max_hM, diag.h_norms + diag.M_norms, out=max_hM)
        if alpha_k > 0.0:
            np.maximum(max_e_ratio, diag.e_norms / alpha_k, out=max_e_ratio)
        if (k + 1) % record_every == 0:
            ks.append(k + 1)
            cons.append(consensus_error(state.Theta))
            diff = state.Theta - theta_star
            dist_t.append(np.sqrt((diff * diff).sum(axis=1)))
            diff_h = state.ThetaHat - theta_star
            dist_h.append(np.sqrt((diff_h * diff_h).sum(axis=1)))
            dnorm_h.append(np.einsum("vi,ij,vj->v", diff_h, G, diff_h))
            rec_hM.append(max_hM.copy())
            rec_e.append(max_e_ratio.copy())
    return Trajectory(
        ks=np.asarray(ks, dtype=np.int64),
        consensus_err=np.asarray(cons),
        dist_theta=np.asarray(dist_t),
        dist_theta_hat=np.asarray(dist_h),
        dnorm_sq_hat=np.asarray(dnorm_h),
        max_hM_norm=np.asarray(rec_hM),
        max_e_over_alpha=np.asarray(rec_e),
        theta0=theta0,
        theta0_norm=float(np.linalg.norm(theta0)),
        seed=rng.seed,
        stream_id=rng.stream_id,
    )
