"""
The verification suite: every acceptance check at its stated desk scale.

All checks run on the default instance (5 agents, 20 states, 5 features,
discount 0.9, lazy Metropolis ring, 20 replications) and are deterministic
given the base seed. Statistical gates use fixed streams, so a pass/fail is
reproducible bit for bit.

Check names (usable with `verify --only NAME`):

    fixed_point          exact solve residual and the projection inequality
                         on 50 generated instances
    sampler              empirical marginals of 1e6 tuples vs pi and P rows
    mean_direction       Monte Carlo mean of d_v phi(s) vs b_v - A theta
    lemma1               path-wise consensus-envelope dominance on all runs
    projection_error     ||e_v(k)|| <= L_v alpha(k) at every step of all runs
    thm1_const           value-error envelope, constant stepsize 0.05
    thm1_invsqrt         value-error envelope, alpha(k) = 1/sqrt(k+1)
    thm2_const           parameter-error envelope, alpha = 0.5/sigma_min
    thm2_harmonic        parameter-error envelope, alpha(k) = 2/(sigma_min (k+1))
    contraction          zero-stepsize consensus contraction by eta over B steps
    single_agent         N = 1 engine bit-identical to a centralized reference
    stepsize_monotonic   plateau shrinks when alpha is halved (paired sign test)
    determinism          repeated runs produce byte-identical aggregate CSVs
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .bounds import (
    RateConstants,
    compute_constants,
    init_moments,
    theorem1_envelope,
    theorem2_envelope,
)
from .config import ExperimentConfig, InstanceSpec, ScheduleSpec
from .engine import (
    RunState,
    StepsizePlan,
    Trajectory,
    default_projection,
    initial_parameters,
    run,
    step,
)
from .harness import (
    check_lemma1_pathwise,
    check_projection_error,
    draw_initializations,
    mean_se,
    replication_stream,
    run_experiment,
)
from .mrp import (
    InstanceParams,
    compute_oracles,
    d_norm,
    generate_instance,
    projection_Pi,
)
from .network import GraphSchedule, consensus_error, spectral_eta, weight_schedule
from .sampling import RngStream, TupleSampler, martingale_check

DEFAULT_SEED = 20260810

# Stream ids: replications take 0..M-1; check-specific streams start here.
_CHECK_STREAM_BASE = 10_000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


class AcceptanceSuite:
    """Shared state for the verification checks, built lazily and cached."""

    REPLICATIONS = 20
    RECORD_EVERY = 10
    ALPHA_CONST = 0.05

    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = seed
        self._runs: dict[str, list[Trajectory]] = {}

    @cached_property
    def instance(self):
        mrp, feats, _ = InstanceSpec(seed=self.seed).build()
        return mrp, feats

    @cached_property
    def oracles(self):
        mrp, feats = self.instance
        return compute_oracles(mrp, feats)

    @cached_property
    def schedule(self):
        return ScheduleSpec().build()

    @cached_property
    def weights(self):
        return weight_schedule(self.schedule, lazy=ScheduleSpec().lazy)

    @cached_property
    def spectral(self):
        return spectral_eta(self.weights, self.schedule.B)

    @cached_property
    def proj(self):
        return default_projection(self.oracles.theta_star)

    @cached_property
    def theta0s(self):
        mrp, feats = self.instance
        return draw_initializations(
            self.seed, self.REPLICATIONS, mrp.N, feats.K, self.proj.radius
        )

    @cached_property
    def constants(self) -> RateConstants:
        mrp, _ = self.instance
        moments = init_moments(self.theta0s, self.oracles.theta_star)
        return compute_constants(mrp, self.oracles, self.proj, self.spectral, moments)

    def check_stream(self, slot: int) -> RngStream:
        return RngStream(seed=self.seed, stream_id=_CHECK_STREAM_BASE + slot)

    def run_plans(self) -> dict[str, tuple[StepsizePlan, int]]:
        sigma_min = self.oracles.sigma_min
        return {
            "thm1_const": (StepsizePlan.constant(self.ALPHA_CONST), 5000),
            "thm1_invsqrt": (StepsizePlan.inv_sqrt(), 5000),
            "thm2_const": (StepsizePlan.constant(0.5 / sigma_min), 5000),
            "thm2_harmonic": (StepsizePlan.harmonic(2.0 / sigma_min), 10000),
            "half_const": (StepsizePlan.constant(self.ALPHA_CONST / 2.0), 5000),
        }

    def trajectories(self, key: str) -> list[Trajectory]:
        if key not in self._runs:
            mrp, feats = self.instance
            plan, iters = self.run_plans()[key]
            self._runs[key] = [
                run(
                    mrp,
                    feats,
                    self.oracles,
                    self.weights,
                    plan,
                    self.proj,
                    iters,
                    replication_stream(self.seed, r),
                    record_every=self.RECORD_EVERY,
                    theta0=self.theta0s[r],
                )
                for r in range(self.REPLICATIONS)
            ]
        return self._runs[key]

    def envelope_gate(
        self, key: str, stat_name: str, env_fn, checkpoints, square: bool = False
    ) -> tuple[bool, float, int]:
        """mean + 2 SE <= envelope per (checkpoint, agent).

        Returns (all_pass, worst ratio (mean+2se)/envelope, gate count)."""
        trajs = self.trajectories(key)
        stat = np.stack([getattr(t, stat_name) for t in trajs])
        if square:
            stat = stat**2
        mean, se = mean_se(stat)
        idx = {int(k): i for i, k in enumerate(trajs[0].ks)}
        worst = 0.0
        count = 0
        ok = True
        for k in checkpoints:
            i = idx[k]
            env = env_fn(k)
            for v in range(stat.shape[2]):
                ratio = (mean[i, v] + 2.0 * se[i, v]) / env
                worst = max(worst, float(ratio))
                ok = ok and ratio <= 1.0
                count += 1
        return ok, worst, count


# ---------------------------------------------------------------------------
# Individual checks.


def check_fixed_point(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: exact fixed point and projection inequality, 50 instances."""
    params = InstanceParams(n=20, K=5, N=5, gamma=0.9)
    failures = 0
    worst_residual = 0.0
    worst_slack = -np.inf
    for i in range(50):
        mrp, feats = generate_instance(params, seed=suite.seed + 1000 + i)
        o = compute_oracles(mrp, feats)
        residual = float(np.linalg.norm(o.A @ o.theta_star - o.b_bar))
        lhs = d_norm(feats.Phi @ o.theta_star - o.J_star, o.pi)
        rhs = d_norm(projection_Pi(o.J_star, feats, o.pi) - o.J_star, o.pi) / (
            1.0 - mrp.gamma
        )
        worst_residual = max(worst_residual, residual)
        worst_slack = max(worst_slack, lhs - rhs)
        if residual > 1e-8 or lhs > rhs + 1e-12:
            failures += 1
    return CheckResult(
        "fixed_point",
        failures == 0,
        f"{50 - failures}/50 instances; max residual {worst_residual:.3e}, "
        f"max (lhs - rhs) {worst_slack:.3e}",
    )


def check_sampler(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: empirical marginals of 1e6 tuples within TV 0.01 / 0.02."""
    mrp, _ = suite.instance
    pi = suite.oracles.pi
    sampler = TupleSampler(mrp, pi)
    gen = suite.check_stream(1).generator()
    count = 10**6
    s, s_next, _ = sampler.draw_batch(gen, count)
    freq = np.bincount(s, minlength=mrp.n) / count
    state_tv = 0.5 * float(np.abs(freq - pi).sum())
    joint = np.zeros((mrp.n, mrp.n))
    np.add.at(joint, (s, s_next), 1.0)
    visits = joint.sum(axis=1)
    cond_tvs = []
    for i in range(mrp.n):
        if visits[i] >= 10**4:
            cond_tvs.append(0.5 * float(np.abs(joint[i] / visits[i] - mrp.P[i]).sum()))
    worst_cond = max(cond_tvs) if cond_tvs else 0.0
    passed = state_tv <= 0.01 and worst_cond <= 0.02
    return CheckResult(
        "sampler",
        passed,
        f"state TV {state_tv:.5f} (<= 0.01), worst conditional TV {worst_cond:.5f} "
        f"(<= 0.02) over {len(cond_tvs)} rows",
    )


def check_mean_direction(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: MC mean of d_v phi(s) within 4 SE of b_v - A theta."""
    mrp, feats = suite.instance
    gen = suite.check_stream(2).generator()
    thetas = initial_parameters(gen, 10, feats.K, suite.proj.radius)
    worst_z = 0.0
    for theta in thetas:
        resid, se = martingale_check(
            suite.oracles, mrp, feats, theta, samples=200_000, gen=gen
        )
        z = np.abs(resid) / np.where(se > 0, se, np.inf)
        worst_z = max(worst_z, float(z.max()))
    return CheckResult(
        "mean_direction",
        worst_z <= 4.0,
        f"max |z| = {worst_z:.3f} over 10 thetas x {mrp.N} agents x {feats.K} "
        f"components (gate 4.0)",
    )


_ALL_RUN_KEYS = ("thm1_const", "thm1_invsqrt", "thm2_const", "thm2_harmonic", "half_const")


def check_lemma1(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: consensus envelope dominates every recorded k <= 1e4."""
    worst = 0.0
    ok = True
    for key in _ALL_RUN_KEYS:
        plan, _ = suite.run_plans()[key]
        passed, ratio = check_lemma1_pathwise(
            suite.trajectories(key), suite.constants, plan
        )
        ok = ok and passed
        worst = max(worst, ratio)
    n_paths = len(_ALL_RUN_KEYS) * suite.REPLICATIONS
    return CheckResult(
        "lemma1",
        ok,
        f"max observed/envelope ratio {worst:.4f} over {n_paths} paths (gate 1.0)",
    )


def check_projection_error_bound(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: ||e_v(k)||/alpha(k) <= L_v at every step of every run."""
    worst = 0.0
    ok = True
    for key in _ALL_RUN_KEYS:
        passed, ratio = check_projection_error(
            suite.trajectories(key), suite.constants
        )
        ok = ok and passed
        worst = max(worst, ratio)
    return CheckResult(
        "projection_error",
        ok,
        f"max ||e_v||/(alpha L_v) = {worst:.4f} over all steps (gate 1.0)",
    )


def check_thm1_const(suite: AcceptanceSuite) -> CheckResult:
    plan, _ = suite.run_plans()["thm1_const"]
    ok, worst, count = suite.envelope_gate(
        "thm1_const",
        "dnorm_sq_hat",
        lambda k: theorem1_envelope(k, suite.constants, plan),
        [10, 100, 1000, 5000],
    )
    return CheckResult(
        "thm1_const",
        ok,
        f"(mean+2SE)/envelope max {worst:.3e} over {count} gates (gate 1.0)",
    )


def check_thm1_invsqrt(suite: AcceptanceSuite) -> CheckResult:
    plan, _ = suite.run_plans()["thm1_invsqrt"]
    ok, worst, count = suite.envelope_gate(
        "thm1_invsqrt",
        "dnorm_sq_hat",
        lambda k: theorem1_envelope(k, suite.constants, plan),
        [10, 100, 1000, 5000],
    )
    return CheckResult(
        "thm1_invsqrt",
        ok,
        f"(mean+2SE)/envelope max {worst:.3e} over {count} gates (gate 1.0)",
    )


def check_thm2_const(suite: AcceptanceSuite) -> CheckResult:
    plan, _ = suite.run_plans()["thm2_const"]
    ok, worst, count = suite.envelope_gate(
        "thm2_const",
        "dist_theta",
        lambda k: theorem2_envelope(k, suite.constants, plan, which="raw_iterate"),
        [10, 100, 1000, 5000],
        square=True,
    )
    return CheckResult(
        "thm2_const",
        ok,
        f"alpha = 0.5/sigma_min; (mean+2SE)/envelope max {worst:.3e} over "
        f"{count} gates (gate 1.0)",
    )


def check_thm2_harmonic(suite: AcceptanceSuite) -> CheckResult:
    plan, _ = suite.run_plans()["thm2_harmonic"]
    ok, worst, count = suite.envelope_gate(
        "thm2_harmonic",
        "dist_theta_hat",
        lambda k: theorem2_envelope(k, suite.constants, plan, which="averaged"),
        [100, 1000, 10000],
        square=True,
    )
    return CheckResult(
        "thm2_harmonic",
        ok,
        f"alpha0 = 2/sigma_min, k >= 100; (mean+2SE)/envelope max {worst:.3e} "
        f"over {count} gates (gate 1.0)",
    )


def check_contraction(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: zero-stepsize consensus error contracts by eta over B steps."""
    mrp, feats = suite.instance
    B = suite.schedule.B
    eta = suite.spectral.eta
    gen = suite.check_stream(3).generator()
    sampler = TupleSampler(mrp, suite.oracles.pi)
    worst = 0.0
    for _ in range(100):
        theta0 = initial_parameters(gen, mrp.N, feats.K, suite.proj.radius)
        state = RunState(k=0, Theta=theta0.copy(), ThetaHat=theta0.copy(), S=0.0)
        before = consensus_error(state.Theta)
        for j in range(B):
            state, _ = step(
                state,
                suite.weights.at(j),
                sampler.draw(gen),
                0.0,
                mrp,
                feats,
                suite.oracles,
                suite.proj,
            )
        after = consensus_error(state.Theta)
        if before > 0:
            worst = max(worst, after / before)
    passed = worst <= eta + 1e-9
    return CheckResult(
        "contraction",
        passed,
        f"max contraction ratio {worst:.6f} vs eta = {eta:.6f} over 100 starts",
    )


def _centralized_reference(theta0, tuples, feats, gamma, radius, plan, steps):
    """Plain single-agent projected TD(0), coded independently of the engine."""
    import math

    Phi = feats.Phi
    theta = theta0.copy()
    hat = theta0.copy()
    S = 0.0
    thetas, hats = [], []
    for k in range(steps):
        t = tuples[k]
        alpha = plan.at(k)
        phi_s = Phi[t.s]
        g = gamma * Phi[t.s_next] - phi_s
        d = t.r[0] + (theta * g).sum()
        cand = theta + alpha * (d * phi_s)
        nrm = math.sqrt(float((cand * cand).sum()))
        if nrm > radius:
            cand = cand * (radius / nrm)
        S_new = S + alpha
        hat = (S * hat + alpha * theta) / S_new
        S = S_new
        theta = cand
        thetas.append(theta.copy())
        hats.append(hat.copy())
    return thetas, hats


def check_single_agent(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: N = 1 engine bit-identical to the centralized reference."""
    params = InstanceParams(n=20, K=5, N=1, gamma=0.9)
    mrp, feats = generate_instance(params, seed=suite.seed + 77)
    oracles = compute_oracles(mrp, feats)
    proj = default_projection(oracles.theta_star)
    schedule = GraphSchedule(N=1, edge_sets=((),), B=1)
    weights = weight_schedule(schedule, lazy=0.25)
    plan = StepsizePlan.inv_sqrt()
    steps = 1000

    gen = suite.check_stream(4).generator()
    theta0 = initial_parameters(suite.check_stream(5).generator(), 1, feats.K, proj.radius)
    sampler = TupleSampler(mrp, oracles.pi)
    tuples = [sampler.draw(gen) for _ in range(steps)]

    state = RunState(k=0, Theta=theta0.copy(), ThetaHat=theta0.copy(), S=0.0)
    eng_thetas, eng_hats = [], []
    for k in range(steps):
        state, _ = step(
            state, weights.at(k), tuples[k], plan.at(k), mrp, feats, oracles, proj
        )
        eng_thetas.append(state.Theta[0].copy())
        eng_hats.append(state.ThetaHat[0].copy())

    ref_thetas, ref_hats = _centralized_reference(
        theta0[0], tuples, feats, mrp.gamma, proj.radius, plan, steps
    )
    identical = all(
        np.array_equal(a, b) for a, b in zip(eng_thetas, ref_thetas)
    ) and all(np.array_equal(a, b) for a, b in zip(eng_hats, ref_hats))
    return CheckResult(
        "single_agent",
        identical,
        f"{steps} steps bit-identical: {identical}",
    )


def check_stepsize_monotonic(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: halved constant stepsize lowers the k = 5000 plateau of the
    value error (paired one-sided sign test, p < 0.05)."""
    full = suite.trajectories("thm1_const")
    half = suite.trajectories("half_const")
    wins = 0
    for t_full, t_half in zip(full, half):
        m_full = float(t_full.dnorm_sq_hat[-1].mean())
        m_half = float(t_half.dnorm_sq_hat[-1].mean())
        wins += m_half < m_full
    m = len(full)
    p = float(binom.sf(wins - 1, m, 0.5))
    return CheckResult(
        "stepsize_monotonic",
        p < 0.05,
        f"alpha/2 beat alpha on {wins}/{m} seeds (one-sided sign test p = {p:.2e})",
    )


def check_determinism(suite: AcceptanceSuite) -> CheckResult:
    """Criterion: repeated runs with one config yield byte-identical
    aggregate CSVs."""
    config = ExperimentConfig(
        instance=InstanceSpec(seed=suite.seed),
        schedule=ScheduleSpec(),
        plan=StepsizePlan.constant(0.05),
        iterations=100,
        record_every=10,
        replications=3,
        seed=suite.seed,
    )
    payloads = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            run_experiment(config, out_dir=tmp)
            payloads.append((Path(tmp) / "aggregate.csv").read_bytes())
    identical = payloads[0] == payloads[1]
    return CheckResult(
        "determinism",
        identical,
        f"aggregate.csv byte-identical across reruns: {identical}",
    )


CHECKS = {
    "fixed_point": check_fixed_point,
    "sampler": check_sampler,
    "mean_direction": check_mean_direction,
    "lemma1": check_lemma1,
    "projection_error": check_projection_error_bound,
    "thm1_const": check_thm1_const,
    "thm1_invsqrt": check_thm1_invsqrt,
    "thm2_const": check_thm2_const,
    "thm2_harmonic": check_thm2_harmonic,
    "contraction": check_contraction,
    "single_agent": check_single_agent,
    "stepsize_monotonic": check_stepsize_monotonic,
    "determinism": check_determinism,
}


def run_checks(
    only: str | None = None,
    seed: int = DEFAULT_SEED,
    suite: AcceptanceSuite | None = None,
    names=None,
) -> list[CheckResult]:
    """Run the verification checks and return their results.

    `only` restricts to one check; otherwise `names` selects a subset
    (default: all checks, in order)."""
    if only is not None:
        names = [only]
    names = list(names) if names is not None else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s) {unknown}; choose from {sorted(CHECKS)}")
    suite = suite or AcceptanceSuite(seed=seed)
    return [CHECKS[name](suite) for name in names]
