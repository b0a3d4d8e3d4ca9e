"""
Experiment runner: seeded replications, aggregate statistics, envelope
comparison, and report files.

One experiment = one instance, one weight schedule, one stepsize plan, M
replications. Replication r draws from RngStream(seed, stream_id=r), so the
set of trajectories is a pure function of the config and runs are bitwise
reproducible. Outputs per run directory:

    instance.json       the instance actually used
    config.json         config echo
    traj_rep{r:03d}.csv one trajectory per replication
    aggregate.csv       per-(k, agent) means and standard errors
    envelopes.csv       envelope curves aligned with the record grid
    report.json         constants, gate results, warnings

Envelope gates are one-sided statistical checks: the empirical mean plus
two standard errors must stay below the theoretical curve. For degenerate
schedules (eta = 0) the trajectories are still produced but the envelope
file is omitted and a warning is recorded.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import (
    InitMoments,
    RateConstants,
    compute_constants,
    init_moments,
    lemma1_envelope,
    theorem1_envelope,
    theorem2_envelope,
)
from .config import ExperimentConfig
from .engine import (
    ProjectionSet,
    StepsizePlan,
    Trajectory,
    default_projection,
    initial_parameters,
    run,
)
from .errors import (
    ConfigError,
    DegenerateEtaError,
    NotPositiveDefiniteError,
    StepsizeOutOfRangeError,
)
from .mrp import FeatureMap, InstanceOracles, MarkovRewardProcess, compute_oracles, save_instance
from .network import SpectralInfo, spectral_eta, verify_b_connectivity, weight_schedule
from .sampling import INIT_SUBSTREAM, RngStream


def default_checkpoints(iterations: int, recorded_ks: np.ndarray) -> list[int]:
    """{10, 100, 1000, iterations} intersected with the record grid."""
    wanted = {10, 100, 1000, iterations}
    recorded = set(int(k) for k in recorded_ks)
    return sorted(wanted & recorded)


@dataclass
class GateResult:
    name: str
    k: int
    agent: int
    mean: float
    se: float
    envelope: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "agent": self.agent,
            "mean": self.mean,
            "se": self.se,
            "envelope": self.envelope,
            "pass": self.passed,
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mrp: MarkovRewardProcess
    feats: FeatureMap
    oracles: InstanceOracles
    spectral: SpectralInfo
    proj: ProjectionSet
    moments: InitMoments
    constants: RateConstants | None
    trajectories: list[Trajectory]
    gates: list[GateResult]
    lemma1_pass: bool
    lemma1_max_ratio: float
    projection_error_pass: bool
    projection_error_max_ratio: float
    warnings: list[str]

    @property
    def all_passed(self) -> bool:
        return (
            all(g.passed for g in self.gates)
            and self.lemma1_pass
            and self.projection_error_pass
        )


def mean_se(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error across replications."""
    m = values.shape[axis]
    mean = values.mean(axis=axis)
    if m < 2:
        return mean, np.zeros_like(mean)
    se = values.std(axis=axis, ddof=1) / np.sqrt(m)
    return mean, se


def replication_stream(seed: int, rep: int) -> RngStream:
    return RngStream(seed=seed, stream_id=rep)


def draw_initializations(
    cfg_seed: int, replications: int, N: int, K: int, radius: float
) -> list[np.ndarray]:
    """The exact theta(0) draws each replication's run would make."""
    return [
        initial_parameters(
            replication_stream(cfg_seed, r).substream(INIT_SUBSTREAM), N, K, radius
        )
        for r in range(replications)
    ]


def check_lemma1_pathwise(
    trajectories: list[Trajectory],
    constants: RateConstants,
    plan: StepsizePlan,
    k_cap: int = 10**4,
) -> tuple[bool, float]:
    """Path-wise consensus-envelope dominance on every recorded k <= k_cap.

    Returns (all_pass, max observed/envelope ratio)."""
    worst = 0.0
    for traj in trajectories:
        mask = traj.ks <= k_cap
        if not np.any(mask):
            continue
        env = lemma1_envelope(traj.ks[mask], constants, traj.theta0_norm, plan)
        ratio = np.max(traj.consensus_err[mask] / env)
        worst = max(worst, float(ratio))
    return worst <= 1.0 + 1e-9, worst


def check_projection_error(
    trajectories: list[Trajectory], constants: RateConstants
) -> tuple[bool, float]:
    """Path-wise ||e_v(k)|| <= L_v alpha(k), tracked at every step."""
    worst = 0.0
    for traj in trajectories:
        ratio = np.max(traj.final_max_e_over_alpha() / constants.L_v)
        worst = max(worst, float(ratio))
    return worst <= 1.0 + 1e-12, worst


def _stat_matrix(trajectories: list[Trajectory], attr: str) -> np.ndarray:
    """(reps, records, N) stack of a per-agent trajectory column."""
    return np.stack([getattr(t, attr) for t in trajectories])


def envelope_gates(
    trajectories: list[Trajectory],
    constants: RateConstants,
    plan: StepsizePlan,
    checkpoints: list[int],
    warnings_out: list[str],
) -> list[GateResult]:
    """One-sided mean + 2 SE gates for the envelopes matching the plan."""
    gates: list[GateResult] = []
    ks = trajectories[0].ks
    idx = {int(k): i for i, k in enumerate(ks)}

    def add_gates(name, stat, env_fn, points):
        mean, se = mean_se(stat)  # (records, N)
        for k in points:
            i = idx[k]
            env = env_fn(k)
            for v in range(stat.shape[2]):
                gates.append(
                    GateResult(
                        name=name,
                        k=k,
                        agent=v,
                        mean=float(mean[i, v]),
                        se=float(se[i, v]),
                        envelope=float(env),
                        passed=bool(mean[i, v] + 2.0 * se[i, v] <= env),
                    )
                )

    if plan.kind in ("constant", "inv_sqrt"):
        add_gates(
            f"value_error_{plan.kind}",
            _stat_matrix(trajectories, "dnorm_sq_hat"),
            lambda k: theorem1_envelope(k, constants, plan),
            checkpoints,
        )
    if plan.kind == "constant":
        try:
            theorem2_envelope(0, constants, plan, which="raw_iterate")
        except StepsizeOutOfRangeError as exc:
            warnings_out.append(f"parameter-error envelope skipped: {exc}")
        else:
            add_gates(
                "param_error_constant",
                _stat_matrix(trajectories, "dist_theta") ** 2,
                lambda k: theorem2_envelope(k, constants, plan, which="raw_iterate"),
                checkpoints,
            )
    if plan.kind == "harmonic":
        points = [k for k in checkpoints if k >= 100]
        skipped = [k for k in checkpoints if k < 100]
        if skipped:
            warnings_out.append(
                f"harmonic envelope checked only for k >= 100; skipped {skipped}"
            )
        add_gates(
            "param_error_harmonic",
            _stat_matrix(trajectories, "dist_theta_hat") ** 2,
            lambda k: theorem2_envelope(k, constants, plan, which="averaged"),
            points,
        )
    return gates


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> ExperimentResult:
    """Execute all replications, evaluate gates, optionally write outputs."""
    warn_list: list[str] = []
    mrp, feats, inst_seed = config.instance.build()
    oracles = compute_oracles(mrp, feats)
    schedule = config.schedule.build()
    if schedule.N != mrp.N:
        raise ConfigError(
            f"schedule node count {schedule.N} differs from agent count {mrp.N}"
        )
    verify_b_connectivity(schedule)
    weights = weight_schedule(schedule, lazy=config.schedule.lazy)
    spectral = spectral_eta(weights, schedule.B)
    if config.projection_radius is not None:
        proj = ProjectionSet(radius=config.projection_radius)
        if proj.radius < np.linalg.norm(oracles.theta_star):
            raise ConfigError("projection radius excludes the fixed point")
    else:
        proj = default_projection(oracles.theta_star)

    theta0s = draw_initializations(
        config.seed, config.replications, mrp.N, feats.K, proj.radius
    )
    moments = init_moments(theta0s, oracles.theta_star)
    constants: RateConstants | None = None
    try:
        constants = compute_constants(mrp, oracles, proj, spectral, moments)
        if constants.sigma_discrepancy():
            warn_list.append(
                f"lambda_min_sym={constants.lambda_min_sym:.6g} is below "
                f"sigma_min={constants.sigma_min:.6g}; envelopes use sigma_min"
            )
    except DegenerateEtaError:
        warn_list.append("schedule is degenerate (eta = 0); envelopes omitted")
    except NotPositiveDefiniteError:
        warn_list.append(
            "steady-state matrix is not positive definite; envelopes omitted"
        )

    trajectories = [
        run(
            mrp,
            feats,
            oracles,
            weights,
            config.plan,
            proj,
            config.iterations,
            replication_stream(config.seed, r),
            record_every=config.record_every,
            theta0=theta0s[r],
        )
        for r in range(config.replications)
    ]

    gates: list[GateResult] = []
    lemma1_pass, lemma1_ratio = True, 0.0
    proj_pass, proj_ratio = True, 0.0
    if constants is not None:
        checkpoints = default_checkpoints(config.iterations, trajectories[0].ks)
        gates = envelope_gates(
            trajectories, constants, config.plan, checkpoints, warn_list
        )
        lemma1_pass, lemma1_ratio = check_lemma1_pathwise(
            trajectories, constants, config.plan
        )
        proj_pass, proj_ratio = check_projection_error(trajectories, constants)

    result = ExperimentResult(
        config=config,
        mrp=mrp,
        feats=feats,
        oracles=oracles,
        spectral=spectral,
        proj=proj,
        moments=moments,
        constants=constants,
        trajectories=trajectories,
        gates=gates,
        lemma1_pass=lemma1_pass,
        lemma1_max_ratio=lemma1_ratio,
        projection_error_pass=proj_pass,
        projection_error_max_ratio=proj_ratio,
        warnings=warn_list,
    )
    if out_dir is not None:
        write_outputs(result, Path(out_dir), inst_seed)
    for w in warn_list:
        _warnings.warn(w, RuntimeWarning, stacklevel=2)
    return result


def write_aggregate_csv(path, trajectories: list[Trajectory]):
    ks = trajectories[0].ks
    cols = [
        "consensus_err",
        "dist_theta",
        "dist_theta_hat",
        "dnorm_sq_hat",
        "max_hM_norm",
        "max_e_over_alpha",
    ]
    stats = {}
    for c in cols:
        data = np.stack([getattr(t, c) for t in trajectories])
        if data.ndim == 2:  # network-level column: replicate across agents
            data = data[:, :, None].repeat(trajectories[0].num_agents, axis=2)
        stats[c] = mean_se(data)
    header = "k,agent," + ",".join(f"mean_{c},se_{c}" for c in cols)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, k in enumerate(ks):
            for v in range(trajectories[0].num_agents):
                fields = [str(int(k)), str(v)]
                for c in cols:
                    mean, se = stats[c]
                    fields.append(f"{mean[i, v]:.17g}")
                    fields.append(f"{se[i, v]:.17g}")
                fh.write(",".join(fields) + "\n")


def write_envelopes_csv(
    path,
    ks: np.ndarray,
    theta0_norm: float,
    constants: RateConstants,
    plan: StepsizePlan,
):
    """Envelope curves on the record grid.

    Callers pass the largest ||Theta(0)|| across replications so the exported
    lemma1_rhs dominates every replication path-wise. Envelope columns that
    do not apply to the plan are left empty.
    """
    lemma1 = lemma1_envelope(ks, constants, theta0_norm, plan)
    thm1 = thm2 = None
    if plan.kind in ("constant", "inv_sqrt"):
        thm1 = theorem1_envelope(ks, constants, plan)
    if plan.kind == "constant":
        try:
            thm2 = theorem2_envelope(ks, constants, plan, which="raw_iterate")
        except StepsizeOutOfRangeError:
            thm2 = None
    elif plan.kind == "harmonic":
        thm2 = theorem2_envelope(ks, constants, plan, which="averaged")
    with open(path, "w") as fh:
        fh.write("k,lemma1_rhs,thm1_rhs,thm2_rhs\n")
        for i, k in enumerate(ks):
            t1 = f"{thm1[i]:.17g}" if thm1 is not None else ""
            t2 = f"{thm2[i]:.17g}" if thm2 is not None else ""
            fh.write(f"{int(k)},{lemma1[i]:.17g},{t1},{t2}\n")


def constants_dict(
    spectral: SpectralInfo,
    oracles: InstanceOracles,
    proj: ProjectionSet,
    moments: InitMoments,
    constants: RateConstants | None,
    plan: StepsizePlan,
) -> dict:
    out = {
        "eta": spectral.eta,
        "delta": spectral.delta,
        "B": spectral.B,
        "sigma2_sup": spectral.sigma2_sup,
        "degenerate": spectral.degenerate,
        "sigma_min": oracles.sigma_min,
        "sigma_max": oracles.sigma_max,
        "lambda_min_sym": oracles.lambda_min_sym,
        "projection_radius": proj.radius,
        "E_theta0_dist_sq": moments.E_theta0_dist_sq,
        "E_Theta0_norm": moments.E_Theta0_norm,
        "E_Theta0_norm_sq": moments.E_Theta0_norm_sq,
    }
    if constants is not None:
        out.update(
            {
                "L": constants.L,
                "L_v": constants.L_v.tolist(),
                "R0": constants.R0,
                "beta0": constants.beta0(plan.at(0)),
                "beta1": constants.beta1,
                "beta2": constants.beta2,
                "beta3": constants.beta3,
                "sigma_discrepancy": constants.sigma_discrepancy(),
            }
        )
        if plan.kind == "constant" and plan.param < 1.0 / constants.sigma_min:
            out["rho"] = constants.rho(plan.param)
    return out


def report_dict(result: ExperimentResult) -> dict:
    return {
        "format_version": "1",
        "config": result.config.to_dict(),
        "constants": constants_dict(
            result.spectral,
            result.oracles,
            result.proj,
            result.moments,
            result.constants,
            result.config.plan,
        ),
        "gates": [g.to_dict() for g in result.gates],
        "lemma1_pathwise": {
            "pass": result.lemma1_pass,
            "max_ratio": result.lemma1_max_ratio,
        },
        "projection_error": {
            "pass": result.projection_error_pass,
            "max_ratio": result.projection_error_max_ratio,
        },
        "all_passed": result.all_passed,
        "warnings": result.warnings,
    }


def write_outputs(result: ExperimentResult, out_dir: Path, inst_seed: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_instance(out_dir / "instance.json", result.mrp, result.feats, inst_seed)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(result.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r, traj in enumerate(result.trajectories):
        traj.write_csv(out_dir / f"traj_rep{r:03d}.csv")
    write_aggregate_csv(out_dir / "aggregate.csv", result.trajectories)
    if result.constants is not None:
        write_envelopes_csv(
            out_dir / "envelopes.csv",
            result.trajectories[0].ks,
            max(t.theta0_norm for t in result.trajectories),
            result.constants,
            result.config.plan,
        )
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
