"""
Consensus-based distributed TD(0) policy evaluation over time-varying
networks, with exact fixed-point oracles and finite-time bound verification.
"""

from .bounds import (
    InitMoments,
    RateConstants,
    compute_constants,
    compute_L,
    init_moments,
    lemma1_envelope,
    theorem1_asymptote,
    theorem1_envelope,
    theorem2_envelope,
)
from .engine import (
    ProjectionSet,
    RunState,
    StepDiagnostics,
    StepsizePlan,
    Trajectory,
    default_projection,
    initial_parameters,
    project_ball,
    project_rows,
    run,
    step,
)
from .mrp import (
    FeatureMap,
    InstanceOracles,
    InstanceParams,
    MarkovRewardProcess,
    bellman_operator,
    compute_A_b,
    compute_oracles,
    d_norm,
    exact_value_function,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    projection_Pi,
    save_instance,
    solve_theta_star,
    stationary_distribution,
)
from .network import (
    GraphSchedule,
    SpectralInfo,
    WeightSchedule,
    complete_schedule,
    consensus_error,
    metropolis_weights,
    random_connected_schedule,
    ring_schedule,
    spectral_eta,
    split_ring_schedule,
    verify_b_connectivity,
    weight_schedule,
)
from .sampling import (
    RngStream,
    SampleTuple,
    TupleSampler,
    martingale_check,
    sample_tuple,
    write_tuple_trace,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureMap",
    "GraphSchedule",
    "InitMoments",
    "InstanceOracles",
    "InstanceParams",
    "MarkovRewardProcess",
    "ProjectionSet",
    "RateConstants",
    "RngStream",
    "RunState",
    "SampleTuple",
    "SpectralInfo",
    "StepDiagnostics",
    "StepsizePlan",
    "Trajectory",
    "TupleSampler",
    "WeightSchedule",
    "bellman_operator",
    "complete_schedule",
    "compute_A_b",
    "compute_L",
    "compute_constants",
    "compute_oracles",
    "consensus_error",
    "d_norm",
    "default_projection",
    "exact_value_function",
    "generate_instance",
    "init_moments",
    "initial_parameters",
    "instance_from_dict",
    "instance_to_dict",
    "lemma1_envelope",
    "load_instance",
    "martingale_check",
    "metropolis_weights",
    "project_ball",
    "project_rows",
    "projection_Pi",
    "random_connected_schedule",
    "ring_schedule",
    "run",
    "sample_tuple",
    "save_instance",
    "solve_theta_star",
    "spectral_eta",
    "split_ring_schedule",
    "stationary_distribution",
    "step",
    "theorem1_asymptote",
    "theorem1_envelope",
    "theorem2_envelope",
    "verify_b_connectivity",
    "weight_schedule",
    "write_tuple_trace",
]
