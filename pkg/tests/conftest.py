import numpy as np
import pytest

from consensus_td import (
    InstanceParams,
    compute_oracles,
    default_projection,
    generate_instance,
    ring_schedule,
    spectral_eta,
    weight_schedule,
)


@pytest.fixture(scope="session")
def desk_instance():
    """Default desk-scale instance shared by read-only tests."""
    mrp, feats = generate_instance(
        InstanceParams(n=20, K=5, N=5, gamma=0.9), seed=12345
    )
    return mrp, feats


@pytest.fixture(scope="session")
def desk_oracles(desk_instance):
    mrp, feats = desk_instance
    return compute_oracles(mrp, feats)


@pytest.fixture(scope="session")
def desk_network():
    sched = ring_schedule(5)
    weights = weight_schedule(sched, lazy=0.25)
    return sched, weights, spectral_eta(weights, sched.B)


@pytest.fixture(scope="session")
def desk_projection(desk_oracles):
    return default_projection(desk_oracles.theta_star)


@pytest.fixture()
def rng():
    return np.random.default_rng(987654321)
