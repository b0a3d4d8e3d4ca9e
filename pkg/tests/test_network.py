import numpy as np
import pytest

from consensus_td import (
    GraphSchedule,
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
from consensus_td.errors import (
    DimensionMismatchError,
    InvalidEdgeError,
    NeverConnectedError,
)
from consensus_td.network import validate_weight_matrix


# ---------------------------------------------------------------------------
# metropolis_weights


def test_metropolis_two_nodes():
    W = metropolis_weights([(0, 1)], 2, lazy=0.0)
    np.testing.assert_allclose(W, [[0.5, 0.5], [0.5, 0.5]])


def test_metropolis_triangle():
    W = metropolis_weights([(0, 1), (1, 2), (2, 0)], 3, lazy=0.0)
    np.testing.assert_allclose(W, np.full((3, 3), 1.0 / 3.0))


def test_metropolis_star_sums():
    edges = [(0, 1), (0, 2), (0, 3)]
    W = metropolis_weights(edges, 4, lazy=0.25)
    np.testing.assert_allclose(W.sum(axis=0), np.ones(4), atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), np.ones(4), atol=1e-12)
    assert np.min(np.diag(W)) >= 0.25


def test_metropolis_rejects_bad_edges():
    with pytest.raises(InvalidEdgeError):
        metropolis_weights([(0, 0)], 2)
    with pytest.raises(InvalidEdgeError):
        metropolis_weights([(0, 5)], 3)


# ---------------------------------------------------------------------------
# verify_b_connectivity


def test_static_connected_window_one():
    assert verify_b_connectivity(ring_schedule(6)) == 1
    assert verify_b_connectivity(complete_schedule(4)) == 1


def test_split_ring_window():
    sched = split_ring_schedule(5, parts=2)
    # Each half of the ring's edges is disconnected; the union is the ring.
    assert verify_b_connectivity(sched) == 2


def test_isolated_node_never_connected():
    sched = GraphSchedule(N=4, edge_sets=(((0, 1), (1, 2)), ((0, 2),)), B=2)
    with pytest.raises(NeverConnectedError):
        verify_b_connectivity(sched)


def test_claimed_window_too_small():
    ring = [(i, (i + 1) % 5) for i in range(5)]
    sched = GraphSchedule(N=5, edge_sets=(tuple(ring[0::2]), tuple(ring[1::2])), B=1)
    with pytest.raises(ValueError):
        verify_b_connectivity(sched)


# ---------------------------------------------------------------------------
# spectral_eta


def test_uniform_weights_degenerate():
    # Complete-graph Metropolis with no laziness is exact uniform averaging:
    # rank one, sigma_2 = 0, flagged degenerate.
    ws = weight_schedule(complete_schedule(4), lazy=0.0)
    np.testing.assert_allclose(ws.matrices[0], np.full((4, 4), 0.25))
    info = spectral_eta(ws, B=1)
    assert info.sigma2_sup == pytest.approx(0.0, abs=1e-12)
    assert info.degenerate


def test_two_node_spectral_oracle():
    # W = [[3/4, 1/4], [1/4, 3/4]] has singular values {1, 1/2}, so
    # eta = min(1 - 1/16, 1/2) = 1/2 and delta = eta at B = 1.
    sched = GraphSchedule(N=2, edge_sets=(((0, 1),),), B=1)
    ws = weight_schedule(sched, lazy=0.5)
    np.testing.assert_allclose(ws.matrices[0], [[0.75, 0.25], [0.25, 0.75]])
    info = spectral_eta(ws, B=1)
    assert info.eta == pytest.approx(0.5, abs=1e-12)
    assert info.delta == pytest.approx(0.5, abs=1e-12)
    assert not info.degenerate


def test_ring_sigma2_cross_check():
    # Independent oracle: sigma_2(W)^2 is the second largest eigenvalue of
    # W^T W.
    ws = weight_schedule(ring_schedule(5), lazy=0.0)
    W = ws.matrices[0]
    info = spectral_eta(ws, B=1)
    eigs = np.sort(np.linalg.eigvalsh(W.T @ W))[::-1]
    assert info.sigma2_sup == pytest.approx(np.sqrt(eigs[1]), abs=1e-12)
    assert info.eta == pytest.approx(min(1 - 1 / (2 * 5**3), info.sigma2_sup))


# ---------------------------------------------------------------------------
# consensus_error


def test_consensus_error_identical_rows():
    Theta = np.tile([1.0, 2.0, 3.0], (4, 1))
    assert consensus_error(Theta) == 0.0


def test_consensus_error_hand_value():
    Theta = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert consensus_error(Theta) == pytest.approx(np.sqrt(2.0), abs=1e-14)


def test_consensus_error_q_idempotent(rng):
    Theta = rng.normal(size=(5, 3))
    Q_Theta = Theta - Theta.mean(axis=0, keepdims=True)
    assert consensus_error(Q_Theta) == pytest.approx(consensus_error(Theta), rel=1e-12)


def test_consensus_error_dimension():
    with pytest.raises(DimensionMismatchError):
        consensus_error(np.zeros(3))


# ---------------------------------------------------------------------------
# weight schedule invariants and window contraction


@pytest.mark.parametrize(
    "sched,lazy",
    [
        (ring_schedule(5), 0.25),
        (split_ring_schedule(6, 2), 0.25),
        (complete_schedule(4), 0.25),
        (random_connected_schedule(7, seed=13), 0.3),
    ],
)
def test_weight_matrices_valid(sched, lazy):
    ws = weight_schedule(sched, lazy=lazy)
    for W, edges in zip(ws.matrices, sched.edge_sets):
        validate_weight_matrix(W, edges, sched.N)
        positive = W[W > 0]
        assert positive.min() >= ws.beta - 1e-15
        np.testing.assert_allclose(W, W.T, atol=1e-15)


def test_validate_rejects_broken_stochasticity():
    W = metropolis_weights([(0, 1)], 2, lazy=0.0).copy()
    W[0, 0] += 1e-3
    with pytest.raises(ValueError):
        validate_weight_matrix(W, [(0, 1)], 2)


@pytest.mark.parametrize("sched", [ring_schedule(5), split_ring_schedule(5, 2)])
def test_window_contraction(sched, rng):
    # Applying any B consecutive weight matrices to the deviation QTheta
    # shrinks its Frobenius norm by at least the factor eta.
    ws = weight_schedule(sched, lazy=0.25)
    info = spectral_eta(ws, B=sched.B)
    for start in range(sched.period):
        for _ in range(100 // sched.period + 1):
            Theta = rng.normal(size=(sched.N, 3))
            Q_Theta = Theta - Theta.mean(axis=0, keepdims=True)
            X = Q_Theta
            for j in range(sched.B):
                X = ws.at(start + j) @ X
            assert np.linalg.norm(X) <= (info.eta + 1e-9) * np.linalg.norm(Q_Theta)
