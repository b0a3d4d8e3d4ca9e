"""
Time-varying communication graphs, consensus weights, and spectral constants.

A schedule is a cyclic sequence of undirected edge sets on N nodes; step k
uses edge set k mod period. Long-term information flow requires that the
union of edges over every window of B consecutive steps is connected. Each
edge set gets a lazy Metropolis weight matrix: symmetric, doubly stochastic,
with positive diagonal, so the average of the agents' parameters is
preserved and disagreement contracts.

The contraction rate is summarized by eta, built from the second largest
singular value of the weight matrices capped at 1 - 1/(2 N^3), and by
delta = eta^(1/B). eta = 0 (e.g. uniform all-to-all weights) is flagged as
degenerate: simulation still works, but the rate envelopes divide by eta
and refuse such schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateEtaError,
    DimensionMismatchError,
    InvalidEdgeError,
    NeverConnectedError,
)

Edge = tuple[int, int]

DOUBLY_STOCHASTIC_TOL = 1e-12
DEGENERATE_ETA_TOL = 1e-12


def _normalize_edges(edges, N: int) -> tuple[Edge, ...]:
    out = []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise InvalidEdgeError(f"self-loop ({u},{v}) not allowed")
        if not (0 <= u < N and 0 <= v < N):
            raise InvalidEdgeError(f"edge ({u},{v}) out of range for N={N}")
        out.append((min(u, v), max(u, v)))
    return tuple(sorted(set(out)))


def _is_connected(edges: tuple[Edge, ...], N: int) -> bool:
    if N == 1:
        return True
    adj = [[] for _ in range(N)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * N
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                count += 1
                stack.append(w)
    return count == N


@dataclass(frozen=True)
class GraphSchedule:
    """Cyclic sequence of undirected edge sets with a claimed window B."""

    N: int
    edge_sets: tuple[tuple[Edge, ...], ...]
    B: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if len(self.edge_sets) < 1:
            raise ValueError("schedule needs at least one edge set")
        if self.B < 1:
            raise ValueError("B must be positive")
        object.__setattr__(
            self,
            "edge_sets",
            tuple(_normalize_edges(es, self.N) for es in self.edge_sets),
        )

    @property
    def period(self) -> int:
        return len(self.edge_sets)

    def edges_at(self, k: int) -> tuple[Edge, ...]:
        return self.edge_sets[k % self.period]


def verify_b_connectivity(schedule: GraphSchedule) -> int:
    """Smallest window length B' whose every union of consecutive edge sets
    is connected.

    Windows over two periods suffice for a cyclic schedule. Raises
    NeverConnectedError when even the union of all edge sets is
    disconnected, and ValueError when the smallest valid window exceeds the
    schedule's claimed B.
    """
    full_union = tuple(e for es in schedule.edge_sets for e in es)
    if not _is_connected(_normalize_edges(full_union, schedule.N), schedule.N):
        raise NeverConnectedError("union of all edge sets is disconnected")
    for window in range(1, 2 * schedule.period + 1):
        ok = True
        for start in range(schedule.period):
            edges = tuple(
                e
                for i in range(window)
                for e in schedule.edge_sets[(start + i) % schedule.period]
            )
            if not _is_connected(_normalize_edges(edges, schedule.N), schedule.N):
                ok = False
                break
        if ok:
            if window > schedule.B:
                raise ValueError(
                    f"smallest valid window {window} exceeds claimed B={schedule.B}"
                )
            return window
    raise NeverConnectedError(
        f"no window up to {2 * schedule.period} has connected unions"
    )


def metropolis_weights(edges, N: int, lazy: float = 0.0) -> np.ndarray:
    """Lazy Metropolis weight matrix for one undirected edge set.

    Base weights w_uv = 1/(1 + max(deg_u, deg_v)) on edges with the diagonal
    absorbing the remainder, then W = lazy*I + (1-lazy)*W_base. Symmetric and
    doubly stochastic; with lazy > 0 every diagonal entry is >= lazy.
    """
    if not 0.0 <= lazy < 1.0:
        raise ValueError(f"lazy must lie in [0, 1), got {lazy}")
    edges = _normalize_edges(edges, N)
    deg = np.zeros(N, dtype=np.int64)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    W = np.zeros((N, N))
    for u, v in edges:
        w = 1.0 / (1.0 + max(deg[u], deg[v]))
        W[u, v] = w
        W[v, u] = w
    for i in range(N):
        W[i, i] = 1.0 - W[i].sum()
    return lazy * np.eye(N) + (1.0 - lazy) * W


@dataclass(frozen=True)
class WeightSchedule:
    """One doubly stochastic matrix per edge set, plus the positive-entry
    floor beta."""

    schedule: GraphSchedule
    matrices: tuple[np.ndarray, ...]
    beta: float

    @property
    def N(self) -> int:
        return self.schedule.N

    @property
    def period(self) -> int:
        return self.schedule.period

    def at(self, k: int) -> np.ndarray:
        return self.matrices[k % self.period]


def weight_schedule(schedule: GraphSchedule, lazy: float = 0.25) -> WeightSchedule:
    """Build lazy Metropolis matrices for every edge set and validate them."""
    mats = []
    beta = np.inf
    for es in schedule.edge_sets:
        W = metropolis_weights(es, schedule.N, lazy=lazy)
        validate_weight_matrix(W, es, schedule.N)
        positive = W[W > 0]
        beta = min(beta, float(positive.min()))
        W.setflags(write=False)
        mats.append(W)
    return WeightSchedule(schedule=schedule, matrices=tuple(mats), beta=beta)


def validate_weight_matrix(W: np.ndarray, edges, N: int):
    """Check symmetry, double stochasticity, and the sparsity pattern."""
    if W.shape != (N, N):
        raise DimensionMismatchError(f"W must be ({N},{N}), got {W.shape}")
    if np.max(np.abs(W - W.T)) > DOUBLY_STOCHASTIC_TOL:
        raise ValueError("weight matrix is not symmetric")
    if np.any(W < 0):
        raise ValueError("weight matrix has negative entries")
    if np.max(np.abs(W.sum(axis=0) - 1.0)) > DOUBLY_STOCHASTIC_TOL:
        raise ValueError("columns do not sum to 1")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > DOUBLY_STOCHASTIC_TOL:
        raise ValueError("rows do not sum to 1")
    allowed = np.eye(N, dtype=bool)
    for u, v in _normalize_edges(edges, N):
        allowed[u, v] = True
        allowed[v, u] = True
    if np.any((W > 0) & ~allowed):
        raise ValueError("positive entry outside adjacency + diagonal")


@dataclass(frozen=True)
class SpectralInfo:
    """Contraction constants of a weight schedule over windows of length B."""

    sigma2_sup: float
    eta: float
    delta: float
    B: int
    degenerate: bool


def spectral_eta(weights: WeightSchedule, B: int) -> SpectralInfo:
    """Spectral constants: eta = min(1 - 1/(2 N^3), sup_k sigma_2(W(k))) and
    delta = eta^(1/B).

    sigma_2 is taken from a full SVD of each matrix. A schedule whose eta
    falls below 1e-12 (e.g. exact uniform averaging) is flagged degenerate;
    delta is reported as 0 in that case.
    """
    N = weights.N
    sigma2 = 0.0
    for W in weights.matrices:
        svals = np.linalg.svd(W, compute_uv=False)
        if len(svals) > 1:
            sigma2 = max(sigma2, float(svals[1]))
    eta = min(1.0 - 1.0 / (2.0 * N**3), sigma2)
    degenerate = eta < DEGENERATE_ETA_TOL
    delta = 0.0 if degenerate else float(eta ** (1.0 / B))
    return SpectralInfo(
        sigma2_sup=sigma2, eta=eta, delta=delta, B=B, degenerate=degenerate
    )


def require_nondegenerate(spectral: SpectralInfo):
    if spectral.degenerate:
        raise DegenerateEtaError(
            "schedule has eta = 0; rate envelopes are undefined for it"
        )


def consensus_error(Theta: np.ndarray) -> float:
    """Frobenius norm of the deviation from the average row,
    ||Theta - 1 mean^T||_F."""
    Theta = np.asarray(Theta, dtype=float)
    if Theta.ndim != 2:
        raise DimensionMismatchError(f"Theta must be 2-D, got shape {Theta.shape}")
    dev = Theta - Theta.mean(axis=0, keepdims=True)
    return float(np.sqrt((dev * dev).sum()))


# ---------------------------------------------------------------------------
# Built-in schedule generators.


def complete_schedule(N: int) -> GraphSchedule:
    edges = tuple((u, v) for u in range(N) for v in range(u + 1, N))
    return GraphSchedule(N=N, edge_sets=(edges,), B=1)


def ring_schedule(N: int) -> GraphSchedule:
    if N < 3:
        raise ValueError("ring needs N >= 3")
    edges = tuple((i, (i + 1) % N) for i in range(N))
    return GraphSchedule(N=N, edge_sets=(edges,), B=1)


def split_ring_schedule(N: int, parts: int) -> GraphSchedule:
    """Ring edges dealt round-robin into `parts` alternating edge sets.

    Each set alone is disconnected (for parts >= 2 and N >= 4) but any
    `parts` consecutive sets union to the full ring, so the schedule is
    B-connected with B = parts.
    """
    if parts < 1:
        raise ValueError("parts must be positive")
    ring = [(i, (i + 1) % N) for i in range(N)]
    sets = tuple(tuple(ring[j::parts]) for j in range(parts))
    return GraphSchedule(N=N, edge_sets=sets, B=parts)


def random_connected_schedule(
    N: int, seed: int, p: float = 0.5, max_tries: int = 100
) -> GraphSchedule:
    """Static Erdos-Renyi graph, redrawn until connected."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    for _ in range(max_tries):
        mask = rng.random((N, N)) < p
        edges = tuple(
            (u, v) for u in range(N) for v in range(u + 1, N) if mask[u, v]
        )
        if _is_connected(edges, N):
            return GraphSchedule(N=N, edge_sets=(edges,), B=1)
    raise NeverConnectedError(f"no connected draw in {max_tries} tries at p={p}")
