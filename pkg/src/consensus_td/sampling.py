"""
The i.i.d. tuple oracle: s ~ pi, s' ~ P(s, .), r_v = R_v(s, s') for all v.

Every agent observes the same transition (s, s'); only the rewards differ.
Draws use inverse-CDF lookups on precomputed cumulative tables, so a given
(seed, stream_id) pair reproduces the exact same tuple sequence on any run.
Streams are derived from numpy SeedSequence spawn keys: one stream per
replication, with fixed substream slots per subsystem (0 = initialization,
1 = tuple draws), so adding replications never perturbs existing ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .mrp import FeatureMap, InstanceOracles, MarkovRewardProcess

INIT_SUBSTREAM = 0
TUPLE_SUBSTREAM = 1


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        )

    def substream(self, *path: int) -> np.random.Generator:
        """Independent generator for a fixed slot under this stream."""
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *path))
        )


@dataclass(frozen=True)
class SampleTuple:
    """One observation (s, s', r) shared by all agents; r has length N."""

    s: int
    s_next: int
    r: np.ndarray


class TupleSampler:
    """Inverse-CDF sampler over the stationary distribution and P rows."""

    def __init__(self, mrp: MarkovRewardProcess, pi: np.ndarray):
        self.mrp = mrp
        self.cum_pi = np.cumsum(pi)
        self.cum_rows = np.cumsum(mrp.P, axis=1)
        # Guard the top of each CDF against cumulative roundoff.
        self.cum_pi[-1] = 1.0
        self.cum_rows[:, -1] = 1.0

    def draw(self, gen: np.random.Generator) -> SampleTuple:
        s = int(np.searchsorted(self.cum_pi, gen.random(), side="right"))
        s_next = int(np.searchsorted(self.cum_rows[s], gen.random(), side="right"))
        return SampleTuple(s=s, s_next=s_next, r=self.mrp.rewards[:, s, s_next])

    def draw_batch(
        self, gen: np.random.Generator, count: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized draws: (s, s_next, r) with r of shape (count, N)."""
        s = np.searchsorted(self.cum_pi, gen.random(count), side="right")
        u = gen.random(count)
        s_next = np.empty(count, dtype=np.int64)
        # Chunked row-wise inverse CDF keeps the (chunk, n) buffer small.
        chunk = 1 << 16
        for lo in range(0, count, chunk):
            hi = min(lo + chunk, count)
            rows = self.cum_rows[s[lo:hi]]
            s_next[lo:hi] = (rows > u[lo:hi, None]).argmax(axis=1)
        r = self.mrp.rewards[:, s, s_next].T
        return s, s_next, r


def sample_tuple(
    oracles: InstanceOracles, mrp: MarkovRewardProcess, gen: np.random.Generator
) -> SampleTuple:
    """Draw one tuple. For hot loops build a TupleSampler once instead."""
    return TupleSampler(mrp, oracles.pi).draw(gen)


def martingale_check(
    oracles: InstanceOracles,
    mrp: MarkovRewardProcess,
    feats: FeatureMap,
    theta: np.ndarray,
    samples: int,
    gen: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean of the noise term M_v at a fixed parameter theta.

    M_v = d_v phi(s) - (b_v - A theta), with d_v the sampled temporal
    difference at theta. Returns (mean, se), both (N, K); the mean of each
    component is zero in expectation, and callers gate |mean| <= 4 se.
    """
    sampler = TupleSampler(mrp, oracles.pi)
    s, s_next, r = sampler.draw_batch(gen, samples)
    Phi = feats.Phi
    g = mrp.gamma * Phi[s_next] - Phi[s]  # (T, K)
    d = r.T + (g @ theta)[None, :]  # (N, T)
    h = oracles.b - oracles.A @ theta  # (N, K)
    # M samples: d_v(t) phi(s_t) - h_v, accumulated without materializing (N,T,K).
    phi_s = Phi[s]
    first = (d @ phi_s) / samples  # E[d phi] per component
    sq = (d**2) @ (phi_s**2) / samples  # E[(d phi)^2] per component
    var = np.maximum(sq - first**2, 0.0)
    se = np.sqrt(var / samples)
    return first - h, se


def write_tuple_trace(path, tuples: Iterable[SampleTuple], N: int):
    """Audit dump: CSV with columns k, s, s_next, r_1..r_N."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "s", "s_next"] + [f"r_{v + 1}" for v in range(N)])
        for k, t in enumerate(tuples):
            writer.writerow([k, t.s, t.s_next] + [f"{x:.17g}" for x in t.r])
