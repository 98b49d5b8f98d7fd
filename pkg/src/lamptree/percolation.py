"""Bernoulli site percolation on tree balls.

Single configurations are handled by :func:`sample_config` and
:func:`extract_cluster`; the Monte Carlo estimators work on whole batches of
configurations stored as ``(samples, vertices)`` boolean matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from . import rng as rngmod
from .tree import TreeBall, build_ball

P_OPEN = 0.5


@dataclass(frozen=True, eq=False)
class PercolationConfig:
    ball: TreeBall
    open: np.ndarray
    seed_record: tuple[int, int] | None = None


@dataclass(frozen=True, eq=False)
class ClusterGraph:
    """Open cluster of the arena root, listed breadth-first (root at position 0)."""

    ball: TreeBall
    vertices: np.ndarray
    adjacency: list[np.ndarray]
    truncated_at_boundary: bool
    root_pos: int = 0

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def member(self) -> np.ndarray:
        m = np.zeros(self.ball.size, dtype=bool)
        m[self.vertices] = True
        return m


@dataclass(frozen=True, eq=False)
class WitnessSet:
    """Dense-ball indicator on the inner ball B(o, R - r).

    Vertices outside the inner ball have no membership value at all.
    """

    ball: TreeBall
    r: int
    a: float
    member: np.ndarray
    counts: np.ndarray

    @property
    def size(self) -> int:
        return int(self.member.sum())

    def contains(self, v: int) -> bool:
        if v >= len(self.member):
            raise IndexError(f"witness membership undefined outside B(o,{self.ball.R - self.r})")
        return bool(self.member[v])


@dataclass(frozen=True)
class DenseBallEstimate:
    d: int
    r: int
    a: float
    samples: int
    hits: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int
    mean_sphere_counts: tuple[float, ...] = ()


def sample_config(
    ball: TreeBall, rng: np.random.Generator, p: float = P_OPEN, seed_record: tuple[int, int] | None = None
) -> PercolationConfig:
    return PercolationConfig(ball, rng.random(ball.size) < p, seed_record)


def config_from_seed(ball: TreeBall, seed: int, stream_id: int = 0, p: float = P_OPEN) -> PercolationConfig:
    return sample_config(ball, rngmod.stream(seed, stream_id), p, (seed, stream_id))


def sample_open_batch(ball: TreeBall, rng: np.random.Generator, size: int, p: float = P_OPEN) -> np.ndarray:
    # vertex-major draws: restricting a larger ball to B(o, R) reproduces the
    # configurations sampled on B(o, R) itself for the same stream and batch size
    return np.ascontiguousarray((rng.random((ball.size, size)) < p).T)


def root_cluster_batch(ball: TreeBall, open_: np.ndarray) -> np.ndarray:
    """Membership in the root cluster for each row of a batch of configurations."""
    inc = open_.copy()
    for j in range(1, ball.R + 1):
        s = ball.level(j)
        inc[..., s] &= inc[..., ball.parent[s]]
    return inc


def extract_cluster(ball: TreeBall, config: PercolationConfig | np.ndarray) -> ClusterGraph | None:
    """Open cluster of the root, or None when the root is closed."""
    open_ = config.open if isinstance(config, PercolationConfig) else np.asarray(config, dtype=bool)
    if not open_[0]:
        return None
    inc = root_cluster_batch(ball, open_)
    verts = np.flatnonzero(inc)
    local = np.full(ball.size, -1, dtype=np.int64)
    local[verts] = np.arange(len(verts))
    adj: list[list[int]] = [[] for _ in verts]
    for i, v in enumerate(verts[1:], start=1):
        p = local[ball.parent[v]]
        adj[i].append(int(p))
        adj[p].append(i)
    truncated = bool((ball.depth[verts] == ball.R).any())
    return ClusterGraph(ball, verts, [np.asarray(a, dtype=np.int64) for a in adj], truncated)


def sphere_counts(cluster: ClusterGraph | np.ndarray, ball: TreeBall | None = None) -> np.ndarray:
    """Z_j = |C ∩ ∂B(o, j)| for j = 0..R.

    Takes a ClusterGraph, or a batch of root-cluster memberships (one row per
    sample) together with its ball, in which case one row of counts per sample
    is returned.
    """
    if isinstance(cluster, np.ndarray):
        if ball is None:
            raise ValueError("a membership batch needs its ball")
        return np.stack([cluster[:, ball.level(j)].sum(axis=1) for j in range(ball.R + 1)], axis=1)
    if cluster is None or cluster.size == 0:
        raise ValueError("sphere counts need a nonempty cluster")
    ball = cluster.ball
    return np.bincount(ball.depth[cluster.vertices], minlength=ball.R + 1)


def wilson_interval(hits: int, samples: int, confidence: float = 0.99) -> tuple[float, float]:
    ci = binomtest(hits, samples).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def dense_ball_probability(
    d: int,
    r: int,
    a: float,
    samples: int,
    seed: int = 0,
    threads: int = 1,
    p: float = P_OPEN,
    confidence: float = 0.99,
) -> DenseBallEstimate:
    """Monte Carlo frequency of |C(o) ∩ B(o, r)| >= a b^r with a Wilson interval."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ball = build_ball(d, r)
    threshold = a * (d - 1) ** r

    def work(g: np.random.Generator, size: int):
        z = sphere_counts(root_cluster_batch(ball, sample_open_batch(ball, g, size, p)), ball)
        return int((z.sum(axis=1) >= threshold).sum()), z.sum(axis=0)

    parts = rngmod.run_chunks(work, samples, seed, threads)
    hits = sum(h for h, _ in parts)
    zsum = sum(z for _, z in parts)
    lo, hi = wilson_interval(hits, samples, confidence)
    return DenseBallEstimate(
        d, r, a, samples, hits, hits / samples, lo, hi, seed, tuple(float(x) for x in zsum / samples)
    )


def trap_event(ball: TreeBall, open_: np.ndarray, r: int) -> np.ndarray:
    """Indicator of E_r: the forward depth-r tree open and its external boundary closed."""
    from .tree import forward_boundary, forward_subtree

    inside = forward_subtree(ball, r).member
    outside = forward_boundary(ball, r)
    return open_[..., inside].all(axis=-1) & ~open_[..., outside].any(axis=-1)


def cluster_ball_counts(ball: TreeBall, open_: np.ndarray, r: int) -> np.ndarray:
    """|C(v) ∩ B(v, r)| for every v in the inner ball B(o, R - r).

    Each count splits into vertices reached downward from v and vertices
    reached through v's parent; both satisfy short recursions over k.
    """
    if r > ball.R:
        raise ValueError(f"r={r} exceeds arena radius {ball.R}")
    o = open_.astype(np.int64)
    par = ball.parent
    nonroot = np.arange(1, ball.size)
    down = [o]
    for _ in range(r):
        nxt = np.zeros_like(o)
        np.add.at(nxt, par[nonroot], down[-1][nonroot])
        down.append(nxt * o)
    total = down[0].copy()
    up_prev = np.zeros_like(o)
    for k in range(1, r + 1):
        up = np.zeros_like(o)
        pk = par[nonroot]
        back = down[k - 2][nonroot] * o[pk] if k >= 2 else 0
        up[nonroot] = o[nonroot] * (up_prev[pk] + down[k - 1][pk] - back)
        total += down[k] + up
        up_prev = up
    inner = int(ball.level_start[ball.R - r + 1])
    return total[:inner]


def witness_set(ball: TreeBall, config: PercolationConfig | np.ndarray, r: int, a: float) -> WitnessSet:
    if ball.R < r:
        raise ValueError(f"arena radius {ball.R} is smaller than r={r}")
    open_ = config.open if isinstance(config, PercolationConfig) else np.asarray(config, dtype=bool)
    counts = cluster_ball_counts(ball, open_, r)
    return WitnessSet(ball, r, a, counts >= a * ball.b**r, counts)


def trap_probability(d: int, r: int) -> float:
    """Exact P(E_r) = 2^-(|B_r| + |∂B_r|), with ∂B_r including o-."""
    b = d - 1
    inside = (b ** (r + 1) - 1) // (b - 1)
    return math.ldexp(1.0, -(inside + b ** (r + 1) + 1))
