"""Return probabilities of the switch-walk-switch lamplighter walk on T_d.

Three independent engines:

* :func:`exact_return_prob` sums d^-m 2^-|range| over closed base walks.
* :func:`mc_return_prob` averages <δ_o, P_ω^{2n} δ_o> over percolation samples.
* :func:`chain_sim` runs the lamplighter chain itself and counts returns.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng as rngmod
from .percolation import ClusterGraph, sample_open_batch
from .tree import TreeBall, build_ball

NODE_BUDGET = 50_000_000

EXACT = "exact-walk-sum"
PERCOLATION_MC = "percolation-mc"
CHAIN_SIM = "chain-sim"


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReturnProbEstimate:
    d: int
    n: int
    value: float
    log_value: float
    std_error: float
    method: str
    samples: int
    seed: int | None
    exact: Fraction | None = None
    wall_time_ms: float = 0.0


@dataclass(frozen=True)
class LamplighterState:
    position: int
    lamps: frozenset[int] = frozenset()

    @property
    def is_identity(self) -> bool:
        return self.position == 0 and not self.lamps


def _log_fraction(q: Fraction) -> float:
    if q == 0:
        return -math.inf
    return math.log(q.numerator) - math.log(q.denominator)


def walk_range_census(d: int, m: int, budget: int | None = None) -> dict[int, int]:
    """Number of closed length-m walks from o with each range size.

    Depth-first search over walks with a visit-count array undone on
    backtracking. Stepping into an unvisited child is explored once and
    weighted by the number of unvisited siblings: an automorphism swapping
    two untouched subtrees fixes everything visited so far, so all of them
    contribute identical continuations.
    """
    if d < 3:
        raise ValueError(f"d must be >= 3, got {d}")
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return {1: 1}
    if m % 2:
        return {}
    budget = NODE_BUDGET if budget is None else budget
    ball = build_ball(d, m // 2)
    parent = ball.parent.tolist()
    depth = ball.depth.tolist()
    children = [list(ball.children_of(v)) for v in range(ball.size)]
    visits = [0] * ball.size
    visits[0] = 1
    census: dict[int, int] = {}
    nodes = 0

    def step(v: int, left: int, rng_size: int, mult: int) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise BudgetExceededError(f"closed-walk search exceeded {budget} nodes (d={d}, m={m})")
        if left == 0:
            if v == 0:
                census[rng_size] = census.get(rng_size, 0) + mult
            return
        left -= 1
        p = parent[v]
        if p >= 0 and depth[p] <= left:
            visits[p] += 1
            step(p, left, rng_size, mult)
            visits[p] -= 1
        if depth[v] + 1 > left:
            return
        fresh, n_fresh = -1, 0
        for c in children[v]:
            if visits[c]:
                visits[c] += 1
                step(c, left, rng_size, mult)
                visits[c] -= 1
            else:
                n_fresh += 1
                if fresh < 0:
                    fresh = c
        if n_fresh:
            visits[fresh] = 1
            step(fresh, left, rng_size + 1, mult * n_fresh)
            visits[fresh] = 0

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * m + 100))
    try:
        step(0, m, 1, 1)
    finally:
        sys.setrecursionlimit(limit)
    return dict(sorted(census.items()))


def census_probability(d: int, m: int, census: dict[int, int]) -> Fraction:
    if m == 0:
        return Fraction(1)
    return sum((Fraction(c, d**m * 2**s) for s, c in census.items()), Fraction(0))


def exact_return_prob(d: int, n: int, budget: int | None = None) -> ReturnProbEstimate:
    """p_{2n}(e, e) as an exact fraction."""
    t0 = time.perf_counter()
    census = walk_range_census(d, 2 * n, budget)
    q = census_probability(d, 2 * n, census)
    ms = 1000.0 * (time.perf_counter() - t0)
    return ReturnProbEstimate(d, n, float(q), _log_fraction(q), 0.0, EXACT, 0, None, q, ms)


def _nbr_table(ball: TreeBall) -> np.ndarray:
    """Neighbour table with out-of-arena entries redirected to a sink index N."""
    nbr = ball.neighbors.copy()
    nbr[nbr < 0] = ball.size
    return np.vstack([nbr, np.full((1, ball.d), ball.size, dtype=nbr.dtype)])


def return_weights(ball: TreeBall, open_: np.ndarray, n: int) -> np.ndarray:
    """<δ_o, P_ω^{2n} δ_o> = ||P_ω^n δ_o||^2 for each row of a batch of configurations."""
    S, N = open_.shape
    nbr = _nbr_table(ball)
    mask = np.zeros((S, N + 1))
    mask[:, :N] = open_
    x = np.zeros((S, N + 1))
    x[:, 0] = 1.0
    if n == 0:
        return np.ones(S)
    x *= mask
    for _ in range(n):
        x = mask * x[:, nbr].sum(axis=2) / ball.d
    # mass sits in B(o, n); reducing over that prefix only keeps the result
    # bitwise independent of the arena radius
    x = np.ascontiguousarray(x[:, : ball.level_start[min(n, ball.R) + 1]])
    return np.einsum("ij,ij->i", x, x)


def cluster_return_weight(cluster: ClusterGraph | None, n: int) -> float:
    """<δ_o, P^{2n} δ_o> from mat-vecs restricted to the root cluster (0 for a closed root)."""
    if n == 0:
        return 1.0
    if cluster is None:
        return 0.0
    from .spectral import assemble_killed

    P = assemble_killed(cluster).matrix
    x = np.zeros(cluster.size)
    x[cluster.root_pos] = 1.0
    for _ in range(n):
        x = P @ x
    return float(x @ x)


def mc_return_prob(
    d: int, n: int, samples: int, seed: int = 0, threads: int = 1, radius: int | None = None
) -> ReturnProbEstimate:
    """Percolation Monte Carlo estimate of p_{2n}.

    Each sample is exact given its configuration because a closed 2n-walk
    never leaves B(o, n); ``radius`` may enlarge the arena without changing
    any per-sample value.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    t0 = time.perf_counter()
    ball = build_ball(d, n if radius is None else radius)

    def work(g: np.random.Generator, size: int) -> rngmod.Moments:
        return rngmod.Moments.of(return_weights(ball, sample_open_batch(ball, g, size), n))

    acc = rngmod.Moments()
    for part in rngmod.run_chunks(work, samples, seed, threads):
        acc = acc.merge(part)
    mean = acc.mean
    ms = 1000.0 * (time.perf_counter() - t0)
    log_value = math.log(mean) if mean > 0 else -math.inf
    return ReturnProbEstimate(d, n, mean, log_value, acc.std_error, PERCOLATION_MC, samples, seed, None, ms)


def sws_step(state: LamplighterState, ball: TreeBall, rng: np.random.Generator) -> LamplighterState:
    """One switch-walk-switch step: resample lamp, move to a uniform neighbour, resample lamp."""
    lamps = set(state.lamps)
    x = state.position
    if rng.random() < 0.5:
        lamps.symmetric_difference_update({x})
    y = int(ball.neighbors[x, rng.integers(ball.d)])
    if y < 0:
        raise ValueError(f"walk left the arena B(o,{ball.R})")
    if rng.random() < 0.5:
        lamps.symmetric_difference_update({y})
    return LamplighterState(y, frozenset(lamps))


def _chain_batch(ball: TreeBall, nbr: np.ndarray, g: np.random.Generator, size: int, steps: int) -> int:
    N = ball.size
    rows = np.arange(size)
    pos = np.zeros(size, dtype=np.int64)
    lamps = np.zeros((size, N + 1), dtype=bool)
    for _ in range(steps):
        lamps[rows, pos] = g.random(size) < 0.5
        pos = nbr[pos, g.integers(0, ball.d, size)]
        lamps[rows, pos] = g.random(size) < 0.5
    back = (pos == 0) & ~lamps[:, :N].any(axis=1)
    return int(back.sum())


def chain_sim(d: int, n: int, samples: int, seed: int = 0, threads: int = 1) -> ReturnProbEstimate:
    """Direct simulation of 2n lamplighter steps; frequency of ending at the identity.

    Walks run on B(o, n): a walk that leaves it cannot be back at o after
    2n steps and is parked in an absorbing sink.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    t0 = time.perf_counter()
    if n == 0:
        return ReturnProbEstimate(d, 0, 1.0, 0.0, 0.0, CHAIN_SIM, samples, seed, None, 0.0)
    ball = build_ball(d, n)
    nbr = _nbr_table(ball)
    hits = sum(rngmod.run_chunks(lambda g, s: _chain_batch(ball, nbr, g, s, 2 * n), samples, seed, threads))
    p = hits / samples
    se = math.sqrt(max(p * (1 - p), 0.0) / samples)
    ms = 1000.0 * (time.perf_counter() - t0)
    return ReturnProbEstimate(
        d, n, p, math.log(p) if p > 0 else -math.inf, se, CHAIN_SIM, samples, seed, None, ms
    )
