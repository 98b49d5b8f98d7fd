"""Counter-based random streams and chunked parallel Monte Carlo.

Every stream is a Philox generator keyed by ``(seed, stream_id)``; distinct
stream ids give independent, non-overlapping sequences with no shared state.
Monte Carlo work is cut into fixed-size chunks, chunk ``i`` always draws from
stream ``base + i``, and partial results are merged in chunk order. The
output therefore does not depend on the number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

CHUNK = 1 << 16
_MASK64 = (1 << 64) - 1

T = TypeVar("T")


def default_seed() -> int:
    env = os.environ.get("LAMPTREE_SEED")
    return int(env) if env else 0


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    key = (seed & _MASK64) | ((stream_id & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class Moments:
    """Associative accumulator for count, sum and sum of squares."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> Moments:
        values = np.asarray(values, dtype=float)
        return cls(len(values), float(values.sum()), float(np.dot(values, values)))

    def merge(self, other: Moments) -> Moments:
        return Moments(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return float("nan")
        m = self.mean
        var = max(self.total_sq / self.count - m * m, 0.0) * self.count / (self.count - 1)
        return float(np.sqrt(var / self.count))


def chunk_sizes(samples: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunks(
    work: Callable[[np.random.Generator, int], T],
    samples: int,
    seed: int,
    threads: int = 1,
    chunk: int = CHUNK,
    base_stream: int = 0,
) -> list[T]:
    """Apply ``work(rng, size)`` to each chunk; results come back in chunk order."""
    sizes = chunk_sizes(samples, chunk)
    jobs = [(stream(seed, base_stream + i), s) for i, s in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [work(g, s) for g, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: work(*job), jobs))
