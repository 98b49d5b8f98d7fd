"""Closed-form bounds around the n / log^2 n correction, and the witness rank experiment.

All bounds are kept as natural logarithms: the trap cost 2^(-3 b^(r+1))
underflows a double already for moderate r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .percolation import sample_config, witness_set
from .spectral import count_two_sided, killed_operator, rho
from .tree import build_ball
from .walks import exact_return_prob, mc_return_prob

LOG2 = math.log(2.0)


def kappa(d: int) -> float:
    """κ_d = (π/√2) log b."""
    return math.pi / math.sqrt(2.0) * math.log(d - 1)


def target_constant(d: int) -> float:
    """π² (log b)², the limit of the correction functional."""
    return math.pi**2 * math.log(d - 1) ** 2


def delta_n(d: int, n: int, eta: float | None = None) -> float:
    """δ_n = ((κ_d - 2η) / log n)²; η defaults to κ_d / 8."""
    k = kappa(d)
    eta = k / 8.0 if eta is None else eta
    return ((k - 2.0 * eta) / math.log(n)) ** 2


@dataclass(frozen=True)
class TrapBound:
    d: int
    r: int
    n: int
    log_prefactor: float  # log 8(r+2)^-3
    log_trap_cost: float  # log 2^(-3 b^(r+1))
    log_spectral: float  # 2n log(ρ cos(π/(r+2)))

    @property
    def log_value(self) -> float:
        return math.fsum((self.log_prefactor, self.log_trap_cost, self.log_spectral))

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def trap_bound(d: int, r: int, n: int) -> TrapBound:
    """Lower bound 8(r+2)^-3 2^(-3b^(r+1)) (ρ cos(π/(r+2)))^(2n) on p_{2n}."""
    if r < 1 or n < 1:
        raise ValueError("trap bound needs r >= 1 and n >= 1")
    b = d - 1
    return TrapBound(
        d,
        r,
        n,
        math.log(8.0) - 3.0 * math.log(r + 2),
        -3.0 * float(b ** (r + 1)) * LOG2,
        2.0 * n * math.log(rho(d) * math.cos(math.pi / (r + 2))),
    )


def prescribed_trap_depth(d: int, n: int) -> int:
    """r_n = floor(log_b n - 3 log_b log n)."""
    lb = math.log(d - 1)
    return math.floor(math.log(n) / lb - 3.0 * math.log(math.log(n)) / lb)


@dataclass(frozen=True)
class TrapOptimum:
    r_best: int
    best: TrapBound
    r_prescribed: int
    prescribed: TrapBound
    scanned: int


def optimize_trap_r(d: int, n: int) -> TrapOptimum:
    """Best trap depth by exhaustive scan over 1 <= r <= ceil(2 log_b n).

    The prescribed depth r_n can fall below 1 for small n; its bound is then
    evaluated at r = 1.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    hi = max(1, math.ceil(2.0 * math.log(n) / math.log(d - 1)))
    bounds = [trap_bound(d, r, n) for r in range(1, hi + 1)]
    best = max(bounds, key=lambda t: t.log_value)
    rp = prescribed_trap_depth(d, n)
    return TrapOptimum(best.r, best, rp, trap_bound(d, max(rp, 1), n), hi)


def correction_value(d: int, n: int, log_p: float) -> float:
    """L(n) = -log(p_{2n} / ρ^{2n}) log² n / n."""
    return -(log_p - 2.0 * n * math.log(rho(d))) * math.log(n) ** 2 / n


@dataclass(frozen=True)
class CorrectionPoint:
    n: int
    source: str
    L: float | None
    log_value: float
    censored: bool = False


SOURCES = ("exact", "mc", "trap-bound", "theorem-target")


def correction_curve(
    d: int,
    n_list: list[int],
    sources: tuple[str, ...] = ("trap-bound", "theorem-target"),
    samples: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> list[CorrectionPoint]:
    """Correction functional per source; a zero MC estimate is reported as censored."""
    out = []
    for src in sources:
        if src not in SOURCES:
            raise ValueError(f"unknown source {src!r}")
        for n in n_list:
            if src == "exact":
                lp = exact_return_prob(d, n).log_value
            elif src == "mc":
                lp = mc_return_prob(d, n, samples, seed, threads).log_value
            elif src == "trap-bound":
                lp = trap_bound(d, 1, n).log_value if n < 2 else optimize_trap_r(d, n).best.log_value
            else:
                lp = 2.0 * n * math.log(rho(d)) - target_constant(d) * n / math.log(n) ** 2 if n > 1 else 0.0
            if lp == -math.inf:
                out.append(CorrectionPoint(n, src, None, lp, censored=True))
            else:
                out.append(CorrectionPoint(n, src, correction_value(d, n, lp), lp))
    return out


@dataclass(frozen=True)
class UpperSplit:
    d: int
    n: int
    delta: float
    tail_mass: float
    log_I1: float  # 2n log ρ - 2nδ
    log_I1_tight: float  # 2n log ρ + 2n log(1-δ)
    log_I2: float  # 2n log ρ + log tail_mass

    @property
    def log_total(self) -> float:
        return float(np.logaddexp(self.log_I1, self.log_I2))

    @property
    def log_rho_2n(self) -> float:
        return 2.0 * self.n * math.log(rho(self.d))


def upper_split(d: int, n: int, delta: float, tail_mass: float) -> UpperSplit:
    """Bounds on the two halves of ∫|λ|^{2n} dν split at |λ| = ρ(1-δ)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if tail_mass < 0:
        raise ValueError("tail_mass must be nonnegative")
    lr = 2.0 * n * math.log(rho(d))
    log_tail = math.log(tail_mass) if tail_mass > 0 else -math.inf
    return UpperSplit(d, n, delta, tail_mass, lr - 2.0 * n * delta, lr + 2.0 * n * math.log1p(-delta), lr + log_tail)


def hypothesized_tail(d: int, delta: float, c: float, eta: float) -> float:
    """exp[-c exp((κ_d - η)/√δ)], the double-exponential edge tail shape."""
    return math.exp(-c * math.exp((kappa(d) - eta) / math.sqrt(delta)))


@dataclass(frozen=True)
class WitnessRecord:
    sample_id: int
    W: int
    count: int
    max_component_eig: float
    hypothesis_ok: bool
    implication_ok: bool


@dataclass
class WitnessRankReport:
    d: int
    R_inner: int
    R_outer: int
    r: int
    a: float
    delta: float
    seed: int
    records: list[WitnessRecord] = field(default_factory=list)

    @property
    def violations(self) -> list[WitnessRecord]:
        return [x for x in self.records if x.hypothesis_ok and not x.implication_ok]

    @property
    def n_hypothesis(self) -> int:
        return sum(x.hypothesis_ok for x in self.records)


def witness_rank_experiment(
    d: int, R_inner: int, R_outer: int, r: int, a: float, delta: float, samples: int, seed: int = 0
) -> WitnessRankReport:
    """Finite-volume check of the witness-deletion eigenvalue bound.

    For the killed operator on the open vertices of B(o, R_inner): if deleting
    the witness set leaves only components with all |λ| < E = ρ(1-δ), then
    #{|λ| >= E} <= 2|W| must hold.
    """
    if R_outer < R_inner + r:
        raise ValueError(f"R_outer={R_outer} leaves no margin for r={r} around B(o,{R_inner})")
    ball = build_ball(d, R_outer)
    inner = int(ball.level_start[R_inner + 1])
    E = rho(d) * (1.0 - delta)
    report = WitnessRankReport(d, R_inner, R_outer, r, a, delta, seed)
    for i in range(samples):
        cfg = sample_config(ball, rngmod.stream(seed, i))
        ws = witness_set(ball, cfg, r, a)
        w_inner = np.zeros(ball.size, dtype=bool)
        w_inner[: len(ws.member)] = ws.member
        open_inner = cfg.open.copy()
        open_inner[inner:] = False
        W = int(w_inner[:inner].sum())
        count = count_two_sided(killed_operator(ball, open_inner), E) if open_inner.any() else 0
        rest = open_inner & ~w_inner
        if rest.any():
            op = killed_operator(ball, rest)
            top = float(np.abs(np.linalg.eigvalsh(op.dense())).max())
            hyp = count_two_sided(op, E) == 0
        else:
            top, hyp = 0.0, True
        report.records.append(WitnessRecord(i, W, count, top, hyp, count <= 2 * W))
    return report

