"""Fast invariant checks across all modules, run by ``lamptree selftest``."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable

import numpy as np

from . import bounds, percolation, rng, spectral, tree, walks


def _tree_sizes() -> bool:
    for d in (3, 4, 5):
        for R in range(5):
            ball = tree.build_ball(d, R)
            spheres = [int((ball.depth == j).sum()) for j in range(R + 1)]
            if spheres != [tree.sphere_size(d, j) for j in range(R + 1)] or ball.size != tree.ball_size(d, R):
                return False
            for r in range(R + 1):
                b = d - 1
                if tree.forward_subtree(ball, r).size != (b ** (r + 1) - 1) // (b - 1):
                    return False
    return True


def _descendant_recursion() -> bool:
    ball = tree.build_ball(3, 5)
    mask = tree.random_subtree_mask(ball, 40, rng.stream(7))
    _, parent, _ = mask.rooted
    for k in range(4):
        Dk, Dk1 = tree.descendant_counts(mask, k), tree.descendant_counts(mask, k + 1)
        acc = np.zeros_like(Dk)
        ch = np.flatnonzero(parent >= 0)
        np.add.at(acc, parent[ch], Dk[ch])
        if not np.array_equal(acc, Dk1):
            return False
    return True


def _exact_values() -> bool:
    ok = all(walks.exact_return_prob(d, 1).exact == Fraction(1, 4 * d) for d in (3, 4, 5, 6))
    return ok and walks.exact_return_prob(3, 2).exact == Fraction(1, 36)


def _log_convexity() -> bool:
    p = [walks.exact_return_prob(3, n).exact for n in range(7)]
    return all(p[n + 1] * p[n - 1] >= p[n] ** 2 for n in range(1, 6))


def _mc_agreement() -> bool:
    exact = float(walks.exact_return_prob(3, 2).exact)
    est = walks.mc_return_prob(3, 2, 200_000, seed=11)
    return abs(est.value - exact) <= 4 * est.std_error


def _trap_spectrum() -> bool:
    for d in (3, 4, 5):
        for r in range(1, 6):
            ball = tree.build_ball(d, r)
            rep = spectral.top_eigen(spectral.assemble_killed(tree.forward_subtree(ball, r)))
            ts = spectral.trap_spectrum(d, r)
            if abs(rep.top_eigenvalue - ts.closed_form_eigenvalues[0]) > 1e-10:
                return False
            if abs(rep.root_mass - ts.closed_form_root_masses[0]) > 1e-10:
                return False
    return True


def _inertia_vs_dense() -> bool:
    ball = tree.build_ball(3, 5)
    for i in range(30):
        cfg = percolation.config_from_seed(ball, 3, i)
        op = spectral.killed_operator(ball, cfg.open)
        w = np.linalg.eigvalsh(op.dense())
        E = float(rng.stream(4, i).uniform(-0.95, 0.95))
        if spectral.eigen_count_above(op, E) != int((w >= E).sum()):
            return False
        if spectral.eigen_count_above(op, E, negate=True) != int((w <= -E).sum()):
            return False
    return True


def _shift_identities() -> bool:
    ball = tree.build_ball(3, 5)
    mask = tree.random_subtree_mask(ball, 30, rng.stream(5))
    prof = spectral.shift_profile(mask, 4, theta_grid_size=8)
    return bool(np.ptp(prof.sweep) < 1e-8 and abs(prof.sweep[0] - prof.numerical_radius) < 1e-8)


def _sandwich() -> bool:
    for n in range(2, 7):
        p = walks.exact_return_prob(3, n)
        lower = bounds.optimize_trap_r(3, n).best.log_value
        if not lower <= p.log_value <= 2 * n * math.log(spectral.rho(3)):
            return False
    return True


def _witness_rank() -> bool:
    rep = bounds.witness_rank_experiment(3, 4, 6, 2, 0.9, 0.05, 40, seed=2)
    return not rep.violations


def _constant_identity() -> bool:
    return all(math.isclose(2 * bounds.kappa(d) ** 2, bounds.target_constant(d), rel_tol=1e-15) for d in (3, 4, 5))


CHECKS: dict[str, Callable[[], bool]] = {
    "tree: sphere and forward-tree sizes": _tree_sizes,
    "tree: descendant recursion": _descendant_recursion,
    "walks: exact p_2 and p_4": _exact_values,
    "walks: log-convexity of exact moments": _log_convexity,
    "walks: percolation MC agrees with exact": _mc_agreement,
    "spectral: trap eigenvalue and root mass": _trap_spectrum,
    "spectral: inertia counts match dense": _inertia_vs_dense,
    "spectral: gauge sweep constant": _shift_identities,
    "bounds: trap bound <= p <= rho^2n": _sandwich,
    "bounds: witness rank implication": _witness_rank,
    "bounds: 2 kappa^2 = pi^2 log^2 b": _constant_identity,
}


def run_all() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS.items():
        try:
            out.append((name, bool(fn()), ""))
        except Exception as exc:  # a crashing check is a failed check
            out.append((name, False, f"{type(exc).__name__}: {exc}"))
    return out
