import math
import warnings

import numpy as np
import pytest

from lamptree import percolation as perc
from lamptree import rng, spectral, tree
from lamptree.spectral import rho

from oracles import dense_killed


def _clusters(d, radius, count, seed):
    ball = tree.build_ball(d, radius)
    out = []
    i = 0
    while len(out) < count:
        cl = perc.extract_cluster(ball, perc.config_from_seed(ball, seed, i))
        i += 1
        if cl is not None:
            out.append(cl)
    return out


def test_assemble_examples():
    ball = tree.build_ball(3, 2)
    single = np.zeros(ball.size, dtype=bool)
    single[0] = True
    assert spectral.assemble_killed(ball, single).dense().tolist() == [[0.0]]
    pair = single.copy()
    pair[1] = True
    assert np.allclose(np.linalg.eigvalsh(spectral.assemble_killed(ball, pair).dense()), [-1 / 3, 1 / 3])
    star = ball.depth <= 1
    w = np.linalg.eigvalsh(spectral.assemble_killed(ball, star).dense())
    assert np.allclose(w, [-math.sqrt(3) / 3, 0, 0, math.sqrt(3) / 3], atol=1e-14)
    with pytest.raises(ValueError):
        spectral.assemble_killed(None)
    with pytest.raises(ValueError):
        spectral.assemble_killed(ball, np.zeros(ball.size, dtype=bool))


def test_assembly_matches_oracle_and_components():
    ball = tree.build_ball(3, 6)
    for i in range(30):
        member = perc.config_from_seed(ball, 3, i).open
        op = spectral.assemble_killed(ball, member)
        verts, P = dense_killed(ball, member)
        assert np.array_equal(op.vertices, verts)
        assert np.array_equal(op.dense(), P)
        assert op.n_components == tree.count_components(ball, member)
        assert (op.dense().sum(axis=1) <= 1 + 1e-15).all()


def test_top_eigen_examples():
    ball = tree.build_ball(3, 8)
    fwd = spectral.top_eigen(spectral.assemble_killed(tree.forward_subtree(ball, 1)))
    assert fwd.top_eigenvalue == pytest.approx(math.sqrt(2) / 3, abs=1e-12)
    for n in (1, 2, 5, 9):
        rep = spectral.top_eigen(spectral.assemble_killed(tree.path_mask(ball, n)))
        assert rep.top_eigenvalue == pytest.approx(2 / 3 * math.cos(math.pi / (n + 1)), abs=1e-12)


def test_top_eigen_sparse_path_agrees_with_dense():
    ball = tree.build_ball(3, 12)
    mask = tree.random_subtree_mask(ball, 1500, rng.stream(4))
    op = spectral.assemble_killed(mask)
    rep = spectral.top_eigen(op)
    assert rep.method != "dense"
    w = np.linalg.eigvalsh(op.dense())
    assert rep.top_eigenvalue == pytest.approx(w[-1], abs=1e-9)
    assert rep.residual <= 1e-9
    assert 0 <= rep.root_mass <= 1


@pytest.mark.parametrize("d", [3, 4, 5])
def test_trap_spectrum_closed_form(d):
    for r in range(0, 9):
        ts = spectral.trap_spectrum(d, r)
        assert np.allclose(ts.eigenvalues, ts.closed_form_eigenvalues, atol=1e-12)
        assert np.allclose(ts.root_masses, ts.closed_form_root_masses, atol=1e-12)
    r0 = spectral.trap_spectrum(d, 0)
    assert r0.eigenvalues.tolist() == [0.0] and r0.root_masses[0] == pytest.approx(1.0)


def test_trap_spectrum_example_values():
    ts = spectral.trap_spectrum(3, 2)
    assert ts.eigenvalues[0] == pytest.approx(2 / 3, abs=1e-14)
    assert ts.root_masses[0] == pytest.approx(1 / 4, abs=1e-14)


@pytest.mark.parametrize("d", [3, 4])
def test_radial_eigenvalues_appear_in_dense_spectrum(d):
    for r in range(1, 6):
        ball = tree.build_ball(d, r)
        _, P = dense_killed(ball, tree.forward_subtree(ball, r).member)
        w = np.linalg.eigvalsh(P)
        for lam in spectral.trap_spectrum(d, r).closed_form_eigenvalues:
            assert np.abs(w - lam).min() < 1e-10


def test_radial_vector_residual():
    for d in (3, 4):
        b = d - 1
        for r in range(1, 13):
            if tree.ball_size(d, r) > 200_000:
                break
            ball = tree.build_ball(d, r)
            mask = tree.forward_subtree(ball, r)
            u = spectral.radial_trap_vector(d, r, ball)
            A = d * spectral.assemble_killed(mask).matrix
            lam = 2 * math.sqrt(b) * math.cos(math.pi / (r + 2))
            assert np.abs(A @ u - lam * u).max() <= 1e-12


def test_eigen_count_examples():
    ball = tree.build_ball(3, 1)
    star = spectral.assemble_killed(ball, np.ones(ball.size, dtype=bool))
    assert spectral.eigen_count_above(star, 0.5) == 1
    ball = tree.build_ball(3, 5)
    for i in range(10):
        op = spectral.assemble_killed(ball, perc.config_from_seed(ball, 1, i).open | (ball.depth == 0))
        assert spectral.eigen_count_above(op, rho(3) + 1e-6) == 0
        assert spectral.eigen_count_above(op, -rho(3) - 1e-6) == op.dim


def test_eigen_count_tie_handling():
    # the path of 3 vertices has eigenvalue exactly (2/3) cos(pi/4) = sqrt(2)/3
    ball = tree.build_ball(3, 3)
    op = spectral.assemble_killed(tree.path_mask(ball, 3))
    E = 2 / 3 * math.cos(math.pi / 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectral.PivotBreakdownWarning)
        assert spectral.eigen_count_above(op, E) == 1
        assert spectral.eigen_count_above(op, 0.0) == 2
        assert spectral.eigen_count_above(op, E, negate=True) == 1


def test_inertia_counts_match_dense():
    g = rng.stream(77)
    ball = tree.build_ball(3, 9)
    for trial in range(500):
        if trial % 2:
            member = tree.random_subtree_mask(ball, int(g.integers(1, 301)), g).member
        else:
            member = perc.sample_config(ball, g).open
            member[:] &= ball.depth <= 7
            if member.sum() > 300 or not member.any():
                member = ball.depth <= 2
        op = spectral.assemble_killed(ball, member)
        w = np.linalg.eigvalsh(op.dense())
        E = float(g.uniform(-1.0, 1.0))
        assert spectral.eigen_count_above(op, E) == int((w >= E).sum())
        assert spectral.eigen_count_above(op, E, negate=True) == int((w <= -E).sum())


def test_bipartite_symmetry_and_norm_bound():
    for d in (3, 4):
        for cl in _clusters(d, 6, 100, seed=d):
            op = spectral.assemble_killed(cl)
            w = np.linalg.eigvalsh(op.dense())
            assert np.abs(w).max() <= rho(d) + 1e-9
            assert np.allclose(np.sort(w), np.sort(-w), atol=1e-12)
            for E in (0.1, 0.3, 0.5, 0.7):
                assert spectral.eigen_count_above(op, E) == spectral.eigen_count_above(op, E, negate=True)


def test_shift_profile_examples():
    ball = tree.build_ball(3, 6)
    fwd = spectral.shift_profile(tree.forward_subtree(ball, 5), 3, theta_grid_size=4)
    assert np.allclose(fwd.shift_norms[:4], 1.0)
    path = spectral.shift_profile(tree.path_mask(ball, 5), 3, theta_grid_size=4)
    assert path.shift_norms_sq[3] == pytest.approx(2.0**-3)
    two = spectral.shift_profile(tree.path_mask(ball, 2), 1, theta_grid_size=4)
    assert two.numerical_radius == pytest.approx(math.cos(math.pi / 3) / math.sqrt(2), abs=1e-12)


def test_shift_identities_on_random_masks(random_masks):
    for mask in random_masks(100, radius=9, max_size=300, seed=3):
        K = 5
        prof = spectral.shift_profile(mask, K, theta_grid_size=16)
        S, order, root = spectral._rooted_shift(mask)
        for k in range(K + 1):
            dense = np.linalg.norm(np.linalg.matrix_power(S, k), 2) ** 2
            assert abs(dense - prof.shift_norms_sq[k]) <= 1e-8
        assert np.ptp(prof.sweep) <= 1e-8
        sym = np.linalg.norm(S + S.T, 2)
        assert abs(2 * prof.numerical_radius - sym) <= 1e-8
        assert abs(prof.numerical_radius_sweep - prof.numerical_radius) <= 1e-8
        assert prof.numerical_radius <= 1.0
        n = prof.shift_norms
        for j in range(K + 1):
            for k in range(K + 1 - j):
                assert n[j + k] <= n[j] * n[k] * (1 + 1e-12)


def test_sparse_ball_certificate_examples():
    b, r = 2, 3
    ball = tree.build_ball(3, 2 * r + 4)
    full = spectral.sparse_ball_certificate(tree.forward_subtree(ball, r + 1), 0.05, r, 0.9)
    assert full.density >= 1 and not full.hypothesis_holds
    n = 2 * r + 3
    path = spectral.sparse_ball_certificate(tree.path_mask(ball, n, through_root=True), 0.05, r, 0.9)
    assert path.density == pytest.approx((2 * r + 1) / b**r)
    assert path.top_eigenvalue == pytest.approx(2 / 3 * math.cos(math.pi / (n + 1)), abs=1e-12)
    assert path.conclusion_holds
    # trap mask: the root ball holds all (b^(r+1)-1)/(b-1) vertices, so the hypothesis
    # fails exactly when a <= (b - b^-r)/(b - 1)
    trap = tree.forward_subtree(ball, r)
    edge = (b - b**-r) / (b - 1)
    assert not spectral.sparse_ball_certificate(trap, 0.05, r, edge).hypothesis_holds
    assert spectral.sparse_ball_certificate(trap, 0.05, r, edge + 1e-9).hypothesis_holds


def test_certificate_refuses_without_margin():
    ball = tree.build_ball(3, 4)
    with pytest.raises(tree.InsufficientMarginError):
        spectral.sparse_ball_certificate(tree.forward_subtree(ball, 4), 0.05, 2, 0.9)


def test_sparse_ball_radius():
    assert spectral.sparse_ball_radius(0.05, 0.1) == math.floor((math.pi / math.sqrt(2) - 0.1) / math.sqrt(0.05))


def test_calibration_table_and_frontier():
    rows = spectral.load_calibration()
    assert rows and all(0 < r["numerical_radius"] <= 1 for r in rows)
    front = spectral.calibration_frontier(rows)
    for m in {f["m"] for f in front}:
        env = [f["w_max"] for f in front if f["m"] == m]
        assert env == sorted(env)
    fresh = spectral.shift_calibration(3, 6, [10, 20], [1, 2], 4, seed=1)
    assert len(fresh) == 8


def test_cluster_spectrum_masses_sum_to_one():
    for cl in _clusters(3, 5, 20, seed=2):
        w, mass = spectral.cluster_spectrum(cl)
        assert mass.sum() == pytest.approx(1.0)


def test_edge_tail_flags_truncation():
    et = spectral.edge_tail_estimate(4, 3, 0.1, 200, seed=1)
    assert et.truncated
    assert 0 <= et.tail_mass <= 1
