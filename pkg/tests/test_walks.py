import math
from fractions import Fraction

import numpy as np
import pytest

from lamptree import percolation as perc
from lamptree import rng, tree, walks
from lamptree.spectral import rho

from oracles import brute_census, lamplighter_return


def test_census_examples():
    assert walks.walk_range_census(3, 2) == {2: 3}
    assert walks.walk_range_census(3, 4) == {2: 3, 3: 12}
    assert walks.walk_range_census(4, 5) == {}
    assert walks.walk_range_census(3, 0) == {1: 1}


@pytest.mark.parametrize("d,m", [(3, 6), (3, 8), (4, 6), (5, 4), (3, 10)])
def test_census_matches_brute_force(d, m):
    assert walks.walk_range_census(d, m) == brute_census(d, m)


@pytest.mark.parametrize("d,n", [(3, 1), (3, 2), (4, 1), (4, 2), (3, 3)])
def test_exact_matches_lamplighter_chain(d, n):
    assert walks.exact_return_prob(d, n).exact == lamplighter_return(d, 2 * n)


def test_exact_examples():
    assert walks.exact_return_prob(5, 0).exact == 1
    assert walks.exact_return_prob(3, 1).exact == Fraction(1, 12)
    est = walks.exact_return_prob(3, 2)
    assert est.exact == Fraction(1, 36)
    assert est.value == 1 / 36
    assert est.std_error == 0.0 and est.method == walks.EXACT
    for d in (3, 4, 5, 6, 7):
        assert walks.exact_return_prob(d, 1).exact == Fraction(1, 4 * d)


def test_census_identity_and_bounds():
    prev = []
    for n in range(0, 9):
        census = walks.walk_range_census(3, 2 * n)
        p = walks.exact_return_prob(3, n)
        assert walks.census_probability(3, 2 * n, census) == p.exact
        assert 0 < p.exact
        assert p.log_value <= 2 * n * math.log(rho(3)) + 1e-15
        prev.append(p.exact)
    for n in range(1, len(prev) - 1):
        assert prev[n + 1] * prev[n - 1] >= prev[n] ** 2


def test_exact_budget():
    with pytest.raises(walks.BudgetExceededError):
        walks.exact_return_prob(3, 8, budget=1000)


def test_return_weights_examples():
    ball = tree.build_ball(3, 1)
    assert walks.return_weights(ball, np.ones((1, ball.size), dtype=bool), 1)[0] == pytest.approx(1 / 3, abs=1e-15)
    closed = np.ones((1, ball.size), dtype=bool)
    closed[0, 0] = False
    assert walks.return_weights(ball, closed, 2)[0] == 0.0


def test_batched_weights_match_cluster_route():
    ball = tree.build_ball(3, 4)
    open_ = perc.sample_open_batch(ball, rng.stream(2), 200)
    w = walks.return_weights(ball, open_, 4)
    for i in range(200):
        cl = perc.extract_cluster(ball, open_[i])
        assert w[i] == pytest.approx(walks.cluster_return_weight(cl, 4), abs=1e-15)


def test_locality_under_coupled_seeds():
    # vertex-major sampling: the radius-(n+2) batch restricted to B(o,n) is the radius-n batch
    n = 3
    small, big = tree.build_ball(3, n), tree.build_ball(3, n + 2)
    a = perc.sample_open_batch(small, rng.stream(5), 500)
    b = perc.sample_open_batch(big, rng.stream(5), 500)
    assert np.array_equal(a, b[:, : small.size])
    assert np.array_equal(walks.return_weights(small, a, n), walks.return_weights(big, b, n))
    e1 = walks.mc_return_prob(3, n, 20_000, seed=9)
    e2 = walks.mc_return_prob(3, n, 20_000, seed=9, radius=n + 2)
    assert e1.value == e2.value and e1.std_error == e2.std_error


def test_mc_agrees_with_exact():
    est = walks.mc_return_prob(3, 1, 1_000_000, seed=1)
    assert abs(est.value - 1 / 12) <= 4 * est.std_error
    assert est.method == walks.PERCOLATION_MC


def test_mc_thread_count_invariant():
    a = walks.mc_return_prob(3, 2, 150_000, seed=4, threads=1)
    b = walks.mc_return_prob(3, 2, 150_000, seed=4, threads=4)
    assert (a.value, a.std_error) == (b.value, b.std_error)


def test_chain_sim_agrees_with_exact():
    est = walks.chain_sim(3, 1, 2_000_000, seed=2)
    assert abs(est.value - 1 / 12) <= 4 * est.std_error
    assert walks.chain_sim(4, 0, 10).value == 1.0


def test_sws_step_lamps_within_visited():
    ball = tree.build_ball(3, 6)
    g = rng.stream(3)
    state = walks.LamplighterState(0)
    assert state.is_identity
    visited = {0}
    for _ in range(6):
        state = walks.sws_step(state, ball, g)
        visited.add(state.position)
        assert state.lamps <= visited


def test_sws_step_distribution():
    # one step from the identity: position uniform over neighbours, each lamp independently lit w.p. 1/2
    ball = tree.build_ball(3, 1)
    g = rng.stream(8)
    counts: dict = {}
    for _ in range(24_000):
        s = walks.sws_step(walks.LamplighterState(0), ball, g)
        key = (s.position, len(s.lamps))
        counts[key] = counts.get(key, 0) + 1
    for pos in (1, 2, 3):
        for k, share in ((0, 0.25), (1, 0.5), (2, 0.25)):
            expect = 24_000 * share / 3
            assert abs(counts[(pos, k)] - expect) < 5 * math.sqrt(expect)
