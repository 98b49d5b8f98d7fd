import pytest

from lamptree import rng, tree


@pytest.fixture
def random_masks():
    def make(count, d=3, radius=7, max_size=120, seed=0):
        ball = tree.build_ball(d, radius)
        out = []
        for i in range(count):
            g = rng.stream(seed, i)
            out.append(tree.random_subtree_mask(ball, int(g.integers(1, max_size + 1)), g))
        return out

    return make


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
