"""Finite pieces of the infinite d-regular tree.

Vertices of a ball B(o, R) are indexed breadth-first from the root ``o = 0``.
Children of a vertex occupy a contiguous index range, which lets most
level-wise computations run as numpy slices.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

VERTEX_BUDGET = 50_000_000


class ResourceLimitError(RuntimeError):
    """A requested structure would exceed the configured size budget."""


class InsufficientMarginError(ValueError):
    """A query ball does not fit inside the ambient arena."""


def ball_size(d: int, R: int) -> int:
    """|B(o, R)| in the d-regular tree."""
    if R == 0:
        return 1
    b = d - 1
    return 1 + d * (b**R - 1) // (b - 1)


def sphere_size(d: int, j: int) -> int:
    return 1 if j == 0 else d * (d - 1) ** (j - 1)


@dataclass(frozen=True, eq=False)
class TreeBall:
    """The ball B(o, R) of T_d with breadth-first vertex numbering."""

    d: int
    R: int
    depth: np.ndarray
    parent: np.ndarray
    child_start: np.ndarray
    n_children: np.ndarray
    level_start: np.ndarray  # level j occupies [level_start[j], level_start[j+1])

    @property
    def b(self) -> int:
        return self.d - 1

    @property
    def size(self) -> int:
        return len(self.depth)

    def __len__(self) -> int:
        return len(self.depth)

    def level(self, j: int) -> slice:
        return slice(int(self.level_start[j]), int(self.level_start[j + 1]))

    def children_of(self, v: int) -> range:
        s = int(self.child_start[v])
        return range(s, s + int(self.n_children[v]))

    @cached_property
    def children(self) -> list[range]:
        return [self.children_of(v) for v in range(self.size)]

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(N, d) table of ambient neighbours; -1 marks a neighbour outside the arena.

        Column 0 is the parent for non-root vertices. The root lists its d children.
        """
        N, d = self.size, self.d
        nbr = np.full((N, d), -1, dtype=np.int64)
        if N == 1:
            return nbr
        nbr[0, :] = np.arange(1, d + 1)
        nbr[1:, 0] = self.parent[1:]
        inner = np.flatnonzero((self.n_children > 0) & (np.arange(N) > 0))
        nbr[inner, 1:] = self.child_start[inner, None] + np.arange(d - 1)
        return nbr

    @cached_property
    def branch(self) -> np.ndarray:
        """Index of the depth-1 ancestor of each vertex (-1 for the root)."""
        br = np.full(self.size, -1, dtype=np.int64)
        if self.R >= 1:
            s = self.level(1)
            br[s] = np.arange(s.start, s.stop)
            for j in range(2, self.R + 1):
                s = self.level(j)
                br[s] = br[self.parent[s]]
        return br

    @cached_property
    def neighbor_lists(self) -> list[list[int]]:
        return [[int(u) for u in row if u >= 0] for row in self.neighbors]


def build_ball(d: int, R: int, budget: int | None = None) -> TreeBall:
    if d < 3:
        raise ValueError(f"d must be >= 3, got {d}")
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    budget = VERTEX_BUDGET if budget is None else budget
    N = ball_size(d, R)
    if N > budget:
        raise ResourceLimitError(f"B(o,{R}) in T_{d} has about 10^{math.log10(N):.1f} vertices, budget is {budget}")
    b = d - 1
    level_start = np.zeros(R + 2, dtype=np.int64)
    for j in range(R + 1):
        level_start[j + 1] = level_start[j] + sphere_size(d, j)

    depth = np.repeat(np.arange(R + 1), np.diff(level_start))
    parent = np.full(N, -1, dtype=np.int64)
    n_children = np.zeros(N, dtype=np.int64)
    child_start = np.zeros(N, dtype=np.int64)
    if R >= 1:
        parent[1 : d + 1] = 0
        n_children[0] = d
        child_start[0] = 1
    for j in range(1, R):
        lo, hi = level_start[j], level_start[j + 1]
        n_children[lo:hi] = b
        child_start[lo:hi] = level_start[j + 1] + b * np.arange(hi - lo)
        parent[level_start[j + 1] : level_start[j + 2]] = np.repeat(np.arange(lo, hi), b)
    return TreeBall(d, R, depth, parent, child_start, n_children, level_start)


@dataclass(frozen=True, eq=False)
class SubtreeMask:
    """A connected set of ball vertices with a designated root."""

    ball: TreeBall
    member: np.ndarray
    root: int = 0
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        member = np.asarray(self.member, dtype=bool)
        object.__setattr__(self, "member", member)
        if member.shape != (self.ball.size,):
            raise ValueError("mask must carry one flag per ball vertex")
        if not member[self.root]:
            raise ValueError(f"root {self.root} is not a member of the mask")
        if self._checked and count_components(self.ball, member) != 1:
            raise ValueError("mask is not connected")

    @property
    def size(self) -> int:
        return int(self.member.sum())

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.member)

    @cached_property
    def rooted(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(order, parent, depth) of the mask seen as a tree rooted at ``root``.

        ``order`` lists members breadth-first from the root; ``parent`` and
        ``depth`` are ambient-indexed arrays (-1 off the mask / at the root).
        """
        ball, member = self.ball, self.member
        parent = np.full(ball.size, -1, dtype=np.int64)
        depth = np.full(ball.size, -1, dtype=np.int64)
        top = int(self.vertices[0])
        if self.root == top:
            # ambient orientation already points away from the root
            order = self.vertices
            nonroot = order[1:]
            parent[nonroot] = ball.parent[nonroot]
            depth[order] = ball.depth[order] - ball.depth[top]
            return order, parent, depth
        nbrs = ball.neighbor_lists
        order = [self.root]
        depth[self.root] = 0
        queue = deque(order)
        while queue:
            x = queue.popleft()
            for y in nbrs[x]:
                if member[y] and depth[y] < 0:
                    depth[y] = depth[x] + 1
                    parent[y] = x
                    order.append(y)
                    queue.append(y)
        return np.asarray(order, dtype=np.int64), parent, depth

    def with_root(self, root: int) -> SubtreeMask:
        return SubtreeMask(self.ball, self.member, root, _checked=False)


def count_components(ball: TreeBall, member: np.ndarray) -> int:
    # in a forest each component has exactly one member whose parent is not a member
    par = ball.parent
    tops = member & ((par < 0) | ~member[np.maximum(par, 0)])
    return int(tops.sum())


def forward_subtree(ball: TreeBall, r: int) -> SubtreeMask:
    """The forward b-ary tree of depth r at the root.

    The excluded root neighbour o- is vertex 1 (the first child of the root).
    """
    if r > ball.R:
        raise ValueError(f"r={r} exceeds ball radius {ball.R}")
    if r < 0:
        raise ValueError("r must be >= 0")
    member = ball.depth <= r
    member &= ball.branch != 1
    return SubtreeMask(ball, member, 0)


def forward_boundary(ball: TreeBall, r: int) -> np.ndarray:
    """External vertex boundary of the forward tree of depth r: o- plus the leaves' children."""
    if r + 1 > ball.R:
        raise InsufficientMarginError(f"boundary of the depth-{r} trap needs radius {r + 1}")
    bd = (ball.depth == r + 1) & (ball.branch != 1)
    bd[1] = True
    return bd


def path_mask(ball: TreeBall, length: int, through_root: bool = False) -> SubtreeMask:
    """A path of ``length`` vertices.

    By default it descends from the root along first children of the forward
    tree. With ``through_root`` it is centred at the root and descends into
    two different branches.
    """
    if length < 1:
        raise ValueError("length must be >= 1")

    def chain(start: int, k: int) -> list[int]:
        out, v = [], start
        for _ in range(k):
            out.append(v)
            if ball.n_children[v] == 0 and len(out) < k:
                raise InsufficientMarginError("path does not fit in the ball")
            v = int(ball.child_start[v])
        return out

    member = np.zeros(ball.size, dtype=bool)
    if through_root:
        left = (length - 1) // 2
        right = length - 1 - left
        member[0] = True
        if left:
            member[chain(1, left)] = True
        if right:
            member[chain(2, right)] = True
    else:
        if length > 1 and ball.R < 1:
            raise InsufficientMarginError("path does not fit in the ball")
        member[0] = True
        if length > 1:
            member[chain(2, length - 1)] = True
    return SubtreeMask(ball, member, 0)


def random_subtree_mask(ball: TreeBall, size: int, rng: np.random.Generator, start: int = 0) -> SubtreeMask:
    """Grow a connected mask from ``start`` by attaching uniformly chosen frontier vertices."""
    nbrs = ball.neighbor_lists
    member = np.zeros(ball.size, dtype=bool)
    member[start] = True
    frontier = [u for u in nbrs[start]]
    in_frontier = set(frontier)
    count = 1
    while count < size and frontier:
        i = int(rng.integers(len(frontier)))
        v = frontier[i]
        frontier[i] = frontier[-1]
        frontier.pop()
        member[v] = True
        count += 1
        for u in nbrs[v]:
            if not member[u] and u not in in_frontier:
                in_frontier.add(u)
                frontier.append(u)
    return SubtreeMask(ball, member, start)


def canonical_root(mask: SubtreeMask) -> int:
    """A root with at least one ambient neighbour outside the mask.

    Prefers the member closest to the arena root. If that member is o with
    all d neighbours in the mask, falls back to the lowest-indexed leaf of
    the mask, whose other neighbours are outside it.
    """
    ball, member = mask.ball, mask.member
    top = int(mask.vertices[0])
    if top != 0 or ball.R == 0:
        return top
    nbr = ball.neighbors[0]
    if not member[nbr].all():
        return 0
    for v in mask.vertices:
        row = ball.neighbors[v]
        inside = sum(1 for u in row if u >= 0 and member[u])
        if inside <= 1:
            return int(v)
    raise ValueError("finite mask without a leaf")


def _bfs_count(nbrs: list[list[int]], allowed: np.ndarray, v: int, r: int) -> int:
    if not allowed[v]:
        return 0
    seen = {v}
    layer = [v]
    for _ in range(r):
        nxt = []
        for x in layer:
            for y in nbrs[x]:
                if allowed[y] and y not in seen:
                    seen.add(y)
                    nxt.append(y)
        layer = nxt
        if not layer:
            break
    return len(seen)


def ball_count(mask: SubtreeMask, v: int, r: int) -> int:
    """|T ∩ B(v, r)| for the mask T, counted within the ambient ball."""
    ball = mask.ball
    if not mask.member[v]:
        raise ValueError(f"vertex {v} is not in the mask")
    if ball.depth[v] + r > ball.R:
        raise InsufficientMarginError(
            f"B({v},{r}) reaches depth {ball.depth[v] + r} beyond arena radius {ball.R}"
        )
    return _bfs_count(ball.neighbor_lists, mask.member, v, r)


def max_ball_count(mask: SubtreeMask, r: int) -> int:
    return max(ball_count(mask, int(v), r) for v in mask.vertices)


def descendant_counts(mask: SubtreeMask, k: int) -> np.ndarray:
    """D_k(x): members exactly k levels below x in the rooted mask (ambient-indexed, 0 off-mask)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    _, parent, _ = mask.rooted
    D = mask.member.astype(np.int64)
    child = np.flatnonzero(parent >= 0)
    for _ in range(k):
        nxt = np.zeros_like(D)
        np.add.at(nxt, parent[child], D[child])
        D = nxt
    return D
