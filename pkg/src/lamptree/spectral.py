"""Killed transition operators on finite subtrees and their spectra."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import rng as rngmod
from .percolation import ClusterGraph, extract_cluster, sample_config
from .tree import (
    SubtreeMask,
    TreeBall,
    build_ball,
    canonical_root,
    descendant_counts,
    max_ball_count,
    random_subtree_mask,
)

DENSE_LIMIT = 400
TIE_EPS = 1e-12
NORM_SLACK = 1e-9


class ConvergenceError(RuntimeError):
    pass


class PivotBreakdownWarning(RuntimeWarning):
    pass


def rho(d: int) -> float:
    """Spectral radius 2 sqrt(d-1) / d of simple random walk on T_d."""
    return 2.0 * math.sqrt(d - 1) / d


@dataclass(frozen=True, eq=False)
class KilledOperator:
    """P = A/d restricted to a forest of ball vertices.

    ``vertices`` are ambient indices in breadth-first order, so a parent
    always precedes its children; ``parent`` is local (-1 at component tops).
    """

    ball: TreeBall
    vertices: np.ndarray
    parent: np.ndarray
    matrix: sp.csr_matrix
    n_components: int
    root_pos: int | None

    @property
    def d(self) -> int:
        return self.ball.d

    @property
    def dim(self) -> int:
        return len(self.vertices)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def levels(self) -> np.ndarray:
        return self.ball.depth[self.vertices]


@dataclass(frozen=True)
class SpectralReport:
    top_eigenvalue: float
    root_mass: float | None
    residual: float
    iterations: int
    method: str
    n_vertices: int


@dataclass(frozen=True)
class TrapSpectrum:
    d: int
    r: int
    eigenvalues: np.ndarray
    root_masses: np.ndarray
    closed_form_eigenvalues: np.ndarray
    closed_form_root_masses: np.ndarray


@dataclass
class ShiftProfile:
    root: int
    shift_norms_sq: np.ndarray
    numerical_radius: float
    theta: np.ndarray
    sweep: np.ndarray  # half the top eigenvalue of e^{iθ}S + e^{-iθ}S* per grid angle
    numerical_radius_sweep: float = field(init=False)

    def __post_init__(self):
        self.numerical_radius_sweep = float(self.sweep.max()) if len(self.sweep) else float("nan")

    @property
    def shift_norms(self) -> np.ndarray:
        return np.sqrt(self.shift_norms_sq)


@dataclass(frozen=True)
class SparseBallCertificate:
    d: int
    r: int
    a: float
    delta: float
    n_vertices: int
    max_ball_count: int
    density: float
    top_eigenvalue: float
    threshold: float
    hypothesis_holds: bool
    conclusion_holds: bool


def killed_operator(ball: TreeBall, member: np.ndarray, root: int | None = None) -> KilledOperator:
    member = np.asarray(member, dtype=bool)
    verts = np.flatnonzero(member)
    if len(verts) == 0:
        raise ValueError("cannot assemble an operator on an empty vertex set")
    local = np.full(ball.size, -1, dtype=np.int64)
    local[verts] = np.arange(len(verts))
    amb_par = ball.parent[verts]
    lpar = np.where(amb_par >= 0, local[np.maximum(amb_par, 0)], -1)
    child = np.flatnonzero(lpar >= 0)
    rows = np.concatenate([child, lpar[child]])
    cols = np.concatenate([lpar[child], child])
    vals = np.full(len(rows), 1.0 / ball.d)
    n = len(verts)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    root_pos = int(local[root]) if root is not None and local[root] >= 0 else None
    return KilledOperator(ball, verts, lpar, mat, int((lpar < 0).sum()), root_pos)


def assemble_killed(obj, member: np.ndarray | None = None) -> KilledOperator:
    """Killed operator on a cluster, a mask, or a (ball, member) forest."""
    if obj is None:
        raise ValueError("cannot assemble an operator on an empty cluster")
    if isinstance(obj, ClusterGraph):
        return killed_operator(obj.ball, obj.member, int(obj.vertices[obj.root_pos]))
    if isinstance(obj, SubtreeMask):
        return killed_operator(obj.ball, obj.member, obj.root)
    if isinstance(obj, TreeBall) and member is not None:
        return killed_operator(obj, member)
    raise TypeError(f"cannot assemble a killed operator from {type(obj).__name__}")


def top_eigen(op: KilledOperator, tol: float = 1e-10, max_iter: int | None = None) -> SpectralReport:
    """Largest eigenvalue of P (and the root mass of its eigenvector)."""
    n = op.dim
    if n < DENSE_LIMIT:
        w, V = np.linalg.eigh(op.dense())
        lam, vec, iters, method = float(w[-1]), V[:, -1], 0, "dense"
    else:
        # shifting by rho makes the spectrum nonnegative so the ±λ pair of a
        # bipartite operator cannot compete for the top of the iteration
        shift = rho(op.d)
        A = op.matrix + shift * sp.identity(n, format="csr")
        try:
            w, V = spla.eigsh(A, k=1, which="LA", tol=tol * 1e-2, maxiter=max_iter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge on {n} vertices") from exc
        lam, vec, iters, method = float(w[0]) - shift, V[:, 0], -1, "lanczos"
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(op.matrix @ vec - lam * vec))
    if residual > tol * max(1.0, abs(lam)) and method == "lanczos":
        raise ConvergenceError(f"residual {residual:.3e} above tolerance {tol:.1e}")
    if abs(lam) > rho(op.d) + NORM_SLACK:
        raise RuntimeError(f"top eigenvalue {lam} violates the norm bound {rho(op.d)}")
    root_mass = float(vec[op.root_pos] ** 2) if op.root_pos is not None else None
    return SpectralReport(lam, root_mass, residual, iters, method, n)


def trap_spectrum(d: int, r: int) -> TrapSpectrum:
    """Radial spectrum of the forward depth-r tree.

    On radial vectors the adjacency reduces to an (r+1)x(r+1) tridiagonal
    matrix with off-diagonal sqrt(b); the level-0 coordinate is the root.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    b = d - 1
    off = np.full(r, math.sqrt(b) / d)
    w, V = sla.eigh_tridiagonal(np.zeros(r + 1), off)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    k = np.arange(1, r + 2)
    theta = math.pi / (r + 2)
    return TrapSpectrum(
        d,
        r,
        w,
        V[0, :] ** 2,
        rho(d) * np.cos(k * theta),
        2.0 * np.sin(k * theta) ** 2 / (r + 2),
    )


def radial_trap_vector(d: int, r: int, ball: TreeBall) -> np.ndarray:
    """u_j = b^(-j/2) sin((j+1)π/(r+2)) on each level-j vertex of the forward depth-r tree."""
    from .tree import forward_subtree

    b = d - 1
    mask = forward_subtree(ball, r)
    theta = math.pi / (r + 2)
    j = ball.depth[mask.vertices]
    return b ** (-j / 2.0) * np.sin((j + 1) * theta)


def _inertia_count(op: KilledOperator, shift: float) -> tuple[int, bool]:
    """Number of positive pivots of P - shift I, eliminated leaves first."""
    lev = op.levels
    off2 = (1.0 / op.d) ** 2
    acc = np.zeros(op.dim)
    piv = np.empty(op.dim)
    order = np.argsort(-lev, kind="stable")
    bounds = np.flatnonzero(np.diff(lev[order])) + 1
    breakdown = False
    for grp in np.split(order, bounds):
        pv = -shift - acc[grp]
        if np.any(pv == 0.0):
            breakdown = True
        piv[grp] = pv
        has_par = op.parent[grp] >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            np.add.at(acc, op.parent[grp[has_par]], off2 / pv[has_par])
    return int((piv > 0).sum()), breakdown


def _count_with_retry(op: KilledOperator, shift: float, step: float, E: float) -> int:
    count, broke = _inertia_count(op, shift)
    tries = 0
    while broke and tries < 8:
        warnings.warn(f"zero pivot at E={E}; perturbing the threshold", PivotBreakdownWarning)
        shift += step
        count, broke = _inertia_count(op, shift)
        tries += 1
    return count


def eigen_count_above(op: KilledOperator, E: float, negate: bool = False) -> int:
    """#{eigenvalues of P >= E} by Sylvester inertia on the tree.

    With ``negate`` the same count is taken for -P, i.e. #{eigenvalues of P <= -E},
    obtained as dim minus the number of eigenvalues above -E.
    Ties are resolved with a relative slack TIE_EPS * max(1, |E|).
    """
    eps = TIE_EPS * max(1.0, abs(E))
    if negate:
        return op.dim - _count_with_retry(op, -E + eps, eps, E)
    return _count_with_retry(op, E - eps, -eps, E)


def count_two_sided(op: KilledOperator, E: float) -> int:
    """#{|λ| >= E} for E > 0."""
    return eigen_count_above(op, E) + eigen_count_above(op, E, negate=True)


def _rooted_shift(mask: SubtreeMask) -> tuple[np.ndarray, np.ndarray, int]:
    """Matrix of the rooted shift in an orthonormal basis, plus the member list and root."""
    root = canonical_root(mask)
    rooted = mask.with_root(root) if root != mask.root else mask
    order, parent, _ = rooted.rooted
    b = mask.ball.b
    local = {int(v): i for i, v in enumerate(order)}
    n = len(order)
    S = np.zeros((n, n))
    for i, v in enumerate(order[1:], start=1):
        S[i, local[int(parent[v])]] = 1.0 / math.sqrt(b)
    return S, order, root


def shift_profile(mask: SubtreeMask, K: int, theta_grid_size: int = 1024) -> ShiftProfile:
    """Norms of powers of the rooted shift and its numerical radius.

    ``shift_norms_sq[k] = max_x D_k(x) / b^k``; the numerical radius comes
    from ||A_T|| / (2 sqrt b), and ``sweep`` recomputes it per gauge angle.
    """
    root = canonical_root(mask)
    rooted = mask.with_root(root) if root != mask.root else mask
    b = mask.ball.b
    norms = np.array([descendant_counts(rooted, k).max() / b**k for k in range(K + 1)], dtype=float)
    op = assemble_killed(mask)
    lam = top_eigen(op).top_eigenvalue
    w = lam * mask.ball.d / (2.0 * math.sqrt(b))
    theta = np.linspace(0.0, 2.0 * math.pi, theta_grid_size, endpoint=False)
    S, _, _ = _rooted_shift(rooted)
    sweep = np.array([
        np.linalg.eigvalsh(np.exp(1j * t) * S + np.exp(-1j * t) * S.T)[-1] / 2.0 for t in theta
    ])
    return ShiftProfile(root, norms, w, theta, sweep)


def sparse_ball_radius(delta: float, eta: float) -> int:
    """r_δ = floor((π/√2 - η) / √δ)."""
    return math.floor((math.pi / math.sqrt(2) - eta) / math.sqrt(delta))


def sparse_ball_certificate(mask: SubtreeMask, delta: float, r: int, a: float) -> SparseBallCertificate:
    """Both sides of the sparse-ball implication, reported without asserting it."""
    ball = mask.ball
    count = max_ball_count(mask, r)
    density = count / ball.b**r
    lam = top_eigen(assemble_killed(mask)).top_eigenvalue
    E = rho(ball.d) * (1.0 - delta)
    return SparseBallCertificate(
        ball.d, r, a, delta, mask.size, count, density, lam, E, count < a * ball.b**r, lam < E
    )


def shift_calibration(
    d: int, radius: int, sizes: list[int], m_values: list[int], samples: int, seed: int = 0
) -> list[dict]:
    """Empirical table of (||S^m||, w(S)) over random connected masks."""
    ball = build_ball(d, radius)
    rows = []
    K = max(m_values)
    for i in range(samples):
        g = rngmod.stream(seed, i)
        size = sizes[i % len(sizes)]
        mask = random_subtree_mask(ball, size, g)
        prof = shift_profile(mask, K, theta_grid_size=1)
        for m in m_values:
            rows.append({
                "mask_id": i,
                "n_vertices": mask.size,
                "m": m,
                "shift_norm": float(math.sqrt(prof.shift_norms_sq[m])),
                "numerical_radius": prof.numerical_radius,
                "scaled_gap": m * m * (1.0 - prof.numerical_radius),
            })
    return rows


def calibration_frontier(rows: list[dict]) -> list[dict]:
    """Upper envelope of w(S) over masks with ||S^m|| at most a given level, per m.

    One row per (m, distinct shift_norm) with ``w_max`` the largest numerical
    radius seen among masks whose m-th shift norm does not exceed it.
    """
    out = []
    for m in sorted({r["m"] for r in rows}):
        pts = sorted((r["shift_norm"], r["numerical_radius"]) for r in rows if r["m"] == m)
        best = -math.inf
        for i, (s, w) in enumerate(pts):
            best = max(best, w)
            if i + 1 == len(pts) or pts[i + 1][0] > s:
                out.append({"m": m, "shift_norm": s, "w_max": best})
    return out


def load_calibration() -> list[dict]:
    """The shipped empirical calibration table (T_3 random masks)."""
    import csv
    from importlib.resources import files

    text = files("lamptree").joinpath("data/shift_calibration.csv").read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    conv = {"mask_id": int, "n_vertices": int, "m": int}
    return [{k: conv.get(k, float)(v) for k, v in r.items()} for r in csv.DictReader(lines)]


def cluster_spectrum(cluster: ClusterGraph) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of the cluster operator and the squared root components of their eigenvectors."""
    op = assemble_killed(cluster)
    w, V = np.linalg.eigh(op.dense())
    return w, V[op.root_pos, :] ** 2


@dataclass(frozen=True)
class EdgeTail:
    d: int
    radius: int
    delta: float
    samples: int
    tail_mass: float
    std_error: float
    truncated: bool
    seed: int


def edge_tail_estimate(d: int, radius: int, delta: float, samples: int, seed: int = 0) -> EdgeTail:
    """Empirical mass E Σ_{|λ| >= ρ(1-δ)} φ_λ(o)^2 of the root spectral measure on B(o, radius).

    ``truncated`` is set when any sampled cluster reached the arena boundary.
    """
    ball = build_ball(d, radius)
    E = rho(d) * (1.0 - delta)
    vals = np.zeros(samples)
    truncated = False
    for i in range(samples):
        cl = extract_cluster(ball, sample_config(ball, rngmod.stream(seed, i)))
        if cl is None:
            continue
        truncated |= cl.truncated_at_boundary
        w, mass = cluster_spectrum(cl)
        vals[i] = mass[np.abs(w) >= E].sum()
    m = rngmod.Moments.of(vals)
    return EdgeTail(d, radius, delta, samples, m.mean, m.std_error, truncated, seed)
