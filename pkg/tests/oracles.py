"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: transport costs come from
enumerating the vertices of the transportation polytope, W_1 on the line
from cumulative sums, minimizers from dense grids.
"""

from functools import lru_cache
from itertools import combinations

import mpmath
import numpy as np


# transportation polytope vertices ---------------------------------------------


def _connected(edges, n, m):
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(n + j)
        if ri == rj:
            return False  # cycle
        parent[ri] = rj
    return True


@lru_cache(maxsize=None)
def _tree_solvers(n, m):
    """Every spanning tree of K_{n,m} with the matrix mapping marginals to its flows.

    A basic feasible solution of the transportation problem lives on a
    spanning tree; the flows on the tree are the unique solution of the
    marginal equations (one redundant row dropped).
    """
    cells = [(i, j) for i in range(n) for j in range(m)]
    trees, invs = [], []
    for sub in combinations(range(n * m), n + m - 1):
        edges = [cells[k] for k in sub]
        if not _connected(edges, n, m):
            continue
        A = np.zeros((n + m, n + m - 1))
        for c, (i, j) in enumerate(edges):
            A[i, c] = 1.0
            A[n + j, c] = 1.0
        trees.append(sub)
        invs.append(np.linalg.inv(A[:-1]))
    return np.array(trees), np.array(invs)


def transport_cost_by_vertices(a, b, C):
    """Minimum of ``<P, C>`` over all vertices of the transportation polytope."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    C = np.asarray(C, float)
    n, m = C.shape
    if n == 1 or m == 1:
        return float((np.outer(a, b) / a.sum() * C).sum()) if n == 1 else float((a[:, None] * C).sum())
    trees, invs = _tree_solvers(n, m)
    rhs = np.concatenate([a, b])[:-1]
    flows = invs @ rhs  # (T, n+m-1)
    feasible = (flows >= -1e-12).all(axis=1)
    costs = (flows * C.ravel()[trees]).sum(axis=1)
    return float(costs[feasible].min())


# closed forms ---------------------------------------------------------------


def w1_on_line(x, mu, nu):
    """W_1 between weight vectors on sorted points ``x`` of the real line."""
    x = np.asarray(x, float)
    c = np.cumsum(np.asarray(mu, float) - np.asarray(nu, float), axis=-1)[..., :-1]
    return np.abs(c) @ np.diff(x)


def w1_three_points(dist, mu, nu):
    """W_1 on a three-point metric space, rows of ``mu`` against ``nu``.

    Every three-point metric embeds in a tripod with leg lengths
    ``a_i = (d_ij + d_ik - d_jk) / 2``; on a tree W_1 is the sum over edges
    of length times the net mass crossing it.
    """
    d = np.asarray(dist, float)
    legs = np.array([(d[0, 1] + d[0, 2] - d[1, 2]) / 2, (d[0, 1] + d[1, 2] - d[0, 2]) / 2, (d[0, 2] + d[1, 2] - d[0, 1]) / 2])
    return np.abs(np.asarray(mu, float) - np.asarray(nu, float)) @ legs


def tv(mu, nu):
    return float(np.abs(np.asarray(mu) - np.asarray(nu)).sum())


# grids ------------------------------------------------------------------------


def simplex_grid(n, step):
    m = int(round(1.0 / step))
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(m + 1) / m
        return np.stack([a, 1.0 - a], axis=1)
    if n == 3:
        i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        keep = i + j <= m
        a, b = i[keep] / m, j[keep] / m
        return np.stack([a, b, 1.0 - a - b], axis=1)
    raise ValueError("simplex grids only for n <= 3")


def _local_grid(center, step, radius):
    n = center.size
    k = int(round(radius / step))
    off = np.arange(-k, k + 1) * step
    if n == 2:
        a = center[0] + off
        W = np.stack([a, 1.0 - a], axis=1)
    else:
        A, B = np.meshgrid(center[0] + off, center[1] + off, indexing="ij")
        A, B = A.ravel(), B.ravel()
        W = np.stack([A, B, 1.0 - A - B], axis=1)
    return W[(W >= 0).all(axis=1)]


def grid_argmin(objective, n, coarse=1e-3, fine=(1e-4, 1e-5)):
    """Minimizer of a vectorized objective over the simplex (``n <= 3``).

    A full grid at ``coarse`` resolution, then nested local grids around the
    incumbent at each ``fine`` resolution.
    """
    W = simplex_grid(n, coarse)
    best = W[int(np.argmin(objective(W)))]
    if n == 1:
        return best
    radius = 2 * coarse
    for step in fine:
        W = _local_grid(best, step, radius)
        best = W[int(np.argmin(objective(W)))]
        radius = 2 * step * 10
    return best


def dense_argmin_1d(f, lo=0.0, hi=1.0, n=200001, rounds=3):
    """Minimizer of a vectorized scalar function by nested dense grids."""
    for _ in range(rounds):
        x = np.linspace(lo, hi, n)
        k = int(np.argmin(f(x)))
        span = (hi - lo) / (n - 1)
        lo, hi = max(x[k] - 2 * span, 0.0), min(x[k] + 2 * span, 1.0)
    return float(x[k])


# spectra ----------------------------------------------------------------------


def kappa_lagrangian_mp(x, y, n, kappa, dps=40):
    """kappa-Lagrangian with the spectrum of ``xy`` in extended precision."""
    with mpmath.workdps(dps):
        M = mpmath.matrix(np.asarray(x, float)) * mpmath.matrix(np.asarray(y, float))
        ev = mpmath.eig(M, left=False, right=False)
        mods = sorted((abs(e) for e in ev), reverse=True)
        scale = max(mods) if mods else 0
        mods = [v for v in mods if v > mpmath.mpf(10) ** (-dps // 2) * max(scale, 1)]
        if len(mods) > 2 * n:
            raise ValueError("rank above 2n")
        s1 = sum(mods)
        s2 = sum(v * v for v in mods)
        val = s2 - s1 * s1 / (2 * n) + kappa * s1 * s1
        return float(val)


# planar spiral ----------------------------------------------------------------


def spiral_action_xy(x, y):
    """Spiral action at the Cartesian point ``(x, y)`` in extended precision."""
    x, y = mpmath.mpf(x), mpmath.mpf(y)
    r = mpmath.sqrt(x * x + y * y)
    if r >= 1:
        return mpmath.exp(1 - r)
    phi = mpmath.atan2(y, x)
    return 3 - 2 * r**2 + r**2 * (1 - r**2) * mpmath.sin(1 / (1 - r) + phi)


def spiral_gradient_xy(r, phi, dps=30):
    """Cartesian gradient by numerical differentiation of :func:`spiral_action_xy`."""
    with mpmath.workdps(dps):
        x0 = mpmath.mpf(r) * mpmath.cos(phi)
        y0 = mpmath.mpf(r) * mpmath.sin(phi)
        gx = mpmath.diff(lambda t: spiral_action_xy(t, y0), x0)
        gy = mpmath.diff(lambda t: spiral_action_xy(x0, t), y0)
        return np.array([float(gx), float(gy)])
