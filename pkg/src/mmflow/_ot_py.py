"""Pure-Python exact transportation solver.

Successive shortest augmenting paths on the bipartite supply/demand graph,
with Dijkstra on reduced costs. Mirrors ``_ot_core.pyx`` step for step so
that both backends choose the same augmenting paths.
"""

import numpy as np


def solve_transport(a, b, C, duals=False):
    """Solve ``min <P, C>`` over nonnegative ``P`` with marginals ``a``, ``b``.

    ``a`` and ``b`` must have (numerically) equal totals; ``b`` is rescaled to
    the total of ``a``. Returns ``(P, cost)``, or ``(P, cost, u, v)`` with
    dual potentials ``u_i + v_j <= C_ij`` (up to rounding) when ``duals``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    n, m = C.shape
    P = np.zeros((n, m))
    total = a.sum()
    if n == 0 or m == 0 or total <= 0.0:
        return (P, 0.0, np.zeros(n), np.zeros(m)) if duals else (P, 0.0)
    supply = a.copy()
    demand = b * (total / b.sum())
    eps = 1e-15 * total
    nv = n + m
    pi = np.zeros(nv)
    dist = np.empty(nv)
    pred = np.empty(nv, dtype=np.int64)
    done = np.empty(nv, dtype=bool)

    # every augmentation zeroes a supply, a demand, or an existing plan entry
    for _ in range(10 * nv * nv):
        active = supply > eps
        if not active.any():
            break
        dist.fill(np.inf)
        pred.fill(-1)
        done.fill(False)
        dist[:n][active] = 0.0
        target = -1
        for _inner in range(nv):
            cand = np.where(done, np.inf, dist)
            u = int(np.argmin(cand))
            du = cand[u]
            if not np.isfinite(du):
                break
            done[u] = True
            if u >= n:
                j = u - n
                if demand[j] > eps:
                    target = u
                    break
                # reverse arcs demand j -> supply i carry existing plan mass
                rows = np.nonzero(P[:, j] > 0.0)[0]
                if rows.size:
                    rc = -C[rows, j] + pi[u] - pi[rows]
                    nd = du + np.maximum(rc, 0.0)
                    better = (nd < dist[rows]) & ~done[rows]
                    idx = rows[better]
                    dist[idx] = nd[better]
                    pred[idx] = u
            else:
                rc = C[u, :] + pi[u] - pi[n:]
                nd = du + np.maximum(rc, 0.0)
                better = (nd < dist[n:]) & ~done[n:]
                idx = np.nonzero(better)[0]
                dist[n + idx] = nd[better]
                pred[n + idx] = u
        if target < 0:
            break
        dt = dist[target]
        pi += np.minimum(dist, dt)

        # bottleneck along the path
        delta = demand[target - n]
        v = target
        while pred[v] >= 0:
            u = pred[v]
            if u >= n:  # reverse arc u(demand) -> v(supply)
                delta = min(delta, P[v, u - n])
            v = u
        source = v
        delta = min(delta, supply[source])

        v = target
        while pred[v] >= 0:
            u = pred[v]
            if u < n:
                P[u, v - n] += delta
            else:
                rem = P[v, u - n] - delta
                P[v, u - n] = rem if rem > eps else 0.0
            v = u
        supply[source] -= delta
        if supply[source] <= eps:
            supply[source] = 0.0
        demand[target - n] -= delta
        if demand[target - n] <= eps:
            demand[target - n] = 0.0

    cost = float((P * C).sum())
    if duals:
        return P, cost, -pi[:n], pi[n:].copy()
    return P, cost
