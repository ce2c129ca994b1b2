# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled exact transportation solver (successive shortest paths).

Same algorithm and tie-breaking as ``mmflow._ot_py.solve_transport``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def solve_transport(a, b, C, bint duals=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_arr = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_arr = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] C_arr = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = C_arr.shape[0]
    cdef Py_ssize_t m = C_arr.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] P_arr = np.zeros((n, m))
    cdef double total = 0.0
    cdef double btotal = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        total += a_arr[i]
    for j in range(m):
        btotal += b_arr[j]
    if n == 0 or m == 0 or total <= 0.0:
        if duals:
            return P_arr, 0.0, np.zeros(n), np.zeros(m)
        return P_arr, 0.0

    cdef double[:, ::1] Cv = C_arr
    cdef double[:, ::1] P = P_arr
    cdef Py_ssize_t nv = n + m
    cdef double[::1] supply = a_arr.copy()
    cdef double[::1] demand = b_arr * (total / btotal)
    cdef double[::1] pi = np.zeros(nv)
    cdef double[::1] dist = np.empty(nv)
    cdef Py_ssize_t[::1] pred = np.empty(nv, dtype=np.intp)
    cdef char[::1] done = np.zeros(nv, dtype=np.int8)
    cdef double eps = 1e-15 * total

    cdef Py_ssize_t it, inner, k, u, v, target, source, max_iter = 10 * nv * nv
    cdef double du, nd, rc, dt, delta, rem, best
    cdef bint any_active

    for it in range(max_iter):
        any_active = False
        for k in range(nv):
            dist[k] = INFINITY
            pred[k] = -1
            done[k] = 0
        for i in range(n):
            if supply[i] > eps:
                dist[i] = 0.0
                any_active = True
        if not any_active:
            break
        target = -1
        for inner in range(nv):
            u = -1
            best = INFINITY
            for k in range(nv):
                if not done[k] and dist[k] < best:
                    best = dist[k]
                    u = k
            if u < 0:
                break
            du = best
            done[u] = 1
            if u >= n:
                j = u - n
                if demand[j] > eps:
                    target = u
                    break
                for i in range(n):
                    if P[i, j] > 0.0 and not done[i]:
                        rc = -Cv[i, j] + pi[u] - pi[i]
                        if rc < 0.0:
                            rc = 0.0
                        nd = du + rc
                        if nd < dist[i]:
                            dist[i] = nd
                            pred[i] = u
            else:
                for j in range(m):
                    if not done[n + j]:
                        rc = Cv[u, j] + pi[u] - pi[n + j]
                        if rc < 0.0:
                            rc = 0.0
                        nd = du + rc
                        if nd < dist[n + j]:
                            dist[n + j] = nd
                            pred[n + j] = u
        if target < 0:
            break
        dt = dist[target]
        for k in range(nv):
            if dist[k] < dt:
                pi[k] += dist[k]
            else:
                pi[k] += dt

        delta = demand[target - n]
        v = target
        while pred[v] >= 0:
            u = pred[v]
            if u >= n:
                if P[v, u - n] < delta:
                    delta = P[v, u - n]
            v = u
        source = v
        if supply[source] < delta:
            delta = supply[source]

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

    cdef double cost = 0.0
    for i in range(n):
        for j in range(m):
            cost += P[i, j] * Cv[i, j]
    if duals:
        pi_arr = np.asarray(pi)
        return P_arr, cost, -pi_arr[:n], pi_arr[n:].copy()
    return P_arr, cost
