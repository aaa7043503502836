# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Bland phase-1 simplex pivoting and seeded rollouts.

Semantics match ``acmg._kernels._fallback`` exactly; see that module for the
tableau layout and the random stream definition.
"""

from libc.math cimport fabs

ctypedef unsigned long long u64
ctypedef long long i64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef u64 STREAM = 0xD1B54A32D192ED03ULL


cdef inline u64 _mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(u64* state) nogil:
    state[0] += GOLDEN
    return <double>(_mix64(state[0]) >> 11) * (1.0 / 9007199254740992.0)


def stream_start(u64 seed, u64 index):
    return _mix64(seed ^ (index * STREAM))


def phase1(double[:, ::1] T, i64[::1] basis, double tol, i64 max_iter):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t ncols = T.shape[1] - 1
    cdef Py_ssize_t i, j, r, enter, leave
    cdef double piv, ratio, best, f
    cdef i64 it = 0
    while True:
        enter = -1
        for j in range(ncols):
            if T[0, j] < -tol:
                enter = j
                break
        if enter < 0:
            return it
        if it >= max_iter:
            return -1
        leave = -1
        best = 0.0
        for r in range(1, m + 1):
            if T[r, enter] > tol:
                ratio = T[r, ncols] / T[r, enter]
                if leave < 0 or ratio < best - tol:
                    leave = r
                    best = ratio
                elif fabs(ratio - best) <= tol and basis[r - 1] < basis[leave - 1]:
                    leave = r
                    best = ratio
        if leave < 0:
            return -2
        piv = T[leave, enter]
        for j in range(ncols + 1):
            T[leave, j] /= piv
        for i in range(m + 1):
            if i != leave:
                f = T[i, enter]
                if f != 0.0:
                    for j in range(ncols + 1):
                        T[i, j] -= f * T[leave, j]
        basis[leave - 1] = enter
        it += 1


cdef inline i64 _draw(double u, const i64* ptr, const double* cdf, i64 idx) nogil:
    cdef i64 k = ptr[idx]
    cdef i64 hi = ptr[idx + 1]
    while k < hi - 1 and not (u < cdf[k]):
        k += 1
    return k


def rollouts(
    i64 N, i64 H, i64 n, u64 seed, i64 S, i64 A, i64 root,
    i64[::1] pol_ptr, i64[::1] pol_act, double[::1] pol_cdf,
    i64[::1] node_state,
    i64[::1] ns_ptr, i64[::1] ns_state, double[::1] ns_cdf,
    i64[::1] ca_ptr, double[::1] ca_cdf, i64[:, ::1] ca_cost,
    double[:, ::1] reward,
    i64[::1] succ_ptr, i64[::1] succ,
    i64[::1] budget,
    i64[:, ::1] node_cost, i64[::1] ell, i64[::1] cmax, i64[::1] check,
    i64[:, ::1] overshoot, double[:, ::1] returns,
):
    cdef i64 r, h, i, node, s, k, a, e, j, m, nxt, ns_count
    cdef i64 sandwich = 0
    cdef i64 lim, t, sur
    cdef u64 state
    cdef double u
    cdef i64[64] cbar
    if n > 64:
        raise ValueError("at most 64 players")
    for r in range(N):
        state = _mix64(seed ^ (<u64>r * STREAM))
        node = root
        for i in range(n):
            cbar[i] = 0
            returns[r, i] = 0.0
        for h in range(1, H + 1):
            s = node_state[node]
            u = _uniform(&state)
            k = _draw(u, &pol_ptr[0], &pol_cdf[0], node)
            a = pol_act[k]
            e = ((h - 1) * S + s) * A + a
            u = _uniform(&state)
            j = _draw(u, &ca_ptr[0], &ca_cdf[0], e)
            u = _uniform(&state)
            m = _draw(u, &ns_ptr[0], &ns_cdf[0], e)
            ns_count = ns_ptr[e + 1] - ns_ptr[e]
            nxt = succ[succ_ptr[k] + (j - ca_ptr[e]) * ns_count + (m - ns_ptr[e])]
            if nxt < 0:
                return 1, sandwich, r
            for i in range(n):
                returns[r, i] += reward[e, i]
                cbar[i] += ca_cost[j, i]
                t = cbar[i] - budget[i]
                if h == 1 or t > overshoot[r, i]:
                    overshoot[r, i] = t
                if check[i]:
                    sur = node_cost[nxt, i]
                    lim = budget[i] - (H - h) * cmax[i]
                    if not ((sur <= cbar[i] and cbar[i] <= sur + h * ell[i])
                            or (sur <= lim and cbar[i] <= lim)):
                        sandwich += 1
            node = nxt
    return 0, sandwich, -1
