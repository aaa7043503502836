"""Pure-Python kernels, used when the compiled extension is unavailable.

Tableau layout for :func:`phase1`: row 0 holds reduced costs of the phase-1
objective with ``-objective`` in the last column; rows ``1..m`` are the
constraints with the right-hand side last. ``basis[r-1]`` is the column basic
in row ``r``. Entering column: smallest index with reduced cost below
``-tol`` (Bland). Leaving row: minimum ratio, ties to the smallest basic
column index. Works on floats or, with ``tol=0``, on Fractions.

Random stream for :func:`rollouts`: SplitMix64. Rollout ``r`` starts from
``mix64(seed ^ (r * 0xD1B54A32D192ED03))``; each draw adds the golden gamma
and mixes; a uniform is the top 53 bits over ``2**53``. Each step draws, in
order, the joint action, the joint cost atom, and the next state.
"""
from __future__ import annotations

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
STREAM = 0xD1B54A32D192ED03
_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_start(seed: int, index: int) -> int:
    return mix64((seed ^ (index * STREAM)) & MASK)


def phase1(T, basis, tol, max_iter):
    m = len(T) - 1
    ncols = len(T[0]) - 1
    it = 0
    row0 = T[0]
    while True:
        enter = -1
        for j in range(ncols):
            if row0[j] < -tol:
                enter = j
                break
        if enter < 0:
            return it
        if it >= max_iter:
            return -1
        leave = -1
        best = 0
        for r in range(1, m + 1):
            col = T[r][enter]
            if col > tol:
                ratio = T[r][ncols] / col
                if leave < 0 or ratio < best - tol:
                    leave, best = r, ratio
                elif abs(ratio - best) <= tol and basis[r - 1] < basis[leave - 1]:
                    leave, best = r, ratio
        if leave < 0:
            return -2
        prow = T[leave]
        piv = prow[enter]
        for j in range(ncols + 1):
            prow[j] /= piv
        for i in range(m + 1):
            if i != leave:
                row = T[i]
                f = row[enter]
                if f != 0:
                    for j in range(ncols + 1):
                        row[j] -= f * prow[j]
        basis[leave - 1] = enter
        it += 1


def _draw(u, ptr, cdf, idx):
    k, hi = ptr[idx], ptr[idx + 1]
    while k < hi - 1 and not (u < cdf[k]):
        k += 1
    return k


def rollouts(
    N, H, n, seed, S, A, root,
    pol_ptr, pol_act, pol_cdf,
    node_state,
    ns_ptr, ns_state, ns_cdf,
    ca_ptr, ca_cdf, ca_cost,
    reward,
    succ_ptr, succ,
    budget,
    node_cost, ell, cmax, check,
    overshoot, returns,
):
    pol_ptr, pol_act, pol_cdf = pol_ptr.tolist(), pol_act.tolist(), pol_cdf.tolist()
    node_state = node_state.tolist()
    ns_ptr, ns_cdf = ns_ptr.tolist(), ns_cdf.tolist()
    ca_ptr, ca_cdf, ca_cost = ca_ptr.tolist(), ca_cdf.tolist(), ca_cost.tolist()
    reward = reward.tolist()
    succ_ptr, succ = succ_ptr.tolist(), succ.tolist()
    budget, node_cost = budget.tolist(), node_cost.tolist()
    ell, cmax, check = ell.tolist(), cmax.tolist(), check.tolist()
    sandwich = 0
    status = (0, 0, -1)
    over_out = [[0] * n for _ in range(N)]
    ret_out = [[0.0] * n for _ in range(N)]
    for r in range(N):
        state = mix64((seed ^ (r * STREAM)) & MASK)
        node = root
        cbar = [0] * n
        ret = ret_out[r]
        over = over_out[r]
        failed = False
        for h in range(1, H + 1):
            s = node_state[node]
            state = (state + GOLDEN) & MASK
            k = _draw((mix64(state) >> 11) * _INV53, pol_ptr, pol_cdf, node)
            e = ((h - 1) * S + s) * A + pol_act[k]
            state = (state + GOLDEN) & MASK
            j = _draw((mix64(state) >> 11) * _INV53, ca_ptr, ca_cdf, e)
            state = (state + GOLDEN) & MASK
            m = _draw((mix64(state) >> 11) * _INV53, ns_ptr, ns_cdf, e)
            ns_count = ns_ptr[e + 1] - ns_ptr[e]
            nxt = succ[succ_ptr[k] + (j - ca_ptr[e]) * ns_count + (m - ns_ptr[e])]
            if nxt < 0:
                failed = True
                break
            rew, cost, ncost = reward[e], ca_cost[j], node_cost[nxt]
            for i in range(n):
                ret[i] += rew[i]
                cbar[i] += cost[i]
                t = cbar[i] - budget[i]
                if h == 1 or t > over[i]:
                    over[i] = t
                if check[i]:
                    sur = ncost[i]
                    lim = budget[i] - (H - h) * cmax[i]
                    if not ((sur <= cbar[i] <= sur + h * ell[i]) or (sur <= lim and cbar[i] <= lim)):
                        sandwich += 1
            node = nxt
        if failed:
            status = (1, sandwich, r)
            break
    overshoot[:, :] = over_out
    returns[:, :] = ret_out
    if status[0]:
        return status
    return 0, sandwich, -1
