"""Compiled inner loops for the coupled event engine.

These mirror ``engine.step_coupled`` exactly; the pure-Python path is kept as
the reference and the two are checked against each other in the test suite.
"""
import numba
import numpy as np

K_JSQ, K_JSQ_D, K_MJSQ, K_CJSQ, K_JSQ_ND, K_PI_C, K_BATCH = 0, 1, 2, 3, 4, 5, 6

OK, DONE, VIOLATION = 0, 1, 2
V_L1, V_ORDER, V_SANDWICH_LO, V_SANDWICH_HI = 1, 2, 3, 4


@numba.njit(cache=True)
def distinct_ranks(u, N):
    """Rows of distinct ranks in 1..N by partial Fisher-Yates on uniforms ``u``."""
    n_rows, D = u.shape
    out = np.empty((n_rows, D), dtype=np.int64)
    perm = np.arange(1, N + 1)
    swaps = np.empty(D, dtype=np.int64)
    for e in range(n_rows):
        for j in range(D):
            k = j + int(u[e, j] * (N - j))
            if k >= N:
                k = N - 1
            swaps[j] = k
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
            out[e, j] = perm[j]
        for j in range(D - 1, -1, -1):
            k = swaps[j]
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
    return out


@numba.njit(inline="always")
def _rank_len(Q, p, b, N, r):
    thr = N - r + 1
    i = 0
    while i < b and Q[p, i + 1] >= thr:
        i += 1
    return i


@numba.njit(inline="always")
def _add_at_level(Q, L, qmax, p, b, level):
    if level >= b:
        L[p] += 1
    else:
        Q[p, level + 1] += 1
        if Q[p, level + 1] > qmax[p, level + 1]:
            qmax[p, level + 1] = Q[p, level + 1]


@numba.njit(inline="always")
def _tail(Q, L, p, b, m):
    s = L[p]
    for i in range(m, b + 1):
        s += Q[p, i]
    return s


@numba.njit(cache=True)
def advance(t, arrival, dep_rank, sample_min, distinct, u_aux, u_fb,
            N, b, T, batch_ell,
            kind, pd, pn, pi_prob, pell, sample_col, wo_d, cdf_layout,
            Q, L, qmax, delta, fallback, counters,
            snap_times, snap_Q, snap_L, snap_delta,
            audit, l1_pairs, ord_pairs, sandwich, info):
    """Consume one chunk of events. Returns OK, DONE (passed T) or VIOLATION.

    counters = [tasks arrived, arrival epochs, events applied, next snapshot]
    """
    P = kind.shape[0]
    S = snap_times.shape[0]
    chosen = np.zeros(P, dtype=np.int64)
    batch_buf = np.empty(max(distinct.shape[1], 1), dtype=np.int64)
    levels = np.empty(max(batch_ell, 1), dtype=np.int64)
    for e in range(t.shape[0]):
        te = t[e]
        while counters[3] < S and snap_times[counters[3]] < te:
            k = counters[3]
            for p in range(P):
                for i in range(b):
                    snap_Q[k, p, i] = Q[p, i + 1]
                snap_L[k, p] = L[p]
                for q in range(P):
                    snap_delta[k, p, q] = delta[p, q]
            counters[3] += 1
        if te > T:
            return DONE

        if not arrival[e]:
            r = dep_rank[e]
            for p in range(P):
                i = _rank_len(Q, p, b, N, r)
                if i >= 1 and not (kind[p] == K_PI_C and i == 1):
                    Q[p, i] -= 1
        elif batch_ell > 0:
            counters[0] += batch_ell
            counters[1] += 1
            for p in range(P):
                kp = kind[p]
                if kp == K_BATCH:
                    dd = wo_d[p]
                    if dd >= N:
                        for j in range(batch_ell):
                            batch_buf[j] = j + 1
                    else:
                        for j in range(dd):
                            batch_buf[j] = distinct[e, j]
                        batch_buf[:dd].sort()
                    for j in range(batch_ell):
                        levels[j] = _rank_len(Q, p, b, N, batch_buf[j])
                    for j in range(batch_ell):
                        _add_at_level(Q, L, qmax, p, b, levels[j])
                else:
                    r = 1 if kp == K_JSQ else pn[p] + 1
                    for j in range(batch_ell):
                        _add_at_level(Q, L, qmax, p, b, _rank_len(Q, p, b, N, r))
        else:
            counters[0] += 1
            counters[1] += 1
            for p in range(P):
                kp = kind[p]
                if kp == K_JSQ:
                    r = 1
                elif kp == K_MJSQ:
                    r = pn[p] + 1
                elif kp == K_CJSQ:
                    w = pn[p] + 1
                    r = int(u_aux[e] * w) + 1
                    if r > w:
                        r = w
                elif kp == K_PI_C:
                    if u_aux[e] < pi_prob[p]:
                        r = N - Q[p, 1] + 1
                        q2 = Q[p, 2] if b >= 2 else 0
                        if Q[p, 1] == q2:
                            fallback[p] += 1
                        if r > N:
                            r = N
                    else:
                        r = 0
                elif cdf_layout[p] > 0:
                    dd = pd[p]
                    if cdf_layout[p] == 1:
                        level = 0
                        for i in range(1, b + 1):
                            if u_aux[e] < (Q[p, i] / N) ** dd:
                                level = i
                            else:
                                break
                    else:
                        t1 = (Q[p, 1] / N) ** dd
                        t2 = (Q[p, 2] / N) ** dd
                        if u_aux[e] < t1 - t2:
                            level = 1
                        elif u_aux[e] < 1.0 - t2:
                            level = 0
                        else:
                            level = 2
                    r = N - Q[p, level] + 1
                else:
                    col = sample_col[p]
                    if col >= 0:
                        r = sample_min[e, col]
                    elif wo_d[p] >= N:
                        r = 1
                    else:
                        r = N + 1
                        for j in range(wo_d[p]):
                            if distinct[e, j] < r:
                                r = distinct[e, j]
                    if kp == K_JSQ_ND:
                        w = pn[p] + 1
                        if w > N:
                            w = N
                        if r > w:
                            r = int(u_fb[e] * w) + 1
                            if r > w:
                                r = w
                chosen[p] = r
                if r == 0:
                    L[p] += 1
                else:
                    _add_at_level(Q, L, qmax, p, b, _rank_len(Q, p, b, N, r))
            for p in range(P):
                for q in range(p + 1, P):
                    if chosen[p] != chosen[q]:
                        delta[p, q] += 1
                        delta[q, p] += 1
        counters[2] += 1

        if audit:
            for j in range(l1_pairs.shape[0]):
                p = l1_pairs[j, 0]
                q = l1_pairs[j, 1]
                s = 0
                for i in range(1, b + 1):
                    s += abs(Q[p, i] - Q[q, i])
                if s > 2 * delta[p, q]:
                    info[0] = counters[2] - 1
                    info[1] = V_L1
                    info[2] = p
                    info[3] = q
                    info[4] = 0
                    return VIOLATION
            for j in range(ord_pairs.shape[0]):
                p = ord_pairs[j, 0]
                q = ord_pairs[j, 1]
                for m in range(1, b + 1):
                    if _tail(Q, L, p, b, m) > _tail(Q, L, q, b, m):
                        info[0] = counters[2] - 1
                        info[1] = V_ORDER
                        info[2] = p
                        info[3] = q
                        info[4] = m
                        return VIOLATION
            for j in range(sandwich.shape[0]):
                lo = sandwich[j, 0]
                mid = sandwich[j, 1]
                hi = sandwich[j, 2]
                for m in range(1, b + 1):
                    lower = _tail(Q, L, lo, b, m) - _tail(Q, L, hi, b, m + 1)
                    upper = _tail(Q, L, hi, b, m) - _tail(Q, L, lo, b, m + 1)
                    code = 0
                    if Q[mid, m] < lower:
                        code = V_SANDWICH_LO
                    elif Q[mid, m] > upper:
                        code = V_SANDWICH_HI
                    if code:
                        info[0] = counters[2] - 1
                        info[1] = code
                        info[2] = lo
                        info[3] = mid
                        info[4] = m
                        return VIOLATION
    return OK
