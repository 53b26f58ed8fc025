# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; the operation-for-operation twin of ``pure.py``.

Both backends consume random blocks in the same order and perform the same
float64 arithmetic (the extension is compiled with -ffp-contract=off), so
trajectories and samples agree bit for bit with the pure fallback.  The
pairwise-L1 scan is the one exception: its reduction order differs from
numpy's pairwise summation, so agreement there is to rounding error only.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline Py_ssize_t _bisect_right(const double* cdf, double x,
                                     Py_ssize_t lo, Py_ssize_t hi) nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def gossip_kernel(
    double[::1] fscal,
    long long[::1] iscal,
    double[::1] x,
    double[::1] xmin, double[::1] xmax,
    const long long[::1] esrc, const long long[::1] edst, const double[::1] etheta,
    const double[::1] ecdf, double total_rate,
    const long long[::1] pair_ptr, const long long[::1] pair_idx,
    const long long[::1] pair_a, const long long[::1] pair_b,
    double[::1] node_int, double[::1] node_last,
    double[::1] pair_int, double[::1] pair_last,
    const double[::1] u_block, const double[::1] e_block,
    double t_end, double hull_lo, double hull_hi, bint check_hull,
    long long max_events,
):
    cdef double t = fscal[0]
    cdef double pend = fscal[1]
    cdef Py_ssize_t n_edges = ecdf.shape[0]
    cdef Py_ssize_t iu = 0, ie = 0
    cdef Py_ssize_t nu = u_block.shape[0], ne = e_block.shape[0]
    cdef long long done = 0, viol = 0, last_edge = iscal[2]
    cdef bint reached = 0
    cdef double dt, u, xa, th
    cdef Py_ssize_t ei, a, b, k, pid

    with nogil:
        while done < max_events:
            if pend >= 0.0:
                dt = pend
            else:
                if ie >= ne:
                    break
                dt = e_block[ie] / total_rate
                ie += 1
            if t + dt > t_end:
                pend = dt - (t_end - t)
                t = t_end
                reached = 1
                break
            if iu >= nu:
                pend = dt
                break
            pend = -1.0
            u = u_block[iu]
            iu += 1
            t = t + dt
            ei = _bisect_right(&ecdf[0], u * total_rate, 0, n_edges)
            if ei >= n_edges:
                ei = n_edges - 1
            a = esrc[ei]
            b = edst[ei]
            th = etheta[ei]
            node_int[a] += x[a] * (t - node_last[a])
            node_last[a] = t
            for k in range(pair_ptr[a], pair_ptr[a + 1]):
                pid = pair_idx[k]
                pair_int[pid] += x[pair_a[pid]] * x[pair_b[pid]] * (t - pair_last[pid])
                pair_last[pid] = t
            xa = (1.0 - th) * x[a] + th * x[b]
            x[a] = xa
            if xa < xmin[a]:
                xmin[a] = xa
            if xa > xmax[a]:
                xmax[a] = xa
            if check_hull and (xa < hull_lo - 1e-12 or xa > hull_hi + 1e-12):
                viol += 1
            last_edge = ei
            done += 1

    fscal[0] = t
    fscal[1] = pend
    iscal[0] += done
    iscal[1] += viol
    iscal[2] = last_edge
    return iu, ie, bool(reached)


def voter_kernel(
    long long[::1] iscal,
    long long[::1] pos,
    long long[::1] parent,
    long long[::1] order,
    double[::1] value,
    long long[::1] occupant,
    const long long[::1] row_ptr, const long long[::1] row_idx,
    const double[::1] row_cum, const double[::1] row_rate,
    const double[::1] stub_val, const char[::1] is_stub,
    const double[::1] u_block,
):
    cdef long long n_active = iscal[0]
    cdef Py_ssize_t iu = 0
    cdef Py_ssize_t nu = u_block.shape[0]
    cdef double total, target, acc, tgt
    cdef Py_ssize_t i, pick, ci, v, lo, hi, j, w

    with nogil:
        while n_active > 0:
            if iu + 1 >= nu:
                break
            total = 0.0
            for i in range(n_active):
                total += row_rate[pos[order[i]]]
            target = u_block[iu] * total
            iu += 1
            acc = 0.0
            pick = n_active - 1
            for i in range(n_active):
                acc += row_rate[pos[order[i]]]
                if acc > target:
                    pick = i
                    break
            ci = order[pick]
            v = pos[ci]
            lo = row_ptr[v]
            hi = row_ptr[v + 1]
            tgt = u_block[iu] * row_rate[v]
            iu += 1
            j = _bisect_right(&row_cum[0], tgt, lo, hi)
            if j >= hi:
                j = hi - 1
            w = row_idx[j]
            occupant[v] = -1
            if is_stub[w]:
                value[ci] = stub_val[w]
                order[pick] = order[n_active - 1]
                n_active -= 1
            elif occupant[w] >= 0:
                parent[ci] = occupant[w]
                order[pick] = order[n_active - 1]
                n_active -= 1
            else:
                pos[ci] = w
                occupant[w] = ci

    iscal[0] = n_active
    return iu, n_active == 0


def backward_kernel(
    double[::1] fscal,
    long long[::1] iscal,
    double[:, ::1] mt,
    double[::1] y,
    double[::1] rho,
    const long long[::1] esrc_a, const long long[::1] edst_a, const double[::1] etheta,
    const char[::1] edst_is_stub, const double[::1] edst_val,
    const double[::1] ecdf, double total_rate,
    const double[::1] u_block, double tol_bound, double xmax_abs, long long event_cap,
):
    cdef Py_ssize_t n_edges = ecdf.shape[0]
    cdef Py_ssize_t na = y.shape[0]
    cdef Py_ssize_t iu = 0
    cdef Py_ssize_t nu = u_block.shape[0]
    cdef double bound = fscal[0]
    cdef long long events = iscal[0]
    cdef bint done = bound <= tol_bound
    cdef double u, th, c, omth, mx
    cdef Py_ssize_t ei, a, b, i

    with nogil:
        while not done and events < event_cap:
            if iu >= nu:
                break
            u = u_block[iu]
            iu += 1
            ei = _bisect_right(&ecdf[0], u * total_rate, 0, n_edges)
            if ei >= n_edges:
                ei = n_edges - 1
            a = esrc_a[ei]
            th = etheta[ei]
            omth = 1.0 - th
            if edst_is_stub[ei]:
                c = th * edst_val[ei]
                for i in range(na):
                    y[i] += c * mt[a, i]
                    rho[i] -= th * mt[a, i]
                    mt[a, i] *= omth
                mx = rho[0]
                for i in range(1, na):
                    if rho[i] > mx:
                        mx = rho[i]
                bound = mx * xmax_abs
                if bound <= tol_bound:
                    done = 1
            else:
                b = edst_a[ei]
                for i in range(na):
                    mt[b, i] += th * mt[a, i]
                    mt[a, i] *= omth
            events += 1

    fscal[0] = bound
    iscal[0] = events
    return iu, bool(done)


def max_pairwise_l1(const double[:, ::1] m_rows, const double[::1] anchor):
    cdef Py_ssize_t n = m_rows.shape[0]
    cdef Py_ssize_t w = m_rows.shape[1]
    if n < 2:
        return 0.0
    a_np = np.empty(n)
    cdef double[::1] a = a_np
    cdef Py_ssize_t i, j, k, v, u
    cdef double s, d, best
    with nogil:
        for i in range(n):
            s = 0.0
            for k in range(w):
                s += abs(m_rows[i, k] - anchor[k])
            a[i] = s
    order_np = np.argsort(-a_np, kind="stable").astype(np.int64)
    cdef long long[::1] order = order_np
    cdef double[::1] av = a
    with nogil:
        best = 0.0
        v = order[0]
        u = order[1]
        for k in range(w):
            best += abs(m_rows[v, k] - m_rows[u, k])
        for i in range(n - 1):
            v = order[i]
            if 2.0 * av[v] <= best:
                break
            for j in range(i + 1, n):
                u = order[j]
                if av[v] + av[u] <= best:
                    break
                d = 0.0
                for k in range(w):
                    d += abs(m_rows[v, k] - m_rows[u, k])
                if d > best:
                    best = d
    return float(best)
