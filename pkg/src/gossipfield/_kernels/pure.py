"""Pure-Python reference kernels.

``_fast.pyx`` mirrors these functions operation for operation: both backends
consume the same random blocks in the same order and apply the same float64
arithmetic, so simulated trajectories and samples agree bit for bit.  Keep
any change here in lockstep with the compiled twin.

Shared conventions:

* per gossip event, one exponential draw (holding time) is consumed first
  and one uniform draw (edge choice) at commit time;
* categorical choices resolve via "first index with cdf[i] > u * total";
* scalars that must survive across calls travel in small ``fscal``/``iscal``
  arrays owned by the caller.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def _bisect_right(cdf, x, lo, hi):
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def gossip_kernel(
    fscal,      # [t, pending_dt] ; pending_dt < 0 means none
    iscal,      # [events, hull_violations, last_edge]
    x,          # beliefs, mutated in place
    xmin, xmax,
    esrc, edst, etheta, ecdf, total_rate,
    pair_ptr, pair_idx, pair_a, pair_b,
    node_int, node_last, pair_int, pair_last,
    u_block, e_block,
    t_end, hull_lo, hull_hi, check_hull, max_events,
):
    """Advance the gossip process until t_end, a block runs dry, or
    ``max_events`` events commit.  Returns (consumed_u, consumed_e, reached_end).
    """
    t = fscal[0]
    pend = fscal[1]
    n_edges = len(ecdf)
    iu = ie = 0
    nu = len(u_block)
    ne = len(e_block)
    done = 0
    reached = False
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
            reached = True
            break
        if iu >= nu:
            pend = dt
            break
        pend = -1.0
        u = u_block[iu]
        iu += 1
        t = t + dt
        ei = _bisect_right(ecdf, u * total_rate, 0, n_edges)
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
            iscal[1] += 1
        iscal[2] = ei
        done += 1
    fscal[0] = t
    fscal[1] = pend
    iscal[0] += done
    return iu, ie, reached


def voter_kernel(
    iscal,      # [n_active]
    pos,        # node of each cluster root, indexed by cluster slot
    parent,     # union-find over cluster slots
    order,      # active root slots, first n_active entries live
    value,      # absorbed belief per root slot
    occupant,   # node -> active root slot or -1
    row_ptr, row_idx, row_cum, row_rate,   # node jump CSR with per-row cumulative rates
    stub_val, is_stub,
    u_block,
):
    """Run coalescing walks until absorption or the block runs dry.

    Consumes two uniforms per jump (cluster choice, target choice).
    Returns (consumed_u, done).
    """
    n_active = iscal[0]
    iu = 0
    nu = len(u_block)
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
        j = _bisect_right(row_cum, tgt, lo, hi)
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
    fscal,      # [bound]
    iscal,      # [events]
    mt,         # (n_a, n_a) prefix product, stored transposed (row i = column i)
    y,          # accumulated sample, length n_a
    rho,        # row sums of the untransposed prefix product
    esrc_a, edst_a, etheta, edst_is_stub, edst_val, ecdf, total_rate,
    u_block, tol_bound, xmax_abs, event_cap,
):
    """Reversed-composition sampler step.

    Consumes one uniform per event.  Returns (consumed_u, done) where done
    means the truncation bound fell to ``tol_bound``.
    """
    n_edges = len(ecdf)
    iu = 0
    nu = len(u_block)
    bound = fscal[0]
    events = iscal[0]
    done = bound <= tol_bound
    while not done and events < event_cap:
        if iu >= nu:
            break
        u = u_block[iu]
        iu += 1
        ei = _bisect_right(ecdf, u * total_rate, 0, n_edges)
        if ei >= n_edges:
            ei = n_edges - 1
        a = esrc_a[ei]
        th = etheta[ei]
        # elementwise updates: identical rounding to the compiled scalar loop
        if edst_is_stub[ei]:
            col = mt[a]
            y += (th * edst_val[ei]) * col
            rho -= th * col
            col *= 1.0 - th
            bound = float(rho.max()) * xmax_abs
            if bound <= tol_bound:
                done = True
        else:
            mt[edst_a[ei]] += th * mt[a]
            mt[a] *= 1.0 - th
        events += 1
    fscal[0] = bound
    iscal[0] = events
    return iu, done


def max_pairwise_l1(m_rows, anchor):
    """Exact max over row pairs of the L1 distance.

    ``anchor`` is any reference distribution; triangle-inequality pruning
    against per-row anchor distances keeps the scan near O(n^2) entries in
    practice while staying exact.
    """
    n = m_rows.shape[0]
    if n < 2:
        return 0.0
    a = np.abs(m_rows - anchor).sum(axis=1)
    order = np.argsort(-a, kind="stable")
    best = float(np.abs(m_rows[order[0]] - m_rows[order[1]]).sum())
    for i in range(n - 1):
        v = order[i]
        if 2.0 * a[v] <= best:
            break
        rest = order[i + 1 :]
        cand = rest[a[rest] + a[v] > best]
        if len(cand) == 0:
            continue
        d = np.abs(m_rows[cand] - m_rows[v]).sum(axis=1).max()
        if d > best:
            best = float(d)
    return best
