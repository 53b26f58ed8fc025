"""Exact stationary belief moments.

First moments are harmonic: at every regular agent the stationary mean is the
jump-weighted average of its neighbours' means, with stubborn beliefs as
boundary values.  They are computed two ways -- through the hitting
distribution of the dual walk and through a direct solve of the rate-matrix
system -- and the two routes must agree.

Second moments solve the analogous boundary-value problem for the pair walk:
the coupled rate matrix annihilates E[X_v X_v'] on regular pairs, with
boundary E[X_v X_v'] = E[X_v] E[X_v'] whenever either coordinate is stubborn
(a constant factors out of the expectation, so the boundary is exact).

Closed forms for trees, barbells and Abelian Cayley graphs are implemented
as independent oracles; a dense matrix-power absorption oracle covers any
small network.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.linalg import lu_factor, lu_solve

from .errors import CapacityError, ConvergenceError, ValidationError
from .network import STRUCTURAL_TOL, SocialNetwork, UndirectedGraph

log = logging.getLogger(__name__)

DENSE_UNKNOWNS = 2000          # dense LU at or below; iterative above
PAIR_UNKNOWN_CAP = 4_000_000   # hard cap on pair-system unknowns
ITER_SWEEP_CAP = 1_000_000
ITER_TOL = 1e-12


def _solve_substochastic(a_mat, b, label):
    """Solve (I - J) x = b for substochastic J, multi-RHS.

    ``a_mat`` is I - J (sparse or dense).  Dense LU when the system is small;
    BiCGSTAB with a Gauss-Seidel fallback above, verified to relative
    residual ITER_TOL.
    """
    b = np.atleast_2d(b.T).T  # (m, k)
    m = a_mat.shape[0]
    if m == 0:
        return np.zeros_like(b)
    if m <= DENSE_UNKNOWNS:
        dense = a_mat.toarray() if sp.issparse(a_mat) else np.asarray(a_mat)
        return lu_solve(lu_factor(dense), b)
    a_csr = sp.csr_matrix(a_mat)
    out = np.empty_like(b, dtype=np.float64)
    for j in range(b.shape[1]):
        rhs = b[:, j]
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            out[:, j] = 0.0
            continue
        x, info = spla.bicgstab(a_csr, rhs, rtol=ITER_TOL / 10, atol=0.0,
                                maxiter=20000)
        if info != 0 or np.linalg.norm(a_csr @ x - rhs) > ITER_TOL * scale:
            x = _gauss_seidel(a_csr, rhs, x if info == 0 else None, label)
        out[:, j] = x
    return out


def _gauss_seidel(a_csr, rhs, x0, label):
    lower = sp.tril(a_csr, k=0).tocsr()
    upper = sp.triu(a_csr, k=1).tocsr()
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    scale = np.linalg.norm(rhs)
    for sweep in range(ITER_SWEEP_CAP):
        x = spla.spsolve_triangular(lower, rhs - upper @ x, lower=True)
        if np.linalg.norm(a_csr @ x - rhs) <= ITER_TOL * scale:
            return x
    raise ConvergenceError(
        f"{label}: no convergence within {ITER_SWEEP_CAP} sweeps "
        "(assumption violation or conditioning pathology)"
    )


@dataclass(frozen=True)
class HittingDistribution:
    """Absorption probabilities of the dual walk.

    ``gamma[v, j]`` is the probability that the walk started at v halts at
    ``stubborn[j]``.  Rows are probability vectors; stubborn rows are
    indicators.
    """

    gamma: np.ndarray
    stubborn: np.ndarray

    def column(self, s) -> np.ndarray:
        j = int(np.flatnonzero(self.stubborn == s)[0])
        return self.gamma[:, j]


def hitting_gamma(net: SocialNetwork) -> HittingDistribution:
    """Solve the absorbing linear system for all stubborn targets at once.

    Hitting probabilities depend only on the jump matrix, not on holding
    rates, so the system is assembled from P rather than Q.
    """
    p = net.jump_p()
    reg, stub = net.regular, net.stubborn
    p_aa = p[reg][:, reg]
    p_as = np.asarray(p[reg][:, stub].todense())
    a_mat = sp.identity(len(reg), format="csr") - p_aa
    g_reg = _solve_substochastic(a_mat, p_as, "hitting_gamma")
    gamma = np.zeros((net.n, len(stub)))
    gamma[reg] = g_reg
    gamma[stub, np.arange(len(stub))] = 1.0
    row_sums = gamma.sum(axis=1)
    if gamma.min() < -1e-12 or np.abs(row_sums - 1.0).max() > STRUCTURAL_TOL:
        raise ConvergenceError("hitting probabilities are not probability rows")
    return HittingDistribution(gamma=gamma, stubborn=stub.copy())


def expected_beliefs(net: SocialNetwork) -> np.ndarray:
    """Stationary means via two independent routes that must agree.

    Route 1 weighs stubborn beliefs by the hitting distribution; route 2
    solves the rate-matrix boundary-value problem directly.
    """
    via_gamma = hitting_gamma(net).gamma @ net.stubborn_values
    q = net.generator_q()
    reg, stub = net.regular, net.stubborn
    q_aa = q[reg][:, reg]
    q_as = np.asarray(q[reg][:, stub].todense())
    rhs = q_as @ net.stubborn_values
    direct_reg = _solve_substochastic(-q_aa.tocsr(), rhs, "expected_beliefs")
    direct = net.belief_vector().copy()
    direct[reg] = direct_reg.ravel()
    dev = np.abs(via_gamma - direct).max()
    if dev > STRUCTURAL_TOL:
        raise ConvergenceError(
            f"hitting-probability and harmonic solves disagree by {dev:.3e}"
        )
    return direct


def _pair_neighbor_fn(net: SocialNetwork):
    """Structural successor function of the pair walk (no rates).

    Mirrors the coupled-rate-matrix cases: off the diagonal each coordinate
    jumps alone; on the diagonal the pair jumps jointly, plus solo jumps when
    the trust on that edge is below 1.
    """
    n = net.n
    q = net.generator_q().tocsr()
    theta = net.trust_matrix()
    nbrs = [[] for _ in range(n)]
    solo = [[] for _ in range(n)]  # diagonal solo moves need theta < 1
    for v in range(n):
        for k in range(q.indptr[v], q.indptr[v + 1]):
            w = int(q.indices[k])
            if w != v:
                nbrs[v].append(w)
                if theta[v, w] < 1.0:
                    solo[v].append(w)

    def successors(pid):
        v, vp = divmod(pid, n)
        out = []
        if v != vp:
            for w in nbrs[v]:
                out.append(w * n + vp)
            for wp in nbrs[vp]:
                out.append(v * n + wp)
        else:
            for w in nbrs[v]:
                out.append(w * n + w)
            for w in solo[v]:
                out.append(w * n + v)
                out.append(v * n + w)
        return out

    return successors


def _pair_closure(net: SocialNetwork, seeds, keep):
    """Pair states reachable from ``seeds`` (and their swaps) with ``keep(pid)``."""
    n = net.n
    successors = _pair_neighbor_fn(net)
    seen = set()
    queue = deque()
    for v, vp in seeds:
        for pid in (int(v) * n + int(vp), int(vp) * n + int(v)):
            if keep(pid) and pid not in seen:
                seen.add(pid)
                queue.append(pid)
    while queue:
        pid = queue.popleft()
        for cid in successors(pid):
            if keep(cid) and cid not in seen:
                seen.add(cid)
                queue.append(cid)
    return sorted(seen)


@dataclass(frozen=True)
class MomentSolution:
    """Stationary first/second moments.

    ``second`` is a dense symmetric (n, n) matrix when the full pair support
    was solved, otherwise a dict keyed by node pairs.  Variances are clamped
    to 0 when within -1e-12 (floating-point noise near degenerate agents).
    """

    mean: np.ndarray
    second: object
    variance: np.ndarray
    full: bool

    def second_of(self, v, vp) -> float:
        if self.full:
            return float(self.second[v, vp])
        key = (min(v, vp), max(v, vp))
        return float(self.second[key])

    def correlation(self, pairs) -> np.ndarray:
        out = np.empty(len(pairs))
        for k, (v, vp) in enumerate(pairs):
            cov = self.second_of(v, vp) - self.mean[v] * self.mean[vp]
            sd = np.sqrt(max(self.variance[v], 0.0) * max(self.variance[vp], 0.0))
            out[k] = cov / sd if sd > 0 else 0.0
        return out


def second_moments(net: SocialNetwork, pair_support=None,
                   unknown_cap=PAIR_UNKNOWN_CAP) -> MomentSolution:
    """Solve the pair-walk boundary-value problem for E[X_v X_v'].

    ``pair_support=None`` solves all regular pairs (subject to the unknown
    cap); otherwise only the K-closure of the requested pairs is
    materialized.  Boundary pairs take the exact value E[X_v]E[X_v'].
    """
    n = net.n
    mean = expected_beliefs(net)
    full = pair_support is None
    is_reg = ~net.is_stubborn

    def in_a2(pid):
        v, vp = divmod(pid, n)
        return bool(is_reg[v] and is_reg[vp])

    if full:
        n_unknown = net.n_regular**2
        if n_unknown > unknown_cap:
            raise CapacityError(
                f"{n_unknown} pair unknowns exceed the cap {unknown_cap}; "
                "pass an explicit pair_support"
            )
        unknown = [int(v) * n + int(vp) for v in net.regular for vp in net.regular]
    else:
        unknown = _pair_closure(net, pair_support, in_a2)
        if len(unknown) > unknown_cap:
            raise CapacityError(
                f"pair closure has {len(unknown)} unknowns, above cap {unknown_cap}"
            )
    k_csr = net.coupled_k(rows=unknown)
    col_of = {pid: i for i, pid in enumerate(unknown)}
    m = len(unknown)
    rows, cols, vals = [], [], []
    rhs = np.zeros(m)
    for i, pid in enumerate(unknown):
        row = k_csr.getrow(pid)
        diag = 0.0
        for cid, val in zip(row.indices, row.data):
            if int(cid) == pid:
                diag += float(val)
        if diag >= 0.0:
            raise ConvergenceError("pair-system diagonal must be negative")
        for cid, val in zip(row.indices, row.data):
            cid = int(cid)
            if cid == pid:
                continue
            coef = float(val) / (-diag)
            j = col_of.get(cid)
            if j is None:
                w, wp = divmod(cid, n)
                rhs[i] += coef * mean[w] * mean[wp]
            else:
                rows.append(i)
                cols.append(j)
                vals.append(-coef)
    a_mat = sp.identity(m, format="csr") + sp.coo_matrix(
        (vals, (rows, cols)), shape=(m, m)
    ).tocsr()
    sol = _solve_substochastic(a_mat, rhs, "second_moments").ravel()

    if full:
        second = np.outer(mean, mean)
        for i, pid in enumerate(unknown):
            v, vp = divmod(pid, n)
            second[v, vp] = sol[i]
        second = 0.5 * (second + second.T)  # symmetrize solver noise
        variance = np.diag(second) - mean**2
    else:
        second = {}
        for i, pid in enumerate(unknown):
            v, vp = divmod(pid, n)
            second[(min(v, vp), max(v, vp))] = 0.5 * (
                sol[i] + sol[col_of[vp * n + v]]
            )
        variance = np.full(n, np.nan)
        for (v, vp), val in second.items():
            if v == vp:
                variance[v] = val - mean[v] ** 2
        variance[net.stubborn] = 0.0
    bad = variance < -1e-12
    if np.any(bad & ~np.isnan(variance)):
        worst = np.nanmin(variance)
        raise ConvergenceError(f"variance below clamp tolerance: {worst:.3e}")
    clamped = (variance < 0.0) & (variance >= -1e-12)
    if np.any(clamped):
        log.info("clamped %d tiny negative variances to 0", int(clamped.sum()))
        variance = np.where(clamped, 0.0, variance)
    return MomentSolution(mean=mean, second=second, variance=variance, full=full)


def pair_hitting_eta(net: SocialNetwork, pairs):
    """Pairwise absorption distribution eta over stubborn pairs.

    For each requested pair, solves the embedded pair jump chain with the
    stubborn-pair states absorbing; returns an array of shape
    (len(pairs), n_s, n_s) aligned with ``net.stubborn``.
    """
    n = net.n
    stub = net.stubborn
    s_pairs = [int(s) * n + int(sp_) for s in stub for sp_ in stub]
    s_pos = {pid: (i, j) for i, s in enumerate(stub) for j, sp_ in enumerate(stub)
             for pid in [int(s) * n + int(sp_)]}
    # transient pair states reachable from the requested pairs
    trans = _pair_closure(net, pairs, lambda pid: pid not in s_pos)
    k_csr = net.coupled_k(rows=trans)
    col_of = {pid: i for i, pid in enumerate(trans)}
    m = len(trans)
    rows, cols, vals = [], [], []
    rhs = np.zeros((m, len(s_pairs)))
    for i, pid in enumerate(trans):
        row = k_csr.getrow(pid)
        diag = sum(float(v) for c, v in zip(row.indices, row.data) if int(c) == pid)
        for cid, val in zip(row.indices, row.data):
            cid = int(cid)
            if cid == pid:
                continue
            coef = float(val) / (-diag)
            if cid in s_pos:
                rhs[i, s_pairs.index(cid)] += coef
            else:
                rows.append(i)
                cols.append(col_of[cid])
                vals.append(-coef)
    a_mat = sp.identity(m, format="csr") + sp.coo_matrix(
        (vals, (rows, cols)), shape=(m, m)
    ).tocsr()
    sol = _solve_substochastic(a_mat, rhs, "pair_hitting_eta")
    out = np.zeros((len(pairs), len(stub), len(stub)))
    for k, (v, vp) in enumerate(pairs):
        pid = int(v) * n + int(vp)
        if pid in s_pos:
            i, j = s_pos[pid]
            out[k, i, j] = 1.0
        else:
            for c, spid in enumerate(s_pairs):
                i, j = s_pos[spid]
                out[k, i, j] = sol[col_of[pid], c]
    return out


def backward_ode(net: SocialNetwork, m0, second0, t, local_error=1e-9):
    """Integrate the moment ODEs to time ``t`` from the given initial moments.

    Returns ``(m(t), M(t))``; ``second0=None`` skips the pair system.  The
    stationary solutions are fixed points, approached as t grows.
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    m0 = np.asarray(m0, dtype=np.float64)
    if t == 0:
        return m0.copy(), None if second0 is None else np.asarray(second0).copy()
    q = net.generator_q().tocsr()

    def f_mean(_, y):
        return q @ y

    res = solve_ivp(f_mean, (0.0, t), m0, method="DOP853",
                    rtol=local_error, atol=local_error * 1e-3)
    if not res.success:
        raise ConvergenceError(f"mean ODE integration failed: {res.message}")
    m_t = res.y[:, -1]
    if second0 is None:
        return m_t, None
    k_csr = net.coupled_k()
    y0 = np.asarray(second0, dtype=np.float64).reshape(net.n * net.n)

    def f_pair(_, y):
        return k_csr @ y

    res2 = solve_ivp(f_pair, (0.0, t), y0, method="DOP853",
                     rtol=local_error, atol=local_error * 1e-3)
    if not res2.success:
        raise ConvergenceError(f"pair ODE integration failed: {res2.message}")
    return m_t, res2.y[:, -1].reshape(net.n, net.n)


def brute_force_gamma(net: SocialNetwork, tol=1e-12, max_doublings=80) -> np.ndarray:
    """Absorption probabilities by dense powers of the embedded jump chain.

    Independent oracle for small networks: squares the embedded chain until
    the mass still in the regular set falls below ``tol``.
    """
    if net.n > 64:
        raise CapacityError("brute-force oracle is for small networks (n <= 64)")
    j = np.asarray(net.jump_p().todense())
    j[net.stubborn, net.stubborn] = 1.0
    m = j.copy()
    for _ in range(max_doublings):
        if m[:, net.regular].sum(axis=1).max() < tol:
            break
        m = m @ m
    else:
        raise ConvergenceError("brute-force oracle did not absorb; check Assumption 2.1")
    return m[:, net.stubborn]


# -- closed-form oracles ------------------------------------------------------


def tree_oracle(net: SocialNetwork, s0, s1, graph: UndirectedGraph = None):
    """Closed form for canonical networks on trees with two stubborn agents.

    Means interpolate the stubborn beliefs linearly along the s0-s1 path and
    stay constant on every branch hanging off it (value of the attachment
    node).  With unit trust the same rule applied to squared beliefs gives
    the second moments, hence the variances.

    ``graph`` is the underlying undirected tree; canonically built networks
    carry it as ``net.source_graph`` (the directed support alone loses a
    stubborn-stubborn tree edge).
    """
    s0, s1 = int(s0), int(s1)
    if set(net.stubborn.tolist()) != {s0, s1}:
        raise ValidationError("tree oracle needs exactly the stubborn pair {s0, s1}")
    if graph is None:
        graph = net.source_graph or net.undirected_support()
    if len(graph.edges) != net.n - 1 or not graph.is_connected():
        raise ValidationError("underlying graph is not a tree")
    adj = graph.adjacency()
    prev = {s0: None}
    queue = deque([s0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in prev:
                prev[w] = u
                queue.append(w)
    path = [s1]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    path.reverse()
    dist = len(path) - 1
    on_path = {u: i for i, u in enumerate(path)}
    anchor = dict(on_path)
    queue = deque(path)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in anchor:
                anchor[w] = anchor[u]
                queue.append(w)
    x0, x1 = (float(net.stubborn_values[list(net.stubborn).index(s)]) for s in (s0, s1))
    d0 = np.array([anchor[v] for v in range(net.n)], dtype=np.float64)
    d1 = dist - d0
    means = (d0 * x1 + d1 * x0) / dist
    if not net.all_unit_trust():
        return means, None
    m2 = (d0 * x1**2 + d1 * x0**2) / dist
    return means, m2 - means**2


def barbell_oracle(n, x0, x1) -> np.ndarray:
    """Closed-form means for the standard barbell layout.

    Layout (see ``generators.barbell_graph``): cliques 0..n/2-1 and
    n/2..n-1, bridge {0, n/2}, stubborn agents n/2-1 (belief x0) and n-1
    (belief x1).  Far clique members polarize to ~(n+6)/(n+8) weight on
    their own stubborn agent.
    """
    if n < 6 or n % 2:
        raise ValidationError("barbell oracle needs even n >= 6")
    half = n // 2
    out = np.empty(n)
    den = n + 8.0
    out[: half] = ((n + 6.0) * x0 + 2.0 * x1) / den
    out[half: n] = (2.0 * x0 + (n + 6.0) * x1) / den
    out[0] = ((n + 4.0) * x0 + 4.0 * x1) / den     # bridge endpoint a0
    out[half] = (4.0 * x0 + (n + 4.0) * x1) / den  # bridge endpoint a1
    out[half - 1] = x0
    out[n - 1] = x1
    return out


def cayley_oracle(m, d, generators, s0, s1) -> np.ndarray:
    """Fourier closed form of the hitting probability on Z_m^d.

    Returns gamma^a_{s1} for every node a (row-major order, matching
    ``generators.cayley_torus``).  The double sum runs over the nonzero
    characters; the imaginary residue must vanish to 1e-10.
    """
    n = m**d
    gens = [tuple(int(x) % m for x in g) for g in generators]
    gen_set = set(gens)
    for g in gen_set:
        if tuple((-x) % m for x in g) not in gen_set:
            raise ValidationError(f"generating set not symmetric: misses inverse of {g}")
    gens = sorted(gen_set)
    coords = np.array(
        np.unravel_index(np.arange(n), (m,) * d), dtype=np.int64
    ).T  # (n, d) row-major
    s0 = np.asarray(s0, dtype=np.int64) % m
    s1 = np.asarray(s1, dtype=np.int64) % m
    if np.array_equal(s0, s1):
        raise ValidationError("s0 and s1 must differ")
    freqs = coords[1:]  # nonzero characters
    gmat = np.array(gens, dtype=np.int64)  # (|gens|, d)
    lam = np.cos(2 * np.pi * (freqs @ gmat.T) / m).mean(axis=1)
    if np.any(1.0 - lam < 1e-13):
        raise ValidationError("generating set does not generate Z_m^d")
    gap = 1.0 - lam

    def char(delta):  # (k, d) -> (k, n-1) complex characters
        return np.exp(2j * np.pi * (delta @ freqs.T) / m)

    denom = 2.0 / n * ((1.0 - np.cos(2 * np.pi * (freqs @ (s0 - s1)) / m)) / gap).sum()
    num = (char(coords - s1) - char(coords - s0)) / gap
    gamma = 0.5 + (num.sum(axis=1) / n) / denom
    if np.abs(gamma.imag).max() > 1e-10:
        raise ConvergenceError("imaginary residue above 1e-10 in Cayley oracle")
    return gamma.real
