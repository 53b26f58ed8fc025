"""Social networks of regular and stubborn agents.

A :class:`SocialNetwork` couples a simple directed interaction graph with a
meeting rate and a trust weight per edge, plus a fixed belief for every
stubborn agent.  Stubborn agents have no outgoing edges; every regular agent
must be able to reach at least one stubborn agent along directed edges
(checked at construction).  Networks are immutable once built and cache the
derived matrices:

* ``generator_q`` -- rate matrix of the single dual random walk,
* ``jump_p``      -- its embedded jump matrix (row-stochastic on regular rows),
* ``coupled_k``   -- rate matrix of the pair walk on node pairs, which governs
  stationary second moments,
* ``reversible_extension`` -- the detailed-balance extension of ``jump_p`` to
  the stubborn rows, with its stationary distribution.

Node identifiers are dense integers ``0..n-1`` internally; arbitrary hashable
labels are kept in a symbol table for I/O.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InfluenceError, ReversibilityError, ValidationError

STRUCTURAL_TOL = 1e-10  # absolute tolerance for structural identity checks


@dataclass(frozen=True)
class UndirectedGraph:
    """Simple undirected graph on nodes ``0..n-1`` with a sorted edge tuple."""

    n: int
    edges: tuple

    @staticmethod
    def from_edges(n, edges) -> "UndirectedGraph":
        if n <= 0:
            raise ValidationError("graph needs at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValidationError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u},{v}) outside 0..{n - 1}")
            canon.add((u, v) if u < v else (v, u))
        return UndirectedGraph(n, tuple(sorted(canon)))

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def adjacency(self) -> list:
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return [sorted(a) for a in adj]

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        parent = list(range(self.n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        merged = 0
        for u, v in self.edges:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                merged += 1
        return merged == self.n - 1

    def bfs_distances(self, source) -> np.ndarray:
        """Hop distances from ``source``; unreachable nodes get -1."""
        adj = self.adjacency()
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist


class SocialNetwork:
    """Validated, immutable social network.

    Parameters
    ----------
    names : sequence
        Node labels in index order (any hashables; ints and strings typical).
    stubborn_beliefs : mapping
        ``{label: belief}`` for every stubborn agent.  All other nodes are
        regular.
    edges : iterable of (src, dst, rate, trust)
        Directed edges by label.  Sources must be regular, rates positive,
        trusts in (0, 1]; self-loops and parallel edges are rejected.
    """

    def __init__(self, names, stubborn_beliefs, edges):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValidationError("duplicate node names")
        if not names:
            raise ValidationError("network needs at least one node")
        self.names = names
        self.n = len(names)
        self._index = {name: i for i, name in enumerate(names)}

        unknown = [s for s in stubborn_beliefs if s not in self._index]
        if unknown:
            raise ValidationError(f"stubborn names not in node list: {unknown}")
        stub_idx = sorted(self._index[s] for s in stubborn_beliefs)
        self.stubborn = np.array(stub_idx, dtype=np.int64)
        self.is_stubborn = np.zeros(self.n, dtype=bool)
        self.is_stubborn[self.stubborn] = True
        self.regular = np.flatnonzero(~self.is_stubborn)
        self.stubborn_values = np.array(
            [float(stubborn_beliefs[names[i]]) for i in stub_idx], dtype=np.float64
        )

        src, dst, rate, trust = [], [], [], []
        seen = set()
        for e in edges:
            a, v, r, th = e
            if a not in self._index or v not in self._index:
                raise ValidationError(f"edge ({a},{v}) references unknown node")
            ia, iv = self._index[a], self._index[v]
            if ia == iv:
                raise ValidationError(f"self-loop at {a}")
            if (ia, iv) in seen:
                raise ValidationError(f"parallel edge ({a},{v})")
            seen.add((ia, iv))
            if self.is_stubborn[ia]:
                raise ValidationError(f"stubborn agent {a} has an outgoing edge")
            r = float(r)
            th = float(th)
            if not r > 0.0:
                raise ValidationError(f"edge ({a},{v}) has non-positive rate {r}")
            if not 0.0 < th <= 1.0:
                raise ValidationError(f"edge ({a},{v}) has trust {th} outside (0,1]")
            src.append(ia)
            dst.append(iv)
            rate.append(r)
            trust.append(th)

        order = sorted(range(len(src)), key=lambda k: (src[k], dst[k]))
        self.edge_src = np.array([src[k] for k in order], dtype=np.int64)
        self.edge_dst = np.array([dst[k] for k in order], dtype=np.int64)
        self.edge_rate = np.array([rate[k] for k in order], dtype=np.float64)
        self.edge_trust = np.array([trust[k] for k in order], dtype=np.float64)
        for arr in (self.stubborn, self.regular, self.stubborn_values,
                    self.edge_src, self.edge_dst, self.edge_rate, self.edge_trust):
            arr.setflags(write=False)

        self.source_graph = None  # undirected origin when built canonically
        self._cache = {}
        self._influence = self._compute_influence()

    # -- basic views -------------------------------------------------------

    def index(self, name):
        return self._index[name]

    @property
    def n_regular(self):
        return len(self.regular)

    @property
    def n_stubborn(self):
        return len(self.stubborn)

    @property
    def total_rate(self) -> float:
        return float(self.edge_rate.sum())

    def belief_vector(self) -> np.ndarray:
        """Length-n vector with x_s at stubborn coordinates and 0 elsewhere."""
        x = np.zeros(self.n)
        x[self.stubborn] = self.stubborn_values
        return x

    def belief_hull(self):
        if self.n_stubborn == 0:
            raise ValidationError("network has no stubborn agents")
        return float(self.stubborn_values.min()), float(self.stubborn_values.max())

    def all_unit_trust(self) -> bool:
        return bool(len(self.edge_trust) == 0 or np.all(self.edge_trust == 1.0))

    def undirected_support(self) -> UndirectedGraph:
        """Undirected skeleton of the directed edge set."""
        return UndirectedGraph.from_edges(
            self.n, zip(self.edge_src.tolist(), self.edge_dst.tolist())
        )

    # -- Assumption 2.1 ----------------------------------------------------

    def _compute_influence(self):
        """For each regular agent, the set of stubborn agents it can reach.

        Computed as one backward BFS per stubborn agent over reversed edges.
        Raises InfluenceError if some regular agent reaches none.
        """
        rev = [[] for _ in range(self.n)]
        for a, v in zip(self.edge_src, self.edge_dst):
            rev[v].append(int(a))
        reach = {int(a): set() for a in self.regular}
        for s in self.stubborn:
            seen = np.zeros(self.n, dtype=bool)
            seen[s] = True
            queue = deque([int(s)])
            while queue:
                u = queue.popleft()
                for w in rev[u]:
                    if not seen[w]:
                        seen[w] = True
                        queue.append(w)
            for a in self.regular:
                if seen[a]:
                    reach[int(a)].add(int(s))
        for a, infl in reach.items():
            if not infl:
                raise InfluenceError(
                    f"regular agent {self.names[a]!r} is influenced by no stubborn agent"
                )
        return {a: frozenset(v) for a, v in reach.items()}

    def influence_sets(self):
        return self._influence

    def influencing_values(self, a) -> set:
        """Distinct stubborn belief values influencing regular agent index a."""
        pos = {int(s): i for i, s in enumerate(self.stubborn)}
        return {float(self.stubborn_values[pos[s]]) for s in self._influence[int(a)]}

    # -- derived matrices ----------------------------------------------------

    def generator_q(self) -> sp.csr_matrix:
        """Rate matrix Q: theta*rate off-diagonal, zero row sums, zero stubborn rows."""
        if "q" not in self._cache:
            w = self.edge_trust * self.edge_rate
            rows = np.concatenate([self.edge_src, self.edge_src])
            cols = np.concatenate([self.edge_dst, self.edge_src])
            vals = np.concatenate([w, -w])
            q = sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()
            q.sum_duplicates()
            q.data.setflags(write=False)
            self._cache["q"] = q
        return self._cache["q"]

    def jump_p(self) -> sp.csr_matrix:
        """Embedded jump matrix P on V x V; stubborn rows are zero until extended."""
        if "p" not in self._cache:
            q = self.generator_q()
            out_rate = -q.diagonal()
            for a in self.regular:
                if out_rate[a] <= 0.0:
                    raise ValidationError(
                        f"regular agent {self.names[int(a)]!r} has no outgoing edge"
                    )
            w = self.edge_trust * self.edge_rate
            norm = out_rate[self.edge_src]
            p = sp.coo_matrix(
                (w / norm, (self.edge_src, self.edge_dst)), shape=(self.n, self.n)
            ).tocsr()
            p.data.setflags(write=False)
            self._cache["p"] = p
        return self._cache["p"]

    def trust_matrix(self) -> sp.csr_matrix:
        if "theta" not in self._cache:
            t = sp.coo_matrix(
                (self.edge_trust, (self.edge_src, self.edge_dst)), shape=(self.n, self.n)
            ).tocsr()
            self._cache["theta"] = t
        return self._cache["theta"]

    def coupled_k(self, rows=None) -> sp.csr_matrix:
        """Pair-walk rate matrix K on (V x V) x (V x V), pair id = v*n + v'.

        ``rows`` restricts materialization to the given pair ids (the matrix
        keeps full square shape); by default all n^2 rows are built.
        """
        key = ("k", None if rows is None else tuple(sorted(set(int(r) for r in rows))))
        if key in self._cache:
            return self._cache[key]
        n = self.n
        q = self.generator_q()
        qd = q.diagonal()
        indptr, indices, data = q.indptr, q.indices, q.data
        theta = self.trust_matrix()

        def out_edges(v):
            for k in range(indptr[v], indptr[v + 1]):
                w = int(indices[k])
                if w != v:
                    yield w, float(data[k])

        theta_lookup = {}
        tptr, tidx, tdat = theta.indptr, theta.indices, theta.data
        for v in range(n):
            for k in range(tptr[v], tptr[v + 1]):
                theta_lookup[(v, int(tidx[k]))] = float(tdat[k])

        row_ids = range(n * n) if rows is None else key[1]
        ri, ci, vals = [], [], []

        def add(r, c, val):
            if val != 0.0:
                ri.append(r)
                ci.append(c)
                vals.append(val)

        for pid in row_ids:
            v, vp = divmod(int(pid), n)
            if v != vp:
                for w, qvw in out_edges(v):
                    add(pid, w * n + vp, qvw)
                for wp, qvw in out_edges(vp):
                    add(pid, v * n + wp, qvw)
                add(pid, pid, float(qd[v] + qd[vp]))
            else:
                acc = 0.0
                for w, qvw in out_edges(v):
                    th = theta_lookup[(v, w)]
                    add(pid, w * n + w, th * qvw)
                    add(pid, w * n + v, (1.0 - th) * qvw)
                    add(pid, v * n + w, (1.0 - th) * qvw)
                    acc += th * qvw
                add(pid, pid, 2.0 * float(qd[v]) + acc)
        k = sp.coo_matrix((vals, (ri, ci)), shape=(n * n, n * n)).tocsr()
        k.sum_duplicates()
        self._cache[key] = k
        return k

    def reversible_extension(self) -> "ReversibleExtension":
        if "ext" not in self._cache:
            self._cache["ext"] = _build_reversible_extension(self)
        return self._cache["ext"]

    # -- I/O -----------------------------------------------------------------

    def to_json(self) -> dict:
        stub = {str(self.names[int(s)]): float(x)
                for s, x in zip(self.stubborn, self.stubborn_values)}
        return {
            "nodes": list(self.names),
            "stubborn": stub,
            "edges": [
                {"from": self.names[int(a)], "to": self.names[int(v)],
                 "rate": float(r), "trust": float(t)}
                for a, v, r, t in zip(self.edge_src, self.edge_dst,
                                      self.edge_rate, self.edge_trust)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "SocialNetwork":
        """Build from the explicit JSON schema or the canonical shorthand.

        Explicit: ``{"nodes": [...], "stubborn": {...}, "edges": [...]}``.
        Canonical shorthand: ``{"undirected_edges": [[u,v],...],
        "stubborn": {...}, "trust": 0.5}`` with integer nodes.
        """
        if isinstance(obj, str):
            obj = json.loads(obj)
        if "undirected_edges" in obj:
            pairs = [(int(u), int(v)) for u, v in obj["undirected_edges"]]
            nodes = {u for e in pairs for u in e}
            beliefs = {int(k): float(v) for k, v in obj["stubborn"].items()}
            nodes |= set(beliefs)
            n = obj.get("n", max(nodes) + 1 if nodes else 0)
            graph = UndirectedGraph.from_edges(int(n), pairs)
            return build_canonical(graph, beliefs, float(obj["trust"]))
        names = [_intern_name(x) for x in obj["nodes"]]
        lookup = {str(x): x for x in names}
        beliefs = {}
        for k, v in obj["stubborn"].items():
            if k in lookup:
                beliefs[lookup[k]] = float(v)
            else:
                raise ValidationError(f"stubborn key {k!r} not among nodes")
        edges = [
            (_intern_name(e["from"]), _intern_name(e["to"]), e["rate"], e["trust"])
            for e in obj["edges"]
        ]
        return cls(names, beliefs, edges)


def _intern_name(x):
    return int(x) if isinstance(x, (int, np.integer)) else x


@dataclass(frozen=True)
class ReversibleExtension:
    """Detailed-balance extension of the jump matrix to the stubborn rows.

    ``p`` is irreducible and reversible on all of V; ``pi`` is its unique
    stationary distribution, with ``pi_stubborn`` the stubborn mass and
    ``pi_min`` the smallest entry.
    """

    p: sp.csr_matrix
    pi: np.ndarray
    pi_tilde: np.ndarray
    pi_stubborn: float
    pi_min: float


def _build_reversible_extension(net: SocialNetwork) -> ReversibleExtension:
    p = net.jump_p()
    n = net.n
    reg = net.regular
    if len(reg) == 0:
        raise ReversibilityError("no regular agents to extend from")
    pa = p[reg][:, reg].tocsr()

    # support must be symmetric for reversibility
    asym = (pa > 0) != (pa.T > 0)
    if asym.nnz:
        i, j = asym.nonzero()
        a, b = net.names[int(reg[i[0]])], net.names[int(reg[j[0]])]
        raise ReversibilityError(
            f"regular block not reversible: edge {a!r}->{b!r} lacks a reverse edge"
        )

    # spanning-tree propagation of detailed-balance weights, then edge check
    m = len(reg)
    pal = pa.tolil()
    tilde = np.zeros(m)
    tilde[0] = 1.0
    seen = np.zeros(m, dtype=bool)
    seen[0] = True
    queue = deque([0])
    visited = 1
    while queue:
        u = queue.popleft()
        for w, val in zip(pal.rows[u], pal.data[u]):
            if not seen[w]:
                tilde[w] = tilde[u] * val / pa[w, u]
                seen[w] = True
                visited += 1
                queue.append(w)
    if visited != m:
        raise ReversibilityError("regular block of P is reducible")
    tilde /= tilde.sum()
    flow_a = sp.diags(tilde) @ pa
    imbalance_a = abs(flow_a - flow_a.T)
    if imbalance_a.nnz and imbalance_a.max() > STRUCTURAL_TOL:
        raise ReversibilityError(
            f"detailed balance violated by {imbalance_a.max():.3e} (> {STRUCTURAL_TOL:.0e})"
        )

    tilde_full = np.zeros(n)
    tilde_full[reg] = tilde
    p_as = np.asarray(p[reg][:, net.stubborn].todense())
    tilde_s = tilde @ p_as
    for j, s in enumerate(net.stubborn):
        if tilde_s[j] <= 0.0:
            raise ReversibilityError(
                f"stubborn agent {net.names[int(s)]!r} has no incoming edge; "
                "the reversible extension is undefined"
            )
        tilde_full[s] = tilde_s[j]

    coo = p.tocoo()
    rows = [coo.row]
    cols = [coo.col]
    vals = [coo.data]
    ai, sj = np.nonzero(p_as)
    rows.append(net.stubborn[sj])
    cols.append(reg[ai])
    vals.append(p_as[ai, sj] * tilde[ai] / tilde_s[sj])
    p_ext = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    pi = tilde_full / tilde_full.sum()
    row_sums = np.asarray(p_ext.sum(axis=1)).ravel()
    if np.abs(row_sums - 1.0).max() > STRUCTURAL_TOL:
        raise ReversibilityError("extended P rows do not sum to 1")
    flow = sp.diags(pi) @ p_ext
    imbalance = abs(flow - flow.T)
    if imbalance.nnz and imbalance.max() > STRUCTURAL_TOL:
        raise ReversibilityError("extended P violates detailed balance")

    return ReversibleExtension(
        p=p_ext,
        pi=pi,
        pi_tilde=tilde_full,
        pi_stubborn=float(pi[net.stubborn].sum()),
        pi_min=float(pi.min()),
    )


# -- public operations -------------------------------------------------------


def build_canonical(graph: UndirectedGraph, stubborn_beliefs, trust) -> SocialNetwork:
    """Canonical social network from an undirected graph.

    Every edge between regular agents becomes bidirectional; edges touching a
    stubborn agent point into it.  Rates are ``1/d_a`` per outgoing edge of a
    regular agent ``a`` (degree in the undirected graph) and the trust is the
    constant ``trust``.  Edges between two stubborn agents carry no
    interaction and are dropped.
    """
    if not 0.0 < trust <= 1.0:
        raise ValidationError(f"trust {trust} outside (0,1]")
    if not graph.is_connected():
        raise ValidationError("canonical construction requires a connected graph")
    stubborn_beliefs = {int(k): float(v) for k, v in stubborn_beliefs.items()}
    bad = [s for s in stubborn_beliefs if not 0 <= s < graph.n]
    if bad:
        raise ValidationError(f"stubborn ids outside node range: {bad}")
    if len(stubborn_beliefs) >= graph.n:
        raise ValidationError("every node is stubborn; no regular agents remain")
    deg = graph.degrees()
    stub = set(stubborn_beliefs)
    edges = []
    for u, v in graph.edges:
        if u not in stub:
            edges.append((u, v, 1.0 / deg[u], trust))
        if v not in stub:
            edges.append((v, u, 1.0 / deg[v], trust))
    net = SocialNetwork(range(graph.n), stubborn_beliefs, edges)
    net.source_graph = graph  # kept for closed-form oracles and diagnostics
    return net


def validate_influence(net: SocialNetwork):
    """Map each regular agent index to its influencing stubborn set."""
    return net.influence_sets()


def generator_q(net: SocialNetwork) -> sp.csr_matrix:
    return net.generator_q()


def jump_p(net: SocialNetwork) -> sp.csr_matrix:
    return net.jump_p()


def coupled_k(net: SocialNetwork, rows=None) -> sp.csr_matrix:
    return net.coupled_k(rows)


def reversible_extension(net: SocialNetwork) -> ReversibleExtension:
    return net.reversible_extension()
