"""Event-driven simulation of the gossip process.

Four samplers share one stochastic core:

* :func:`simulate_forward` -- the actual belief process, driven by a single
  superposed exponential clock of rate ``r`` with a categorical edge draw
  (distributionally identical to independent per-edge Poisson clocks);
* :func:`ergodic_moments` -- the same process with exact piecewise-constant
  time integration of first and requested second moments (no grid bias);
* :func:`sample_stationary_backward` -- reversed-composition sampling of the
  stationary law with an online truncation bound;
* :func:`voter_dual_sample` -- the coalescing-walk dual, exact for unit trust.

Determinism: every run is a pure function of ``(network, parameters, seed)``.
Ensembles derive per-replica/per-chunk streams with the documented key split
in :mod:`gossipfield._rng`, on disjoint index axes per sampler, and merge in
index order, so results do not depend on the worker count (which is capped
by ``GOSSIPFIELD_THREADS``).
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import substream
from .errors import ConvergenceError, ValidationError
from .network import SocialNetwork

BLOCK = 8192
DEFAULT_EVENT_CAP = 10**7

# disjoint substream index ranges so samplers sharing a master seed never
# consume the same Philox stream
_AXIS = 1 << 32
_AX_RUN = 0          # single runs use index 0
_AX_ERGODIC = 1      # replica i -> index 1*AXIS + i
_AX_BACKWARD = 2     # chunk  c -> index 2*AXIS + c
_AX_VOTER = 3        # chunk  c -> index 3*AXIS + c


def _thread_count(requested=None):
    cap = os.environ.get("GOSSIPFIELD_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(requested or cap, cap))


def _parallel_map(fn, count, threads):
    workers = _thread_count(threads)
    if workers == 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


class _Uniforms:
    """Block buffer over a Generator; leftovers carry across kernel calls."""

    def __init__(self, rng, block=BLOCK):
        self.rng = rng
        self.buf = rng.random(block)
        self.off = 0
        self.block = block

    def view(self):
        return self.buf[self.off:]

    def consume(self, k, need=4):
        self.off += k
        if len(self.buf) - self.off < need:
            self.buf = np.concatenate([self.buf[self.off:], self.rng.random(self.block)])
            self.off = 0


def _edge_tables(net: SocialNetwork):
    ecdf = np.cumsum(net.edge_rate)
    total = float(ecdf[-1]) if len(ecdf) else 0.0
    if total <= 0.0:
        raise ValidationError("network has no edges; total meeting rate is 0",
                              code="simulate.rate")
    return ecdf, total


def _check_x0(net: SocialNetwork, x0):
    x = np.array(x0, dtype=np.float64)
    if x.shape != (net.n,):
        raise ValidationError(f"x0 must have length {net.n}", code="simulate.x0")
    if np.any(x[net.stubborn] != net.stubborn_values):
        raise ValidationError("x0 disagrees with stubborn beliefs", code="simulate.x0")
    return x


def default_initial(net: SocialNetwork, value=None) -> np.ndarray:
    """Initial condition with stubborn coordinates pinned.

    Regular agents start at ``value`` (default: midpoint of the belief hull).
    """
    lo, hi = net.belief_hull()
    x = net.belief_vector().copy()
    x[net.regular] = 0.5 * (lo + hi) if value is None else float(value)
    return x


class _GossipDriver:
    """Owns kernel state and random blocks for one forward trajectory."""

    def __init__(self, net, x0, seed, pairs, backend=None, _rng=None):
        self.net = net
        self.kern = _kernels.get_backend(backend)
        self.rng = substream(seed, _AX_RUN) if _rng is None else _rng
        self.ecdf, self.total_rate = _edge_tables(net)
        self.x = _check_x0(net, x0)
        lo, hi = net.belief_hull()
        self.check_hull = bool(np.all(self.x >= lo) and np.all(self.x <= hi))
        self.hull = (lo, hi)
        n = net.n
        pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self.pairs = pairs
        self.pair_a = pairs[:, 0].copy()
        self.pair_b = pairs[:, 1].copy()
        pair_lists = [[] for _ in range(n)]
        for pid, (a, b) in enumerate(pairs):
            pair_lists[a].append(pid)
            if b != a:
                pair_lists[b].append(pid)
        self.pair_ptr = np.zeros(n + 1, dtype=np.int64)
        self.pair_ptr[1:] = np.cumsum([len(p) for p in pair_lists])
        self.pair_idx = np.array(
            [pid for lst in pair_lists for pid in lst], dtype=np.int64
        )
        self.fscal = np.array([0.0, -1.0])
        self.iscal = np.zeros(3, dtype=np.int64)
        self.xmin = self.x.copy()
        self.xmax = self.x.copy()
        self.node_int = np.zeros(n)
        self.node_last = np.zeros(n)
        self.pair_int = np.zeros(len(pairs))
        self.pair_last = np.zeros(len(pairs))
        self._u = np.empty(0)
        self._e = np.empty(0)

    def advance(self, t_end, per_event=None):
        """Run to ``t_end``; optionally call ``per_event(self)`` after each event."""
        step = 1 if per_event is not None else np.iinfo(np.int64).max
        while True:
            consumed_u, consumed_e, reached = self.kern.gossip_kernel(
                self.fscal, self.iscal, self.x, self.xmin, self.xmax,
                self.net.edge_src, self.net.edge_dst, self.net.edge_trust,
                self.ecdf, self.total_rate,
                self.pair_ptr, self.pair_idx, self.pair_a, self.pair_b,
                self.node_int, self.node_last, self.pair_int, self.pair_last,
                self._u, self._e,
                t_end, self.hull[0], self.hull[1], self.check_hull,
                step,
            )
            self._u = self._u[consumed_u:]
            self._e = self._e[consumed_e:]
            if reached:
                break
            if per_event is not None and consumed_u > 0:
                per_event(self)
                continue
            if len(self._u) == 0:
                self._u = self.rng.random(BLOCK)
            if len(self._e) == 0:
                self._e = self.rng.standard_exponential(BLOCK)
        if self.iscal[1] > 0:
            raise AssertionError(
                "belief left the stubborn hull; update rule violated convexity"
            )
        return self

    def flush(self, t_end):
        """Close out time integrals at ``t_end`` (piecewise-constant tail)."""
        self.node_int += self.x * (t_end - self.node_last)
        self.node_last[:] = t_end
        if len(self.pairs):
            self.pair_int += (
                self.x[self.pair_a] * self.x[self.pair_b] * (t_end - self.pair_last)
            )
            self.pair_last[:] = t_end

    @property
    def events(self):
        return int(self.iscal[0])


@dataclass(frozen=True)
class ForwardSummary:
    """Final state of one forward run."""

    x: np.ndarray
    horizon: float
    events: int
    x_min: np.ndarray
    x_max: np.ndarray

    def to_json(self):
        return {
            "horizon": self.horizon,
            "events": self.events,
            "final": self.x.tolist(),
            "min": self.x_min.tolist(),
            "max": self.x_max.tolist(),
        }


def simulate_forward(net, x0, horizon, seed, observers=(), event_log=None,
                     backend=None) -> ForwardSummary:
    """Simulate beliefs to ``horizon``.

    ``observers`` may contain callables invoked as ``obs(t, src, dst, x)``
    after each event; passing any forces the event-at-a-time path.
    ``event_log`` writes a ``time,src,dst,new_belief`` CSV to the given path.
    """
    if horizon < 0:
        raise ValidationError("horizon must be >= 0", code="simulate.horizon")
    callables = [o for o in observers if callable(o)]
    drv = _GossipDriver(net, x0, seed, pairs=(), backend=backend)
    log_rows = [] if event_log is not None else None

    if callables or log_rows is not None:
        def per_event(d):
            t = d.fscal[0]
            ei = int(d.iscal[2])
            a, b = int(net.edge_src[ei]), int(net.edge_dst[ei])
            if log_rows is not None:
                log_rows.append((t, a, b, d.x[a]))
            for obs in callables:
                obs(t, a, b, d.x)
        drv.advance(horizon, per_event=per_event)
    else:
        drv.advance(horizon)

    if log_rows is not None:
        with open(event_log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "src", "dst", "new_belief"])
            for t, a, b, xa in log_rows:
                writer.writerow([f"{t:.17g}", a, b, f"{xa:.17g}"])
    return ForwardSummary(
        x=drv.x.copy(), horizon=float(horizon), events=drv.events,
        x_min=drv.xmin.copy(), x_max=drv.xmax.copy(),
    )


@dataclass
class ErgodicAccumulator:
    """Exact time integrals of X_v and X_v*X_v' with per-batch copies.

    Batch means feed the Monte-Carlo standard errors; accumulators from
    replicas with disjoint seeds merge associatively.
    """

    horizon: float
    pairs: np.ndarray
    node_integral: np.ndarray
    pair_integral: np.ndarray
    batch_node: np.ndarray   # (B, n) per-batch integrals
    batch_pair: np.ndarray   # (B, k)
    batch_len: np.ndarray    # (B,)
    events: int
    final_x: np.ndarray

    def mean(self) -> np.ndarray:
        return self.node_integral / self.horizon

    def second_moment(self) -> np.ndarray:
        return self.pair_integral / self.horizon

    def variance(self) -> np.ndarray:
        """For pairs (v, v'): time-averaged E[X_v X_v'] minus mean product."""
        mean = self.mean()
        return self.second_moment() - mean[self.pairs[:, 0]] * mean[self.pairs[:, 1]]

    def _batch_node_means(self):
        return self.batch_node / self.batch_len[:, None]

    def _batch_pair_means(self):
        return self.batch_pair / self.batch_len[:, None]

    def mean_se(self) -> np.ndarray:
        bm = self._batch_node_means()
        return bm.std(axis=0, ddof=1) / np.sqrt(bm.shape[0])

    def second_se(self) -> np.ndarray:
        bp = self._batch_pair_means()
        return bp.std(axis=0, ddof=1) / np.sqrt(bp.shape[0])

    def variance_se(self) -> np.ndarray:
        bm = self._batch_node_means()
        bv = self._batch_pair_means() - bm[:, self.pairs[:, 0]] * bm[:, self.pairs[:, 1]]
        return bv.std(axis=0, ddof=1) / np.sqrt(bv.shape[0])

    def merge(self, other: "ErgodicAccumulator") -> "ErgodicAccumulator":
        if not np.array_equal(self.pairs, other.pairs):
            raise ValidationError("cannot merge accumulators with different pairs")
        return ErgodicAccumulator(
            horizon=self.horizon + other.horizon,
            pairs=self.pairs,
            node_integral=self.node_integral + other.node_integral,
            pair_integral=self.pair_integral + other.pair_integral,
            batch_node=np.vstack([self.batch_node, other.batch_node]),
            batch_pair=np.vstack([self.batch_pair, other.batch_pair]),
            batch_len=np.concatenate([self.batch_len, other.batch_len]),
            events=self.events + other.events,
            final_x=other.final_x,
        )


def ergodic_moments(net, x0, horizon, seed, pairs=(), batches=100,
                    backend=None, _rng=None) -> ErgodicAccumulator:
    """Time-average first moments (all nodes) and second moments (pairs).

    Integration is exact between events; the horizon splits into ``batches``
    equal segments whose means provide the standard-error estimates.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be > 0", code="simulate.horizon")
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    drv = _GossipDriver(net, x0, seed, pairs=pairs, backend=backend, _rng=_rng)
    edges = np.linspace(0.0, horizon, batches + 1)
    batch_node = np.zeros((batches, net.n))
    batch_pair = np.zeros((batches, len(pairs)))
    prev_node = drv.node_int.copy()
    prev_pair = drv.pair_int.copy()
    for b in range(batches):
        drv.advance(edges[b + 1])
        drv.flush(edges[b + 1])
        batch_node[b] = drv.node_int - prev_node
        batch_pair[b] = drv.pair_int - prev_pair
        prev_node = drv.node_int.copy()
        prev_pair = drv.pair_int.copy()
    return ErgodicAccumulator(
        horizon=float(horizon),
        pairs=pairs,
        node_integral=drv.node_int.copy(),
        pair_integral=drv.pair_int.copy(),
        batch_node=batch_node,
        batch_pair=batch_pair,
        batch_len=np.diff(edges),
        events=drv.events,
        final_x=drv.x.copy(),
    )


def ergodic_ensemble(net, x0, horizon, seed, replicas, pairs=(), batches=20,
                     backend=None, threads=None) -> ErgodicAccumulator:
    """Independent replicas on disjoint seed substreams, merged in order."""

    def run(i):
        return ergodic_moments(net, x0, horizon, 0, pairs=pairs, batches=batches,
                               backend=backend,
                               _rng=substream(seed, _AX_ERGODIC * _AXIS + i))

    results = _parallel_map(run, replicas, threads)
    acc = results[0]
    for other in results[1:]:
        acc = acc.merge(other)
    return acc


@dataclass(frozen=True)
class StationarySample:
    """One (approximate) draw from the stationary belief law."""

    x: np.ndarray
    error_bound: float
    events: int


def _backward_tables(net: SocialNetwork):
    a_index = np.full(net.n, -1, dtype=np.int64)
    a_index[net.regular] = np.arange(net.n_regular)
    stub_value = np.zeros(net.n)
    stub_value[net.stubborn] = net.stubborn_values
    esrc_a = a_index[net.edge_src]
    edst_a = a_index[net.edge_dst]
    edst_is_stub = net.is_stubborn[net.edge_dst].astype(np.int8)
    edst_val = stub_value[net.edge_dst]
    return esrc_a, edst_a, edst_is_stub, edst_val


def sample_stationary_backward(net, tol, seed, event_cap=DEFAULT_EVENT_CAP,
                               backend=None, _uniforms=None) -> StationarySample:
    """Sample the stationary law by accumulating the reversed composition.

    Stops once (max row sum of the running prefix product) * max|x_s| drops
    to ``tol``; that product bounds the dropped tail coordinate-wise.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0", code="simulate.tol")
    kern = _kernels.get_backend(backend)
    uni = _Uniforms(substream(seed, _AX_RUN)) if _uniforms is None else _uniforms
    ecdf, total_rate = _edge_tables(net)
    esrc_a, edst_a, edst_is_stub, edst_val = _backward_tables(net)
    na = net.n_regular
    xmax_abs = float(np.abs(net.stubborn_values).max()) if net.n_stubborn else 0.0

    mt = np.eye(na)
    y = np.zeros(na)
    rho = np.ones(na)
    fscal = np.array([1.0 * xmax_abs])
    iscal = np.zeros(1, dtype=np.int64)
    done = fscal[0] <= tol
    while not done:
        consumed, done = kern.backward_kernel(
            fscal, iscal, mt, y, rho,
            esrc_a, edst_a, net.edge_trust, edst_is_stub, edst_val,
            ecdf, total_rate,
            uni.view(), tol, xmax_abs, event_cap,
        )
        uni.consume(consumed, need=2)
        if not done and iscal[0] >= event_cap:
            raise ConvergenceError(
                f"backward sampler: bound {fscal[0]:.3e} above tol {tol:.3e} "
                f"after {event_cap} events", code="simulate.backward-cap",
            )
    x = net.belief_vector().copy()
    x[net.regular] = y
    return StationarySample(x=x, error_bound=float(fscal[0]), events=int(iscal[0]))


def stationary_ensemble(net, n_samples, tol, seed, event_cap=DEFAULT_EVENT_CAP,
                        backend=None, threads=None, chunk=256) -> np.ndarray:
    """Matrix of ``n_samples`` stationary draws (rows).

    Samples are partitioned into fixed-size chunks, one seed substream per
    chunk, so the result is independent of the worker count.
    """
    n_chunks = (n_samples + chunk - 1) // chunk

    def run(ci):
        uni = _Uniforms(substream(seed, _AX_BACKWARD * _AXIS + ci))
        take = min(chunk, n_samples - ci * chunk)
        out = np.empty((take, net.n))
        for k in range(take):
            out[k] = sample_stationary_backward(
                net, tol, 0, event_cap=event_cap, backend=backend, _uniforms=uni
            ).x
        return out

    return np.vstack(_parallel_map(run, n_chunks, threads))


def _voter_tables(net: SocialNetwork):
    q = net.generator_q().tocsr()
    new_ptr = np.zeros(net.n + 1, dtype=np.int64)
    row_idx, row_cum = [], []
    row_rate = np.zeros(net.n)
    for v in range(net.n):
        lo, hi = int(q.indptr[v]), int(q.indptr[v + 1])
        acc = 0.0
        cnt = 0
        for k in range(lo, hi):
            w = int(q.indices[k])
            if w == v:
                continue
            acc += float(q.data[k])
            row_idx.append(w)
            row_cum.append(acc)
            cnt += 1
        row_rate[v] = acc
        new_ptr[v + 1] = new_ptr[v] + cnt
    stub_val = np.zeros(net.n)
    stub_val[net.stubborn] = net.stubborn_values
    return (
        new_ptr,
        np.array(row_idx, dtype=np.int64),
        np.array(row_cum, dtype=np.float64),
        row_rate,
        stub_val,
        net.is_stubborn.astype(np.int8),
    )


def voter_dual_sample(net, seed, backend=None, _tables=None, _uniforms=None) -> np.ndarray:
    """Exact stationary draw for unit-trust networks via coalescing walks.

    Walks start at every regular agent, move with the dual generator, merge
    on meeting, and halt on the stubborn set; each agent inherits the belief
    of its absorbing stubborn agent.
    """
    if not net.all_unit_trust():
        raise ValidationError(
            "voter dual sampling requires all trust parameters equal to 1",
            code="simulate.voter-trust",
        )
    kern = _kernels.get_backend(backend)
    tables = _voter_tables(net) if _tables is None else _tables
    row_ptr, row_idx, row_cum, row_rate, stub_val, is_stub = tables
    uni = _Uniforms(substream(seed, _AX_RUN)) if _uniforms is None else _uniforms
    na = net.n_regular

    pos = net.regular.astype(np.int64).copy()
    parent = np.arange(na, dtype=np.int64)
    order = np.arange(na, dtype=np.int64)
    value = np.zeros(na)
    occupant = np.full(net.n, -1, dtype=np.int64)
    occupant[net.regular] = np.arange(na)
    iscal = np.array([na], dtype=np.int64)
    done = na == 0
    while not done:
        consumed, done = kern.voter_kernel(
            iscal, pos, parent, order, value, occupant,
            row_ptr, row_idx, row_cum, row_rate, stub_val, is_stub,
            uni.view(),
        )
        uni.consume(consumed, need=4)
    out = net.belief_vector().copy()
    for slot in range(na):
        root = slot
        while parent[root] != root:
            root = parent[root]
        out[net.regular[slot]] = value[root]
    return out


def voter_dual_ensemble(net, n_samples, seed, backend=None, threads=None,
                        chunk=1024) -> np.ndarray:
    """Matrix of coalescing-dual draws (rows); worker-count independent."""
    tables = _voter_tables(net)
    n_chunks = (n_samples + chunk - 1) // chunk

    def run(ci):
        uni = _Uniforms(substream(seed, _AX_VOTER * _AXIS + ci))
        take = min(chunk, n_samples - ci * chunk)
        out = np.empty((take, net.n))
        for k in range(take):
            out[k] = voter_dual_sample(net, 0, backend=backend,
                                       _tables=tables, _uniforms=uni)
        return out

    return np.vstack(_parallel_map(run, n_chunks, threads))
