"""Spectral and hitting-time analysis of reversible social networks.

All quantities refer to the rate-1 uniformized chain on the full node set:
the extended jump matrix P drives a continuous-time walk with unit
exponential holding times (generator P - I).  Hitting probabilities are
insensitive to this convention, but the mixing time is defined with respect
to it, and the fluidity

    Phi = n * pi_min / (pi(S) * tau)

inherits that normalization.  The stubborn rows of P are extended by
detailed balance (see ``network.reversible_extension``); other extensions
would change tau and Phi, so reports carry the extension tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import CapacityError, ConvergenceError, ValidationError
from .moments import _solve_substochastic, expected_beliefs, hitting_gamma, second_moments
from .network import SocialNetwork

MIX_THRESHOLD = 2.0 / math.e      # on the summed-absolute (2*TV) scale
STATE_CAP = 5000                  # uniformization cap
UNIFORMIZATION_TOL = 1e-12
PROXY_CAP = 5000                  # above this, reports fall back to tau_2


def psi(eps: float) -> float:
    """Concentration rate function 16/eps * log(2 e^2 / eps)."""
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    return 16.0 / eps * math.log(2.0 * math.e**2 / eps)


def _poisson_weights(t, tol):
    """Poisson(t) pmf values 0..K with tail mass below ``tol``."""
    if t == 0.0:
        return [1.0]
    use_log = t > 700.0  # exp(-t) underflows; evaluate each weight in logs
    w = 1.0 if use_log else math.exp(-t)
    total = 0.0
    ws = []
    k = 0
    while True:
        if use_log:
            w = math.exp(k * math.log(t) - t - math.lgamma(k + 1))
        ws.append(w)
        total += w
        if total >= 1.0 - tol:
            return ws
        if not use_log:
            w = w * t / (k + 1)
        k += 1
        if k > 20 * t + 200:
            raise ConvergenceError("uniformization weight recursion stalled")


def transition_matrix(p, t, tol=UNIFORMIZATION_TOL, horizon_cap=5000.0) -> np.ndarray:
    """Rows of exp(t(P - I)) by Poisson-weighted powers of P.

    The Poisson tail is truncated below ``tol``; all terms are nonnegative,
    so the result is a (sub)stochastic matrix with row defect < tol.
    """
    p = sp.csr_matrix(p)
    n = p.shape[0]
    if t < 0:
        raise ValidationError("t must be >= 0")
    if t > horizon_cap:
        raise CapacityError(
            f"uniformization horizon {t} above cap {horizon_cap}; "
            "the chain mixes too slowly for matrix exponentials"
        )
    ws = _poisson_weights(t, tol)
    term = np.eye(n)
    out = ws[0] * term
    for k in range(1, len(ws)):
        term = p @ term
        if ws[k] != 0.0:
            out += ws[k] * term
    return out


def _max_pair_l1(mat, anchor, backend=None):
    kern = _kernels.get_backend(backend)
    return float(kern.max_pairwise_l1(np.ascontiguousarray(mat),
                                      np.ascontiguousarray(anchor)))


def mixing_time(p, tol_time=1e-3, pi=None, state_cap=STATE_CAP,
                backend=None) -> float:
    """First t at which every pair of rows of exp(t(P-I)) is within 2/e in
    summed absolute difference, located by doubling plus bisection.

    The pairwise distance is evaluated exactly (pruned scan); evaluated
    points are checked for monotone decay, which Markov contraction
    guarantees.
    """
    p = sp.csr_matrix(p)
    n = p.shape[0]
    if n > state_cap:
        raise CapacityError(
            f"{n} states exceed the uniformization cap {state_cap}; "
            "use the relaxation-time proxy"
        )
    if n < 2:
        return 0.0
    anchor = np.full(n, 1.0 / n) if pi is None else np.asarray(pi, dtype=np.float64)
    evals = []

    def dbar(t):
        val = _max_pair_l1(transition_matrix(p, t), anchor, backend)
        evals.append((t, val))
        return val

    hi = 1.0
    while dbar(hi) > MIX_THRESHOLD:
        hi *= 2.0
        if hi > 1e9:
            raise ConvergenceError("mixing time beyond 1e9; chain may be reducible")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > tol_time:
        mid = 0.5 * (lo + hi)
        if dbar(mid) <= MIX_THRESHOLD:
            hi = mid
        else:
            lo = mid
    evals.sort(key=lambda tv: tv[0])
    for (t0, v0), (t1, v1) in zip(evals, evals[1:]):
        if v1 > v0 + 1e-9:
            raise ConvergenceError(
                f"pairwise distance increased between t={t0} and t={t1}"
            )
    return hi


def relaxation_time(p, pi) -> float:
    """Inverse spectral gap 1/(1 - lambda_2) of the reversible jump matrix."""
    p = sp.csr_matrix(p)
    pi = np.asarray(pi, dtype=np.float64)
    n = p.shape[0]
    if n < 2:
        raise ValidationError("relaxation time needs at least two states")
    d = np.sqrt(pi)
    sym = sp.diags(d) @ p @ sp.diags(1.0 / d)
    if n <= 3000:
        mat = sym.toarray()
        vals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        lam2 = vals[-2]
    else:
        vals = sp.linalg.eigsh(0.5 * (sym + sym.T), k=2, which="LA",
                               return_eigenvectors=False)
        lam2 = np.sort(vals)[-2]
    gap = 1.0 - lam2
    if gap <= 1e-14:
        raise ConvergenceError("vanishing spectral gap; chain may be reducible")
    return float(1.0 / gap)


@dataclass(frozen=True)
class ConductanceResult:
    value: float
    exact: bool   # exact subset enumeration vs. spectral sweep-cut bound


def conductance(p, pi, exact_cap=20) -> ConductanceResult:
    """Bottleneck ratio min over pi(S) <= 1/2 of flow(S, S^c)/pi(S).

    Exact subset enumeration up to ``exact_cap`` states; beyond that a
    Fiedler sweep cut gives an upper bound, flagged as inexact.
    """
    p = sp.csr_matrix(p)
    pi = np.asarray(pi, dtype=np.float64)
    n = p.shape[0]
    flow = (sp.diags(pi) @ p).tocoo()
    ei = flow.row
    ej = flow.col
    ew = flow.data
    off = ei != ej
    ei, ej, ew = ei[off], ej[off], ew[off]

    if n <= exact_cap:
        best = np.inf
        subsets = np.arange(1, 2**n - 1, dtype=np.int64)
        for chunk_start in range(0, len(subsets), 4096):
            chunk = subsets[chunk_start:chunk_start + 4096]
            member = (chunk[:, None] >> np.arange(n)) & 1  # (c, n)
            mass = member @ pi
            mi = (chunk[:, None] >> ei) & 1
            mj = (chunk[:, None] >> ej) & 1
            cut = ((mi == 1) & (mj == 0)) @ ew
            ok = mass <= 0.5
            if ok.any():
                ratio = cut[ok] / mass[ok]
                best = min(best, float(ratio.min()))
        return ConductanceResult(value=best, exact=True)

    # sweep cut on the Fiedler ordering of the normalized Laplacian
    d = np.sqrt(pi)
    sym = (sp.diags(d) @ p @ sp.diags(1.0 / d)).toarray()
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    fiedler = vecs[:, -2] / d
    order = np.argsort(fiedler)
    in_set = np.zeros(n, dtype=bool)
    adj = [dict() for _ in range(n)]
    for i, j, w in zip(ei, ej, ew):
        adj[i][j] = adj[i].get(j, 0.0) + w
    mass = 0.0
    cut = 0.0
    best = np.inf
    for v in order[:-1]:
        # reversibility: adding v gains its flow to the outside, loses the
        # flow already crossing into it
        delta = 0.0
        for j, w in adj[v].items():
            delta += -w if in_set[j] else w
        cut += delta
        in_set[v] = True
        mass += pi[v]
        if 0.0 < mass <= 0.5:
            best = min(best, cut / mass)
    return ConductanceResult(value=float(best), exact=False)


def expected_hitting_time(p, pi, stubborn) -> float:
    """E_pi of the first hitting time of the stubborn set, rate-1 chain.

    Solves h = 1 + P h off the target set, h = 0 on it, then averages h
    under pi.
    """
    p = sp.csr_matrix(p)
    pi = np.asarray(pi, dtype=np.float64)
    n = p.shape[0]
    stub = np.asarray(stubborn, dtype=np.int64)
    if len(stub) == n:
        return 0.0
    keep = np.setdiff1d(np.arange(n), stub)
    a_mat = sp.identity(len(keep), format="csr") - p[keep][:, keep]
    h_keep = _solve_substochastic(a_mat, np.ones(len(keep)), "expected_hitting_time")
    h = np.zeros(n)
    h[keep] = h_keep.ravel()
    return float(pi @ h)


@dataclass(frozen=True)
class FluidityReport:
    """Stationary structure, mixing and influence summary of a network."""

    pi: np.ndarray
    pi_stubborn: float
    pi_min: float
    mixing_time: float
    mixing_is_proxy: bool
    relaxation_time: float
    conductance: float
    conductance_exact: bool
    hit_time: float
    hit_time_lower_bound: float
    fluidity: float
    gamma_bar: np.ndarray
    mean_z: float
    var_z: float
    delta_star: float
    extension: str = "detailed-balance"

    def to_json(self) -> dict:
        return {
            "pi": self.pi.tolist(),
            "pi_stubborn": self.pi_stubborn,
            "pi_min": self.pi_min,
            "mixing_time": self.mixing_time,
            "mixing_is_proxy": self.mixing_is_proxy,
            "relaxation_time": self.relaxation_time,
            "conductance": self.conductance,
            "conductance_exact": self.conductance_exact,
            "hit_time": self.hit_time,
            "hit_time_lower_bound": self.hit_time_lower_bound,
            "fluidity": self.fluidity,
            "gamma_bar": self.gamma_bar.tolist(),
            "mean_z": self.mean_z,
            "var_z": self.var_z,
            "delta_star": self.delta_star,
            "extension": self.extension,
        }


def fluidity_report(net: SocialNetwork, tol_time=1e-3, backend=None,
                    proxy_cap=PROXY_CAP) -> FluidityReport:
    """Assemble pi, tau, tau_2, conductance, hitting time, Phi and the
    stubborn influence summary (gamma_bar, Z moments, Delta_*)."""
    ext = net.reversible_extension()
    tau2 = relaxation_time(ext.p, ext.pi)
    if net.n <= proxy_cap:
        tau = mixing_time(ext.p, tol_time=tol_time, pi=ext.pi, backend=backend)
        proxy = False
    else:
        tau = tau2
        proxy = True
    cond = conductance(ext.p, ext.pi)
    hit = expected_hitting_time(ext.p, ext.pi, net.stubborn)
    gamma = hitting_gamma(net).gamma
    gamma_bar = ext.pi @ gamma
    mean_z = float(gamma_bar @ net.stubborn_values)
    var_z = float(gamma_bar @ (net.stubborn_values - mean_z) ** 2)
    lo, hi = net.belief_hull()
    return FluidityReport(
        pi=ext.pi,
        pi_stubborn=ext.pi_stubborn,
        pi_min=ext.pi_min,
        mixing_time=tau,
        mixing_is_proxy=proxy,
        relaxation_time=tau2,
        conductance=cond.value,
        conductance_exact=cond.exact,
        hit_time=hit,
        hit_time_lower_bound=1.0 / (2.0 * ext.pi_stubborn) - 1.5,
        fluidity=net.n * ext.pi_min / (ext.pi_stubborn * tau),
        gamma_bar=gamma_bar,
        mean_z=mean_z,
        var_z=var_z,
        delta_star=hi - lo,
    )


@dataclass(frozen=True)
class ConcentrationRow:
    eps: float
    threshold: float
    mean_violation: float
    var_violation: object  # float, or None when the variance channel is off
    bound: float


@dataclass(frozen=True)
class ConcentrationReport:
    """Empirical check of the homogeneous-influence bounds.

    ``applicable`` records the pi(S) <= 1/4 hypothesis; when it fails the
    bound rows are reported but carry no guarantee.
    """

    rows: tuple
    applicable: bool
    pi_stubborn: float
    fluidity: float
    delta_star: float
    mean_z: float
    var_z: float

    def to_json(self) -> dict:
        return {
            "applicable": self.applicable,
            "pi_stubborn": self.pi_stubborn,
            "fluidity": self.fluidity,
            "delta_star": self.delta_star,
            "mean_z": self.mean_z,
            "var_z": self.var_z,
            "rows": [
                {
                    "eps": r.eps,
                    "threshold": r.threshold,
                    "mean_violation": r.mean_violation,
                    "var_violation": r.var_violation,
                    "bound": r.bound,
                }
                for r in self.rows
            ],
        }


def concentration_report(net: SocialNetwork, eps_list, include_variance=None,
                         report: FluidityReport = None, means=None,
                         variances=None, backend=None) -> ConcentrationReport:
    """Fraction of agents whose mean (and, for unit trust, variance) deviates
    from the weighted-mean belief by more than Delta_* eps, against the
    theoretical bound psi(eps)/Phi.
    """
    if include_variance is None:
        include_variance = net.all_unit_trust()
    if include_variance and not net.all_unit_trust():
        raise ValidationError(
            "variance concentration requires all trust parameters equal to 1",
            code="fluidity.variance-channel",
        )
    if report is None:
        report = fluidity_report(net, backend=backend)
    if means is None:
        means = expected_beliefs(net)
    if include_variance and variances is None:
        variances = second_moments(net).variance
    n = net.n
    delta = report.delta_star
    atol = 1e-12 * (1.0 + abs(delta))  # solver noise floor for exact ties
    rows = []
    for eps in eps_list:
        thr = delta * float(eps)
        mean_frac = float(np.count_nonzero(
            np.abs(means - report.mean_z) > thr + atol) / n)
        var_frac = None
        if include_variance:
            var_frac = float(np.count_nonzero(
                np.abs(variances - report.var_z) > delta**2 * float(eps) + atol) / n)
        rows.append(ConcentrationRow(
            eps=float(eps), threshold=thr, mean_violation=mean_frac,
            var_violation=var_frac, bound=psi(float(eps)) / report.fluidity,
        ))
    return ConcentrationReport(
        rows=tuple(rows),
        applicable=report.pi_stubborn <= 0.25,
        pi_stubborn=report.pi_stubborn,
        fluidity=report.fluidity,
        delta_star=report.delta_star,
        mean_z=report.mean_z,
        var_z=report.var_z,
    )


def mean_histogram(means, hull, bins=50):
    """Empirical density histogram of stationary means over the belief hull.

    Returns (edges, counts) with ``bins`` uniform bins on [hull_lo, hull_hi].
    """
    lo, hi = hull
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(np.asarray(means), bins=bins, range=(lo, hi))
    return edges, counts
