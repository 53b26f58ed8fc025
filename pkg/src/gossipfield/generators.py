"""Deterministic and random graph families plus stubborn-agent placement.

Every family is a pure function of ``(recipe, seed)``: the same recipe and
seed always reproduce the same edge list bit for bit.  Random families that
target a connected regime (Erdos-Renyi, configuration model) re-sample up to
a retry budget until the instance is connected.

Simple-graph convention: matching collisions in the configuration model and
parallel picks in preferential attachment are collapsed to single edges and
self-loops are dropped, which distorts the realized degree sequence slightly.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .errors import RecipeError
from .network import UndirectedGraph

CONNECTIVITY_RETRIES = 100

FAMILIES = (
    "line",
    "star",
    "tree",
    "barbell",
    "cayley_torus",
    "erdos_renyi",
    "config_model",
    "preferential_attachment",
    "newman_watts",
)

PLACEMENTS = ("explicit", "uniform-random", "line-extremes", "star-center")


@dataclass(frozen=True)
class Placement:
    strategy: str = "uniform-random"
    count: int = 2
    ids: tuple = ()

    def __post_init__(self):
        if self.strategy not in PLACEMENTS:
            raise RecipeError(f"unknown placement strategy {self.strategy!r}")


@dataclass(frozen=True)
class GraphRecipe:
    family: str
    params: dict = field(default_factory=dict)
    placement: Placement = Placement()
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise RecipeError(f"unknown graph family {self.family!r}")

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "placement": {
                "strategy": self.placement.strategy,
                "count": self.placement.count,
                "ids": list(self.placement.ids),
            },
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj) -> "GraphRecipe":
        if isinstance(obj, str):
            obj = json.loads(obj)
        pl = obj.get("placement", {})
        placement = Placement(
            strategy=pl.get("strategy", "uniform-random"),
            count=int(pl.get("count", 2)),
            ids=tuple(int(i) for i in pl.get("ids", ())),
        )
        return GraphRecipe(
            family=obj["family"],
            params=dict(obj.get("params", {})),
            placement=placement,
            seed=int(obj.get("seed", 0)),
        )


def generate(recipe: GraphRecipe):
    """Build the recipe's graph and place its stubborn set.

    Returns ``(UndirectedGraph, stubborn_ids)``.  Graph generation uses
    substream 0 of the recipe seed and placement uses substream 1, so the
    graph is unchanged when only the placement strategy varies.
    """
    graph = _build_family(recipe.family, dict(recipe.params), recipe.seed)
    pl = recipe.placement
    ids = place_stubborn(
        graph,
        pl.strategy,
        pl.ids if pl.strategy == "explicit" else pl.count,
        recipe.seed,
    )
    return graph, ids


def place_stubborn(graph: UndirectedGraph, strategy, count_or_ids, seed):
    """Choose the stubborn node set; deterministic given the seed.

    Strategies: ``explicit`` (pass ids), ``uniform-random`` (pass a count),
    ``line-extremes`` ({0, n-1}), ``star-center`` (the max-degree node,
    lowest id on ties).
    """
    n = graph.n
    if strategy == "explicit":
        ids = [int(i) for i in count_or_ids]
        if len(set(ids)) != len(ids):
            raise RecipeError("duplicate stubborn ids")
        if any(not 0 <= i < n for i in ids):
            raise RecipeError("stubborn id outside node range")
        if len(ids) >= n:
            raise RecipeError("stubborn count must be smaller than the node count")
        return tuple(sorted(ids))
    if strategy == "uniform-random":
        count = int(count_or_ids)
        if count >= n:
            raise RecipeError("stubborn count must be smaller than the node count")
        if count < 1:
            raise RecipeError("stubborn count must be >= 1")
        rng = substream(seed, 1)
        return tuple(sorted(int(i) for i in rng.choice(n, size=count, replace=False)))
    if strategy == "line-extremes":
        if n < 3:
            raise RecipeError("line-extremes needs n >= 3")
        return (0, n - 1)
    if strategy == "star-center":
        deg = graph.degrees()
        return (int(np.argmax(deg)),)
    raise RecipeError(f"unknown placement strategy {strategy!r}")


def write_edgelist(graph: UndirectedGraph, path):
    """One ascending "u v" pair per line."""
    with open(path, "w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


# -- families -----------------------------------------------------------------


def _build_family(family, params, seed) -> UndirectedGraph:
    rng = substream(seed, 0)
    try:
        if family == "line":
            return line_graph(int(params["n"]))
        if family == "star":
            return star_graph(int(params["n"]))
        if family == "tree":
            return random_tree(int(params["n"]), rng)
        if family == "barbell":
            return barbell_graph(int(params["n"]))
        if family == "cayley_torus":
            gens = params.get("generators")
            return cayley_torus(int(params["m"]), int(params["d"]), gens)
        if family == "erdos_renyi":
            return _retry_connected(
                lambda: erdos_renyi(int(params["n"]), float(params["p"]), rng),
                family,
            )
        if family == "config_model":
            return _retry_connected(
                lambda: config_model(int(params["n"]), params["degree_dist"], rng),
                family,
            )
        if family == "preferential_attachment":
            return preferential_attachment(int(params["n"]), int(params["m"]), rng)
        if family == "newman_watts":
            return newman_watts(
                int(params["n"]), int(params["k"]), float(params["p"]), rng
            )
    except KeyError as exc:
        raise RecipeError(f"family {family!r} missing parameter {exc}") from None
    raise RecipeError(f"unknown graph family {family!r}")


def _retry_connected(draw, family) -> UndirectedGraph:
    for attempt in range(1, CONNECTIVITY_RETRIES + 1):
        graph = draw()
        if graph.is_connected():
            return graph
    raise RecipeError(
        f"{family}: no connected instance within {CONNECTIVITY_RETRIES} attempts"
    )


def line_graph(n) -> UndirectedGraph:
    if n < 2:
        raise RecipeError("line needs n >= 2")
    return UndirectedGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n) -> UndirectedGraph:
    """Star with center 0 and leaves 1..n-1."""
    if n < 2:
        raise RecipeError("star needs n >= 2")
    return UndirectedGraph.from_edges(n, [(0, i) for i in range(1, n)])


def random_tree(n, rng) -> UndirectedGraph:
    """Uniform random labeled tree via a Pruefer sequence."""
    if n < 2:
        raise RecipeError("tree needs n >= 2")
    if n == 2:
        return UndirectedGraph.from_edges(2, [(0, 1)])
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(x)))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, int(x))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return UndirectedGraph.from_edges(n, edges)


def barbell_graph(n) -> UndirectedGraph:
    """Two K_{n/2} cliques on 0..n/2-1 and n/2..n-1 plus the bridge {0, n/2}.

    Standard layout used throughout the package: bridge endpoints are node 0
    and node n/2; the conventional stubborn slots are n/2-1 and n-1.
    """
    if n < 6 or n % 2:
        raise RecipeError("barbell needs even n >= 6")
    half = n // 2
    edges = []
    for i in range(half):
        for j in range(i + 1, half):
            edges.append((i, j))
            edges.append((half + i, half + j))
    edges.append((0, half))
    return UndirectedGraph.from_edges(n, edges)


def cayley_torus(m, d, generators=None) -> UndirectedGraph:
    """Abelian Cayley graph on Z_m^d; default generating set {+-e_i}.

    Nodes are d-tuples in row-major order (``torus_index``).
    """
    if m < 2 or d < 1:
        raise RecipeError("cayley_torus needs m >= 2 and d >= 1")
    if generators is None:
        generators = []
        for i in range(d):
            e = [0] * d
            e[i] = 1
            generators.append(tuple(e))
            e2 = [0] * d
            e2[i] = -1
            generators.append(tuple(e2))
    gens = [tuple(int(x) % m for x in g) for g in generators]
    if any(all(x == 0 for x in g) for g in gens):
        raise RecipeError("generator 0 would create self-loops")
    gen_set = set(gens)
    for g in gen_set:
        if tuple((-x) % m for x in g) not in gen_set:
            raise RecipeError(f"generating set not symmetric: misses inverse of {g}")
    n = m**d
    edges = []
    for idx, v in enumerate(itertools.product(range(m), repeat=d)):
        for g in gen_set:
            w = tuple((a + b) % m for a, b in zip(v, g))
            edges.append((idx, torus_index(w, m)))
    graph = UndirectedGraph.from_edges(n, edges)
    if not graph.is_connected():
        raise RecipeError("generating set does not generate Z_m^d")
    return graph


def torus_index(coords, m) -> int:
    """Row-major index of a Z_m^d coordinate tuple."""
    idx = 0
    for c in coords:
        idx = idx * m + (int(c) % m)
    return idx


def erdos_renyi(n, p, rng) -> UndirectedGraph:
    if n < 2 or not 0.0 < p <= 1.0:
        raise RecipeError("erdos_renyi needs n >= 2 and p in (0,1]")
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    return UndirectedGraph.from_edges(n, zip(iu[mask].tolist(), ju[mask].tolist()))


def config_model(n, degree_dist, rng) -> UndirectedGraph:
    """Configuration model with i.i.d. degrees from ``degree_dist``.

    ``degree_dist`` maps degree -> probability.  Degrees are re-drawn until
    their sum is even; the random half-edge matching is then collapsed to a
    simple graph.
    """
    dist = {int(k): float(v) for k, v in dict(degree_dist).items()}
    ks = np.array(sorted(dist), dtype=np.int64)
    ps = np.array([dist[int(k)] for k in ks])
    if abs(ps.sum() - 1.0) > 1e-9 or (ps < 0).any():
        raise RecipeError("degree_dist probabilities must be >= 0 and sum to 1")
    if (ks < 1).any():
        raise RecipeError("degrees must be >= 1")
    for _ in range(1000):
        degrees = rng.choice(ks, size=n, p=ps)
        if degrees.sum() % 2 == 0:
            break
    else:
        raise RecipeError("could not draw an even degree sum")
    stubs = np.repeat(np.arange(n), degrees)
    perm = rng.permutation(len(stubs))
    stubs = stubs[perm]
    pairs = stubs.reshape(-1, 2)
    keep = pairs[:, 0] != pairs[:, 1]
    return UndirectedGraph.from_edges(n, pairs[keep].tolist())


def preferential_attachment(n, m, rng) -> UndirectedGraph:
    """Degree-proportional attachment, m edges per arriving vertex.

    Starts from two vertices joined by m parallel edges (they count toward
    the attachment weights) and collapses to a simple graph at the end.
    """
    if n < 3 or m < 1:
        raise RecipeError("preferential_attachment needs n >= 3 and m >= 1")
    repeated = [0, 1] * m  # endpoint multiset; index weight == degree
    edges = [(0, 1)]
    for v in range(2, n):
        targets = [int(repeated[rng.integers(0, len(repeated))]) for _ in range(m)]
        for t in targets:
            edges.append((v, t))
            repeated.append(v)
            repeated.append(t)
    return UndirectedGraph.from_edges(n, edges)


def newman_watts(n, k, p, rng) -> UndirectedGraph:
    """Ring Cayley graph with generators {+-1..+-k} plus Poisson(p*k*n)
    uniformly attached shortcuts (collapsed to simple edges)."""
    if n < 2 * k + 2 or k < 1 or p < 0:
        raise RecipeError("newman_watts needs k >= 1, p >= 0 and n > 2k+1")
    edges = []
    for i in range(n):
        for j in range(1, k + 1):
            edges.append((i, (i + j) % n))
    n_short = int(rng.poisson(p * k * n))
    ends = rng.integers(0, n, size=(n_short, 2))
    for u, v in ends:
        if u != v:
            edges.append((int(u), int(v)))
    return UndirectedGraph.from_edges(n, edges)
