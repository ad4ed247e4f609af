"""Weighted undirected graphs, neighborhood profiles and distance oracles.

Nodes are the integers ``1..n``. Graphs are immutable once built; every
function here is pure.
"""
from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

INF = math.inf


class GraphError(ValueError):
    """Raised for malformed or invalid graph input."""


class ParseError(GraphError):
    pass


def default_max_weight(n: int) -> int:
    return n * n + n


@dataclass(frozen=True)
class WeightedGraph:
    n: int
    weights: Mapping[tuple[int, int], int]
    W: int
    labels: Mapping[int, str] = field(default_factory=dict, compare=False)
    adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj: list[list[int]] = [[] for _ in range(self.n + 1)]
        for (u, v), w in self.weights.items():
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge ({u},{v}) references unknown node")
            if u > v:
                raise GraphError("edge keys must be ordered (u < v)")
            if not (1 <= w <= self.W):
                raise GraphError(f"weight {w} of edge ({u},{v}) outside [1,{self.W}]")
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "adj", tuple(tuple(sorted(a)) for a in adj))
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        if not _is_connected(self.adj, self.n):
            raise GraphError("graph is disconnected")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, int] | tuple[int, int]],
                   W: int | None = None) -> "WeightedGraph":
        weights: dict[tuple[int, int], int] = {}
        for e in edges:
            u, v = e[0], e[1]
            w = e[2] if len(e) > 2 else 1
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in weights:
                raise GraphError(f"duplicate edge {key}")
            weights[key] = w
        return cls(n, weights, default_max_weight(n) if W is None else W)

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    @property
    def m(self) -> int:
        return len(self.weights)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def weight(self, u: int, v: int) -> int:
        return self.weights[(u, v) if u < v else (v, u)]

    def edges(self) -> list[tuple[int, int, int]]:
        return [(u, v, w) for (u, v), w in sorted(self.weights.items())]

    def with_weights(self, weights: Mapping[tuple[int, int], int], W: int | None = None) -> "WeightedGraph":
        """Same topology, new weight assignment."""
        if set(weights) != set(self.weights):
            raise GraphError("new weight map must cover exactly the existing edges")
        return WeightedGraph(self.n, dict(weights), self.W if W is None else W, self.labels)

    def check_node(self, v: int) -> None:
        if not (isinstance(v, int) and 1 <= v <= self.n):
            raise GraphError(f"unknown node {v!r}")


def _is_connected(adj, n: int) -> bool:
    seen = [False] * (n + 1)
    seen[1] = True
    stack = [1]
    count = 1
    while stack:
        u = stack.pop()
        for x in adj[u]:
            if not seen[x]:
                seen[x] = True
                count += 1
                stack.append(x)
    return count == n


# ---------------------------------------------------------------------------
# edge-list format


def parse_edge_list(text: str, W: int | None = None) -> WeightedGraph:
    """Parse ``n m W`` header plus ``u v w`` lines; ``#`` lines are comments.

    Labels other than 1..n are re-indexed in order of first appearance and
    the mapping is kept in ``graph.labels``.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        lines.append((lineno, s.split()))
    if not lines:
        raise ParseError("empty edge list")
    lineno, head = lines[0]
    if len(head) != 3:
        raise ParseError(f"line {lineno}: header must be 'n m W'")
    try:
        n, m, w_max = (int(x) for x in head)
    except ValueError:
        raise ParseError(f"line {lineno}: non-integer header") from None
    body = lines[1:]
    if len(body) != m:
        raise ParseError(f"header announces {m} edges, found {len(body)}")

    raw_edges = []
    for lineno, parts in body:
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'u v w'")
        try:
            w = int(parts[2])
        except ValueError:
            raise ParseError(f"line {lineno}: weight is not an integer") from None
        raw_edges.append((parts[0], parts[1], w, lineno))

    labels = {tok for e in raw_edges for tok in e[:2]}
    if all(t.isdigit() and 1 <= int(t) <= n for t in labels):
        index = {t: int(t) for t in labels}
        label_map: dict[int, str] = {}
    else:
        index = {}
        for u, v, _, _ in raw_edges:
            for t in (u, v):
                if t not in index:
                    index[t] = len(index) + 1
        label_map = {i: t for t, i in index.items()}
    if len(index) > n:
        raise GraphError(f"more than n={n} distinct nodes")

    weights: dict[tuple[int, int], int] = {}
    for u, v, w, lineno in raw_edges:
        a, b = index[u], index[v]
        if a == b:
            raise GraphError(f"line {lineno}: self-loop at node {u}")
        key = (min(a, b), max(a, b))
        if key in weights:
            raise GraphError(f"line {lineno}: duplicate edge {u} {v}")
        if not (1 <= w <= w_max):
            raise GraphError(f"line {lineno}: weight {w} outside [1,{w_max}]")
        weights[key] = w
    return WeightedGraph(n, weights, w_max if W is None else W, label_map)


def build_from_edge_list(text: str) -> WeightedGraph:
    return parse_edge_list(text)


def to_edge_list(g: WeightedGraph) -> str:
    out = [f"{g.n} {g.m} {g.W}"]
    out += [f"{u} {v} {w}" for u, v, w in g.edges()]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# generators

GENERATOR_KINDS = ("path", "cycle", "star", "grid", "complete", "erdos_renyi", "barbell", "lollipop")


def generate(kind: str, seed: int = 0, weight_range: tuple[int, int] | None = None, **params) -> WeightedGraph:
    """Deterministic instance generator.

    ``weight_range=(lo, hi)`` draws integer weights uniformly; unit weights
    otherwise. Parameters per kind: ``n`` everywhere, plus ``rows``/``cols``
    (grid), ``p`` (erdos_renyi), ``clique`` (lollipop, barbell).
    """
    rng = random.Random(seed)
    if kind == "grid":
        rows = params.get("rows")
        cols = params.get("cols", rows)
        if rows is None:
            side = math.isqrt(params.get("n", 0))
            rows = cols = side
        if rows < 1 or cols < 1 or rows * cols < 2:
            raise GraphError("grid needs rows*cols >= 2")
        n = rows * cols
        pairs = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c + 1
                if c + 1 < cols:
                    pairs.append((v, v + 1))
                if r + 1 < rows:
                    pairs.append((v, v + cols))
    else:
        n = params.get("n")
        if not isinstance(n, int) or n < 2:
            raise GraphError(f"{kind}: n must be an integer >= 2")
        if kind == "path":
            pairs = [(i, i + 1) for i in range(1, n)]
        elif kind == "cycle":
            if n < 3:
                raise GraphError("cycle needs n >= 3")
            pairs = [(i, i + 1) for i in range(1, n)] + [(1, n)]
        elif kind == "star":
            pairs = [(1, i) for i in range(2, n + 1)]
        elif kind == "complete":
            pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
        elif kind == "lollipop":
            c = params.get("clique", n // 2)
            if not 2 <= c <= n:
                raise GraphError("lollipop clique size must be in [2, n]")
            pairs = [(i, j) for i in range(1, c + 1) for j in range(i + 1, c + 1)]
            pairs += [(i, i + 1) for i in range(c, n)]
        elif kind == "barbell":
            c = params.get("clique", n // 3)
            if c < 2 or 2 * c > n:
                raise GraphError("barbell needs 2 <= clique and 2*clique <= n")
            pairs = [(i, j) for i in range(1, c + 1) for j in range(i + 1, c + 1)]
            hi = n - c + 1
            pairs += [(i, j) for i in range(hi, n + 1) for j in range(i + 1, n + 1)]
            pairs += [(i, i + 1) for i in range(c, hi)]
        elif kind == "erdos_renyi":
            p = params.get("p")
            if p is None or not 0 < p <= 1:
                raise GraphError("erdos_renyi needs edge probability p in (0,1]")
            for _ in range(10_000):
                pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < p]
                adj = [[] for _ in range(n + 1)]
                for u, v in pairs:
                    adj[u].append(v)
                    adj[v].append(u)
                if _is_connected(adj, n):
                    break
            else:
                raise GraphError("erdos_renyi: no connected sample after 10000 tries")
        else:
            raise GraphError(f"unknown graph kind {kind!r}")

    W = default_max_weight(n)
    if weight_range is None:
        edges = [(u, v, 1) for u, v in pairs]
    else:
        lo, hi = weight_range
        if not 1 <= lo <= hi <= W:
            raise GraphError(f"weight range must lie in [1,{W}]")
        edges = [(u, v, rng.randint(lo, hi)) for u, v in pairs]
    return WeightedGraph.from_edges(n, edges, W)


# ---------------------------------------------------------------------------
# neighborhoods and distances


def bfs_hops(g: WeightedGraph, sources: int | Iterable[int], limit: int | None = None) -> dict[int, int]:
    """Hop distance from a node (or set of nodes), optionally truncated."""
    srcs = [sources] if isinstance(sources, int) else list(sources)
    dist = {s: 0 for s in srcs}
    q = deque(srcs)
    while q:
        u = q.popleft()
        du = dist[u]
        if limit is not None and du >= limit:
            continue
        for x in g.adj[u]:
            if x not in dist:
                dist[x] = du + 1
                q.append(x)
    return dist


def hop(g: WeightedGraph, u: int, v: int) -> int:
    return bfs_hops(g, u)[v]


def ball(g: WeightedGraph, v: int, radius: int) -> set[int]:
    if radius < 0:
        return set()
    return set(bfs_hops(g, v, radius))


@dataclass(frozen=True)
class NeighborhoodProfile:
    node: int
    sizes: tuple[int, ...]

    def at(self, d: int) -> int:
        """|B(v,d)|, saturating at n past the eccentricity."""
        if d < 0:
            return 0
        return self.sizes[min(d, len(self.sizes) - 1)]

    @property
    def eccentricity(self) -> int:
        return len(self.sizes) - 1


def neighborhood_profile(g: WeightedGraph, v: int) -> NeighborhoodProfile:
    g.check_node(v)
    dist = bfs_hops(g, v)
    ecc = max(dist.values())
    layer = [0] * (ecc + 1)
    for d in dist.values():
        layer[d] += 1
    sizes, acc = [], 0
    for c in layer:
        acc += c
        sizes.append(acc)
    return NeighborhoodProfile(v, tuple(sizes))


def all_profiles(g: WeightedGraph) -> dict[int, NeighborhoodProfile]:
    return {v: neighborhood_profile(g, v) for v in g.nodes}


def hop_diameter(g: WeightedGraph) -> int:
    return max(p.eccentricity for p in all_profiles(g).values())


def min_neighborhood_profile(g: WeightedGraph) -> list[int]:
    """``[N(1), ..., N(D_G)]``: smallest d-hop ball size over all nodes.

    Computed with bitset ball growth rather than per-node BFS, so it can be
    cross-checked against :func:`neighborhood_profile`.
    """
    balls = [0] + [1 << v for v in g.nodes]
    full = (1 << (g.n + 1)) - 2
    out = []
    while True:
        if all(b == full for b in balls[1:]):
            break
        balls = [0] + [balls[v] | _or_all(balls, g.adj[v]) for v in g.nodes]
        out.append(min(b.bit_count() for b in balls[1:]))
    return out


def _or_all(balls, idx) -> int:
    acc = 0
    for i in idx:
        acc |= balls[i]
    return acc


@dataclass(frozen=True)
class DistanceLabels:
    source: int
    dist: Mapping[int, float]
    hop_limit: int | None = None

    def __getitem__(self, v: int) -> float:
        return self.dist[v]


def exact_distances(g: WeightedGraph, source: int, hop_limit: int | None = None) -> DistanceLabels:
    """Weighted distances from ``source``; h-hop limited when ``hop_limit`` is set.

    Unreachable (within the hop limit) nodes map to ``math.inf``.
    """
    g.check_node(source)
    if hop_limit is None:
        dist = {v: INF for v in g.nodes}
        dist[source] = 0
        pq = [(0, source)]
        while pq:
            d, u = heapq.heappop(pq)
            if d > dist[u]:
                continue
            for x in g.adj[u]:
                nd = d + g.weight(u, x)
                if nd < dist[x]:
                    dist[x] = nd
                    heapq.heappush(pq, (nd, x))
        return DistanceLabels(source, dist)
    # Bellman-Ford restricted to hop_limit relaxation rounds
    dist = {v: INF for v in g.nodes}
    dist[source] = 0
    frontier = {source}
    for _ in range(hop_limit):
        nxt = dict(dist)
        changed = set()
        for u in frontier:
            du = dist[u]
            for x in g.adj[u]:
                nd = du + g.weight(u, x)
                if nd < nxt[x]:
                    nxt[x] = nd
                    changed.add(x)
        dist = nxt
        frontier = changed
        if not frontier:
            break
    return DistanceLabels(source, dist, hop_limit)
