"""(k, l)-shortest paths: a distance phase from the targets, then token routing.

Phase A makes every source learn its distance to every target; phase B
(neighborhood quality, helper sets, routing) ships those distances to the
targets. Phase A has two stand-ins: an exact distributed Bellman-Ford and
a skeleton-graph approximation.
"""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .clustering import build_helper_sets, iid_targets
from .graph import INF, WeightedGraph, exact_distances
from .nq import nq_distributed
from .routing import DeliveryReport, plan, route_tokens
from .sim import (ExecutionTrace, Network, SimConfig, aggregate_on, log2ceil, model_capacity_bits,
                  node_rng)

EXACT = "exact_reference"
SKELETON = "skeleton"


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class SPInstance:
    graph: WeightedGraph
    sources: tuple[int, ...]
    targets: tuple[int, ...]
    eps: Fraction = Fraction(1, 10)
    target_mode: str = "fixed"
    target_seed: int | None = None

    def __post_init__(self):
        if not self.sources or not self.targets:
            raise InstanceError("sources and targets must be nonempty")
        for v in (*self.sources, *self.targets):
            self.graph.check_node(v)
        if self.eps <= 0:
            raise InstanceError("eps must be positive")
        if self.target_mode == "fixed":
            cap = log2ceil(self.graph.n) ** 2
            if len(self.targets) > cap:
                raise InstanceError(f"fixed mode allows at most {cap} targets")
        elif self.target_mode != "iid_uniform":
            raise InstanceError(f"unknown target mode {self.target_mode!r}")

    @classmethod
    def with_iid_targets(cls, graph: WeightedGraph, sources: Sequence[int], ell: int, seed: int,
                         eps: Fraction = Fraction(1, 10)) -> "SPInstance":
        T = iid_targets(graph.n, ell, random.Random(seed))
        return cls(graph, tuple(sorted(set(sources))), T, eps, "iid_uniform", seed)

    @property
    def k(self) -> int:
        return len(self.sources)

    @property
    def ell(self) -> int:
        return len(self.targets)


# ---------------------------------------------------------------------------
# phase A stand-ins


def sssp_exact_reference(g: WeightedGraph, roots: Sequence[int], config: SimConfig | None = None,
                         net: Network | None = None) -> tuple[dict[int, dict[int, float]], ExecutionTrace]:
    """Distributed Bellman-Ford from several roots over the local network.

    Each local round every node relaxes with its neighbors' full distance
    vectors; a sum-aggregate of "changed" flags ends the run once a round
    changes nothing. Returns ``dist[root][v]``.
    """
    if not roots:
        raise ValueError("need at least one root")
    if net is None:
        net = Network(g, config or SimConfig())
    roots = sorted(set(roots))
    dist = {r: [INF] * (g.n + 1) for r in roots}
    # only nodes whose value moved last round can improve a neighbor
    moved = {r: {r} for r in roots}
    for r in roots:
        dist[r][r] = 0
    while True:
        changed = {v: 0 for v in g.nodes}
        for r in roots:
            old = dist[r]
            new = list(old)
            nxt = set()
            for u in moved[r]:
                for v in g.adj[u]:
                    cand = old[u] + g.weight(u, v)
                    if cand < new[v]:
                        new[v] = cand
                        nxt.add(v)
            for v in nxt:
                changed[v] = 1
            dist[r], moved[r] = new, nxt
        net.local_rounds(1)
        total, _ = aggregate_on(net, changed, "sum")
        if total == 0:
            break
    return {r: {v: dist[r][v] for v in g.nodes} for r in roots}, net.trace


@dataclass
class SkeletonGraph:
    nodes: tuple[int, ...]
    edges: dict[tuple[int, int], int]
    x: float
    h: int

    def distances_from(self, src: int) -> dict[int, float]:
        adj: dict[int, list[tuple[int, int]]] = {u: [] for u in self.nodes}
        for (u, v), w in self.edges.items():
            adj[u].append((v, w))
            adj[v].append((u, w))
        dist = {u: INF for u in self.nodes}
        dist[src] = 0
        pq = [(0, src)]
        while pq:
            d, u = heapq.heappop(pq)
            if d > dist[u]:
                continue
            for v, w in adj[u]:
                if d + w < dist[v]:
                    dist[v] = d + w
                    heapq.heappush(pq, (d + w, v))
        return dist


def skeleton_build(g: WeightedGraph, x: float, config: SimConfig | None = None, seed: int = 0,
                   include: Sequence[int] = (), net: Network | None = None
                   ) -> tuple[SkeletonGraph, ExecutionTrace]:
    """Sample nodes with probability 1/x and join pairs within h hops by d_h.

    ``h = ceil(c * x * ln n)``; discovering the virtual edges takes ``h``
    local rounds. Nodes in ``include`` are always sampled.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    if net is None:
        net = Network(g, config or SimConfig(seed=seed))
    c = net.config.c
    h = max(1, math.ceil(c * x * math.log(max(g.n, 2))))
    forced = set(include)
    sampled = tuple(v for v in g.nodes
                    if v in forced or x == 1 or node_rng(seed, v, "skeleton").random() < 1 / x)
    members = set(sampled)
    edges: dict[tuple[int, int], int] = {}
    for u in sampled:
        du = exact_distances(g, u, hop_limit=h).dist
        for v in sampled:
            if v > u and du[v] < INF:
                edges[(u, v)] = du[v]
    net.local_rounds(h)
    return SkeletonGraph(sampled, edges, x, h), net.trace


def skeleton_labels(g: WeightedGraph, sk: SkeletonGraph, sources: Sequence[int], targets: Sequence[int]
                    ) -> dict[int, dict[int, float]]:
    """d~(s,t) = min over skeleton nodes u within h hops of s of d_h(s,u) + d_S(u,t)."""
    to_target = {t: sk.distances_from(t) for t in targets}
    members = set(sk.nodes)
    out: dict[int, dict[int, float]] = {t: {} for t in targets}
    for s in sources:
        ds = exact_distances(g, s, hop_limit=sk.h).dist
        for t in targets:
            out[t][s] = min(ds[u] + to_target[t][u] for u in members)
    return out


# ---------------------------------------------------------------------------
# full solver


@dataclass
class SPResult:
    labels: dict[int, dict[int, int]]
    delivery: DeliveryReport | None
    rounds_phaseA: int
    rounds_phaseB: int
    nq: Fraction
    mode: str
    trace: ExecutionTrace = field(repr=False, default_factory=ExecutionTrace)

    def to_dict(self, instance: SPInstance) -> dict:
        st = stretch_of(self.labels, instance)
        return {
            "labels": [[t, s, Fraction(d).numerator, Fraction(d).denominator]
                       for t in sorted(self.labels) for s, d in sorted(self.labels[t].items())],
            "stretch_num": st.numerator,
            "stretch_den": st.denominator,
            "rounds_phaseA": self.rounds_phaseA,
            "rounds_phaseB": self.rounds_phaseB,
            "nq_num": self.nq.numerator,
            "nq_den": self.nq.denominator,
            "mode": self.mode,
        }


def solve_k_ell_sp(instance: SPInstance, gamma: int, config: SimConfig | None = None,
                   mode: str = EXACT, skeleton_x: float = 4.0) -> SPResult:
    """Every target learns d~(s, t) for every source s.

    ``gamma`` is the model parameter; unless ``config`` says otherwise the
    engine budget is :func:`model_capacity_bits` of it.
    """
    g = instance.graph
    cfg = config or SimConfig(gamma=model_capacity_bits(gamma, g.n))
    net = Network(g, cfg)
    S, T = instance.sources, instance.targets

    net.label = "A"
    if mode == EXACT:
        dist, _ = sssp_exact_reference(g, T, net=net)
        known = {t: {s: dist[t][s] for s in S} for t in T}
    elif mode == SKELETON:
        sk, _ = skeleton_build(g, skeleton_x, seed=cfg.seed, include=T, net=net)
        known = skeleton_labels(g, sk, S, T)
        net.local_rounds(sk.h)  # sources explore their h-hop neighborhood
    else:
        raise ValueError(f"unknown distance mode {mode!r}")
    rounds_a = net.round_no

    net.label = "B"
    nq, _ = nq_distributed(g, instance.k, gamma, net=net)
    if instance.target_mode == "iid_uniform" and instance.ell > nq.value:
        raise InstanceError(f"{instance.ell} random targets exceed NQ = {nq.value}")
    fam, _ = build_helper_sets(g, T, instance.k, gamma, nq=nq, net=net)
    rplan, _ = plan(g, S, T, instance.k, gamma, fam, net=net)
    tokens = {(s, t): int(known[t][s]) for s in S for t in T}
    report, _ = route_tokens(g, rplan, tokens, net=net)
    rounds_b = net.round_no - rounds_a

    labels = {t: {} for t in T}
    for t, pairs in report.delivered.items():
        for s, payload in pairs:
            labels[t][s] = payload
    return SPResult(labels, report, rounds_a, rounds_b, nq.value, mode, net.trace)


def stretch_of(labels: Mapping[int, Mapping[int, float]], instance: SPInstance) -> Fraction:
    """Largest d~(s,t)/d(s,t); raises if a label is missing or underestimates."""
    g = instance.graph
    worst = Fraction(1)
    for t in instance.targets:
        true = exact_distances(g, t).dist
        got = labels.get(t, {})
        for s in instance.sources:
            if s not in got:
                raise KeyError(f"missing label for source {s} at target {t}")
            est, d = got[s], true[s]
            if est < d:
                raise AssertionError(f"label d~({s},{t})={est} underestimates d={d}")
            if d == 0:
                continue
            worst = max(worst, Fraction(est) / Fraction(d))
    return worst
