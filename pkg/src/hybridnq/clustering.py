"""Ruling sets, nearest-ruler clusterings and adaptive helper sets."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .graph import WeightedGraph, bfs_hops
from .nq import NQReport, nq_distributed
from .sim import ExecutionTrace, Network, SimConfig, log2ceil, model_capacity_bits, node_rng


@dataclass(frozen=True)
class RulingSet:
    members: frozenset[int]
    alpha: int
    beta: int


@dataclass(frozen=True)
class Clustering:
    ruler_of: Mapping[int, int]
    members_of: Mapping[int, frozenset[int]]
    radius: int


@dataclass
class HelperFamily:
    targets: tuple[int, ...]
    helpers: dict[int, frozenset[int]]
    q_used: dict[int, float]
    nq_used: Fraction
    alpha: int = 0
    ruling: RulingSet | None = None
    clustering: Clustering | None = None
    rounds_local: int = 0
    rounds_global: int = 0

    def memberships(self) -> dict[int, int]:
        count: dict[int, int] = {}
        for hs in self.helpers.values():
            for v in hs:
                count[v] = count.get(v, 0) + 1
        return count

    def to_dict(self) -> dict:
        return {
            str(w): {"helpers": sorted(self.helpers[w]), "q_used": self.q_used[w]}
            for w in self.targets
        }


def ruling_set(g: WeightedGraph, alpha: int, config: SimConfig | None = None,
               net: Network | None = None) -> tuple[RulingSet, ExecutionTrace]:
    """Deterministic (alpha, alpha*ceil(log2 n))-ruling set by ID-bit recursion.

    Level ``t`` merges the sets of the two ID classes that differ only in bit
    ``t-1``: the bit-0 class is kept whole and a bit-1 member survives iff no
    bit-0 member lies within ``alpha-1`` hops. Each level costs ``alpha``
    local rounds, so the whole construction takes ``alpha*ceil(log2 n)``.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if net is None:
        net = Network(g, config or SimConfig())
    L = log2ceil(g.n)
    groups: dict[int, set[int]] = {v - 1: {v} for v in g.nodes}
    for t in range(1, L + 1):
        merged: dict[int, set[int]] = {}
        for key, members in groups.items():
            merged.setdefault(key >> 1, [set(), set()])
            merged[key >> 1][key & 1] = members
        groups = {}
        for key, (r0, r1) in merged.items():
            if not r0 or alpha == 1:
                groups[key] = r0 | r1
                continue
            near = bfs_hops(g, r0, alpha - 1)
            groups[key] = r0 | {v for v in r1 if v not in near}
        net.local_rounds(alpha)
    (members,) = groups.values()
    return RulingSet(frozenset(members), alpha, alpha * L), net.trace


def verify_ruling_set(g: WeightedGraph, rs: RulingSet) -> bool:
    for r in rs.members:
        close = bfs_hops(g, r, rs.alpha - 1)
        if any(x in rs.members and x != r for x in close):
            return False
    cover = bfs_hops(g, rs.members, rs.beta)
    return len(cover) == g.n


def cluster_nearest_ruler(g: WeightedGraph, rulers: Iterable[int], net: Network | None = None) -> Clustering:
    """Every node joins its hop-nearest ruler, ties to the smallest ruler ID.

    Multi-source BFS one layer per local round.
    """
    rulers = sorted(set(rulers))
    if not rulers:
        raise ValueError("need at least one ruler")
    owner = {r: r for r in rulers}
    frontier = list(rulers)
    depth = 0
    while frontier:
        nxt: dict[int, int] = {}
        for u in frontier:
            for x in g.adj[u]:
                if x not in owner:
                    o = owner[u]
                    if x not in nxt or o < nxt[x]:
                        nxt[x] = o
        if not nxt:
            break
        owner.update(nxt)
        frontier = list(nxt)
        depth += 1
    if net is not None:
        net.local_rounds(depth)
    members: dict[int, set[int]] = {r: set() for r in rulers}
    for v, r in owner.items():
        members[r].add(v)
    return Clustering(owner, {r: frozenset(m) for r, m in members.items()}, depth)


def iid_targets(n: int, ell: int, rng: random.Random) -> tuple[int, ...]:
    """ell i.i.d. uniform nodes, duplicates merged, in ascending ID order."""
    return tuple(sorted({rng.randint(1, n) for _ in range(ell)}))


def helper_probability(k: int, gamma: int, nq: Fraction, cluster_size: int, c: float, n: int) -> float:
    return min(float(Fraction(k) / (gamma * nq)) / cluster_size * 8 * c * math.log(n), 1.0)


def build_helper_sets(g: WeightedGraph, targets: Sequence[int], k: int, gamma: int,
                      nq: NQReport | None = None, config: SimConfig | None = None,
                      net: Network | None = None) -> tuple[HelperFamily, ExecutionTrace]:
    """Adaptive helper sets drawn from the target's nearest-ruler cluster.

    ``config.gamma`` is the engine's bit budget; ``gamma`` is the model
    parameter that enters NQ and the sampling probability.
    """
    if net is None:
        net = Network(g, config or SimConfig(gamma=model_capacity_bits(gamma, g.n)))
    cfg = net.config
    W = tuple(sorted(set(targets)))
    local0, global0 = net.trace.local_round_count, net.trace.global_round_count
    if nq is None:
        nq, _ = nq_distributed(g, k, gamma, net=net)
    if not W:
        return HelperFamily((), {}, {}, nq.value), net.trace
    alpha = 2 * math.ceil(nq.value) + 1
    rs, _ = ruling_set(g, alpha, net=net)
    cl = cluster_nearest_ruler(g, rs.members, net=net)
    # convergecast of C_r and C_r ∩ W to the ruler, then broadcast back
    net.local_rounds(2 * cl.radius)
    helpers, q_used = {}, {}
    for w in W:
        r = cl.ruler_of[w]
        cluster = cl.members_of[r]
        q = helper_probability(k, gamma, nq.value, len(cluster), cfg.c, g.n)
        if q >= 1.0:
            chosen = frozenset(cluster)
        else:
            chosen = frozenset(v for v in sorted(cluster)
                               if node_rng(cfg.seed, v, f"helper:{w}").random() < q)
        helpers[w], q_used[w] = chosen, q
    fam = HelperFamily(W, helpers, q_used, nq.value, alpha, rs, cl,
                       net.trace.local_round_count - local0, net.trace.global_round_count - global0)
    return fam, net.trace


@dataclass
class HelperCheck:
    size_ok: bool
    distance_ok: bool
    load_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.size_ok and self.distance_ok and self.load_ok


def verify_helpers(g: WeightedGraph, fam: HelperFamily, k: int, gamma: int, c: float = 2.0) -> HelperCheck:
    """Independent check of the three helper-set properties."""
    n = g.n
    L = log2ceil(n)
    nq = fam.nq_used
    size_ok = distance_ok = True
    smallest = None
    for w in fam.targets:
        hs = fam.helpers[w]
        q = fam.q_used[w]
        if q >= 1.0:
            r = fam.clustering.ruler_of[w]
            ok = hs == fam.clustering.members_of[r] and Fraction(len(hs)) >= Fraction(k) / ((nq + 1) * gamma)
        else:
            ok = len(hs) >= 4 * c * math.log(n) * float(Fraction(k) / (gamma * nq))
        size_ok &= ok
        smallest = len(hs) if smallest is None else min(smallest, len(hs))
        far = bfs_hops(g, w)
        distance_ok &= all(far[u] <= 2 * fam.alpha * L for u in hs)
    loads = fam.memberships()
    max_load = max(loads.values(), default=0)
    load_ok = max_load <= 16 * c * math.log(n)
    return HelperCheck(size_ok, distance_ok, load_ok, {"min_size": smallest, "max_load": max_load})
