"""Hard instances for (k,1)-SP: BFS-tree partitioning, weightings, encodings, audits.

Given the node ``v`` with the worst neighborhood quality, the nodes outside
``B(v, d_v - 1)`` are split into ``V1`` and ``V2`` and the edges are weighted
so that ``V1`` is close to ``v`` (distance < n) and ``V2`` is far
(distance >= n*p(n)). Picking one source from each pair ``(v1_i, v2_i)``
according to a bit string ``X`` then forces ``v`` to learn ``X``.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .graph import WeightedGraph, ball, bfs_hops, exact_distances
from .nq import nq_oracle
from .sim import ExecutionTrace, SimConfig


class HardInstanceError(ValueError):
    """The graph does not admit the construction (too few far nodes)."""


# ---------------------------------------------------------------------------
# rooted trees


@dataclass
class RootedTree:
    root: int
    parent: dict[int, int | None]
    children: dict[int, list[int]]
    size: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.size:
            self.size = _subtree_sizes(self.root, self.children)

    @classmethod
    def from_parents(cls, root: int, parent: Mapping[int, int | None]) -> "RootedTree":
        children: dict[int, list[int]] = {u: [] for u in parent}
        for u, p in parent.items():
            if p is not None:
                children[p].append(u)
        for c in children.values():
            c.sort()
        return cls(root, dict(parent), children)

    @property
    def n(self) -> int:
        return self.size[self.root]

    def t(self, u: int) -> int:
        return self.size[u]

    def p(self, u: int) -> int:
        return self.n - self.size[u]

    def descendants(self, u: int) -> list[int]:
        out, stack = [], [u]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.children[x])
        return out

    def subtree(self, u: int) -> "RootedTree":
        nodes = self.descendants(u)
        parent = {x: (None if x == u else self.parent[x]) for x in nodes}
        return RootedTree(u, parent, {x: list(self.children[x]) for x in nodes},
                          {x: self.size[x] for x in nodes})


def _subtree_sizes(root: int, children: Mapping[int, list[int]]) -> dict[int, int]:
    order, stack = [], [root]
    while stack:
        x = stack.pop()
        order.append(x)
        stack.extend(children[x])
    size = {}
    for x in reversed(order):
        size[x] = 1 + sum(size[c] for c in children[x])
    return size


def bfs_tree(g: WeightedGraph, root: int) -> RootedTree:
    """Hop BFS tree; each node's parent is its smallest-ID neighbor one layer up."""
    depth = bfs_hops(g, root)
    parent: dict[int, int | None] = {root: None}
    for u in g.nodes:
        if u != root:
            parent[u] = min(x for x in g.adj[u] if depth[x] == depth[u] - 1)
    return RootedTree.from_parents(root, parent)


def random_tree(n: int, rng: random.Random) -> RootedTree:
    """Uniform random labelled tree on 1..n (Pruefer decoding), rooted at node 1."""
    if n == 1:
        return RootedTree.from_parents(1, {1: None})
    seq = [rng.randint(1, n) for _ in range(n - 2)]
    degree = [1] * (n + 1)
    for x in seq:
        degree[x] += 1
    adj: dict[int, list[int]] = {u: [] for u in range(1, n + 1)}
    import heapq
    leaves = [u for u in range(1, n + 1) if degree[u] == 1]
    heapq.heapify(leaves)
    for x in seq:
        leaf = heapq.heappop(leaves)
        adj[leaf].append(x)
        adj[x].append(leaf)
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    a, b = heapq.heappop(leaves), heapq.heappop(leaves)
    adj[a].append(b)
    adj[b].append(a)
    parent: dict[int, int | None] = {1: None}
    stack = [1]
    while stack:
        u = stack.pop()
        for x in adj[u]:
            if x not in parent:
                parent[x] = u
                stack.append(x)
    return RootedTree.from_parents(1, parent)


def splitting_node(tree: RootedTree) -> int:
    """Walk down the heaviest child while it holds more than half the nodes."""
    x = tree.root
    half = Fraction(tree.n, 2)
    while True:
        heavy = max(tree.children[x], key=lambda c: (tree.size[c], -c), default=None)
        if heavy is None or tree.size[heavy] <= half:
            return x
        x = heavy


def components_after_removal(tree: RootedTree, x: int) -> list[int]:
    """Sizes of the pieces left when ``x`` is deleted."""
    sizes = [tree.size[c] for c in tree.children[x]]
    if x != tree.root:
        sizes.append(tree.p(x))
    return sizes


# ---------------------------------------------------------------------------
# hard instance


@dataclass
class HardInstance:
    base: WeightedGraph
    graph: WeightedGraph
    v: int
    d_v: int
    V1: frozenset[int]
    V2: frozenset[int]
    E_prime: frozenset[tuple[int, int]]
    p_exponent: int
    pairing: tuple[tuple[int, int], ...]
    k: int
    case: str = ""

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def p_value(self) -> int:
        return self.n ** self.p_exponent

    @property
    def threshold(self) -> int:
        return self.n * self.p_value

    @property
    def k_prime(self) -> int:
        return len(self.pairing)

    @property
    def n_prime(self) -> int:
        return self.n - len(ball(self.base, self.v, self.d_v - 1))

    def sidecar(self) -> dict:
        return {
            "v": self.v,
            "d_v": self.d_v,
            "V1": sorted(self.V1),
            "V2": sorted(self.V2),
            "E_prime": [list(e) for e in sorted(self.E_prime)],
            "pairing": [list(p) for p in self.pairing],
            "k_prime": self.k_prime,
            "p_poly": f"n^{self.p_exponent}",
        }

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), sort_keys=True, indent=1)


def _fill(trees: Sequence[tuple[int, int]], goal: Fraction) -> list[int]:
    """Take (size, root) pairs largest first until their sizes reach ``goal``."""
    chosen, total = [], 0
    for size, root in sorted(trees, key=lambda t: (-t[0], t[1])):
        if total >= goal:
            break
        chosen.append(root)
        total += size
    return chosen


def build_hard_instance(g: WeightedGraph, k: int, gamma: int, p_exponent: int = 1,
                        config: SimConfig | None = None) -> HardInstance:
    if p_exponent < 1:
        raise ValueError("p(n) must be at least n")
    rep = nq_oracle(g, k, gamma)
    v = rep.argmax_node
    d_v = rep.per_node[v][1]
    if d_v < 1:
        raise HardInstanceError(f"d_v = {d_v} for v = {v}; construction needs d_v >= 1")
    tree = bfs_tree(g, v)
    depth = bfs_hops(g, v)
    inner = {u for u in g.nodes if depth[u] <= d_v - 1}
    n_prime = g.n - len(inner)
    if n_prime < 8:
        raise HardInstanceError(f"only {n_prime} nodes outside B(v={v}, {d_v - 1}); need at least 8")

    roots = sorted(u for u in g.nodes if depth[u] == d_v)
    trees = [(tree.size[r], r) for r in roots]
    quarter = Fraction(n_prime, 4)
    big = [r for s, r in trees if s > Fraction(n_prime, 2)]
    if not big:
        case = "small-trees"
        far_roots = _fill(trees, quarter)
    else:
        case = "split"
        sub = tree.subtree(big[0])
        x = splitting_node(sub)
        # the piece holding x's parent (and x itself) stays on the near side
        far_roots = _fill([(sub.size[c], c) for c in sub.children[x]], quarter)
    V2 = frozenset(u for r in far_roots for u in tree.descendants(r))
    V1 = frozenset(u for u in g.nodes if depth[u] >= d_v) - V2
    E_prime = frozenset((min(r, tree.parent[r]), max(r, tree.parent[r])) for r in far_roots)

    n = g.n
    p = n ** p_exponent
    tree_edges = {(min(u, q), max(u, q)) for u, q in tree.parent.items() if q is not None}
    weights = {}
    for e in g.weights:
        if e in E_prime:
            weights[e] = n * p
        elif e in tree_edges:
            weights[e] = 1
        else:
            weights[e] = n * p + n
    hard = g.with_weights(weights, W=max(g.W, n * p + n))

    k_prime = min(math.ceil(k / 16), len(V1), len(V2))
    pairing = tuple(zip(sorted(V1)[:k_prime], sorted(V2)[:k_prime]))
    return HardInstance(g, hard, v, d_v, V1, V2, E_prime, p_exponent, pairing, k, case)


@dataclass
class HardInstanceCheck:
    sizes_ok: bool
    separation_ok: bool
    crossing_ok: bool
    weights_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.sizes_ok and self.separation_ok and self.crossing_ok and self.weights_ok


def verify_hard_instance(inst: HardInstance) -> HardInstanceCheck:
    """Independent check: sizes, distance separation, E' crossing, weight values."""
    g, n = inst.graph, inst.n
    floor8 = inst.n_prime // 8
    sizes_ok = len(inst.V1) >= floor8 and len(inst.V2) >= floor8 and not (inst.V1 & inst.V2)
    dist = exact_distances(g, inst.v).dist
    near = max(dist[u] for u in inst.V1)
    far = min(dist[u] for u in inst.V2)
    separation_ok = inst.p_value * near <= far and near <= n and far >= inst.threshold
    tree = bfs_tree(inst.base, inst.v)

    def crosses(u):
        while tree.parent[u] is not None:
            q = tree.parent[u]
            if (min(u, q), max(u, q)) in inst.E_prime:
                return True
            u = q
        return False

    crossing_ok = all(crosses(u) for u in inst.V2) and not any(crosses(u) for u in inst.V1)
    allowed = {1, n * inst.p_value, n * inst.p_value + n}
    weights_ok = set(g.weights.values()) <= allowed
    return HardInstanceCheck(sizes_ok, separation_ok, crossing_ok, weights_ok,
                             {"max_d_V1": near, "min_d_V2": far, "n_prime": inst.n_prime})


# ---------------------------------------------------------------------------
# encoding and decoding


@dataclass(frozen=True)
class SourceEncoding:
    bits: tuple[int, ...]
    sources: tuple[int, ...]


def encode_sources(inst: HardInstance, X: Sequence[int]) -> SourceEncoding:
    if len(X) != inst.k_prime:
        raise ValueError(f"need {inst.k_prime} bits, got {len(X)}")
    if any(b not in (0, 1) for b in X):
        raise ValueError("bits must be 0 or 1")
    picks = tuple(pair[b] for pair, b in zip(inst.pairing, X))
    return SourceEncoding(tuple(X), tuple(sorted(picks)))


@dataclass(frozen=True)
class Decoded:
    bits: tuple[int | None, ...]
    ambiguous: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.ambiguous and None not in self.bits


def decode_from_distances(labels: Mapping[int, float], inst: HardInstance) -> Decoded:
    """Bit i is 0 iff the label of pair i's source lies below n*p(n).

    ``labels`` maps source ID to the distance estimate held at ``v``.
    Labels equal to the threshold, and pairs with zero or two labels, are
    reported as ambiguous.
    """
    out: list[int | None] = []
    bad = []
    for i, (a, b) in enumerate(inst.pairing):
        got = [labels[s] for s in (a, b) if s in labels]
        if len(got) != 1 or got[0] == inst.threshold:
            out.append(None)
            bad.append(i)
            continue
        out.append(0 if got[0] < inst.threshold else 1)
    return Decoded(tuple(out), tuple(bad))


@dataclass
class Trial:
    X: tuple[int, ...]
    decoded: Decoded
    trace: ExecutionTrace = field(repr=False)
    rounds_phaseB: int = 0

    @property
    def success(self) -> bool:
        return self.decoded.ok and self.decoded.bits == self.X


def run_trial(inst: HardInstance, X: Sequence[int], gamma: int, seed: int = 0) -> Trial:
    """Encode X as sources, solve (k', 1)-SP towards v exactly, decode at v."""
    from .pipeline import EXACT, SPInstance, solve_k_ell_sp
    from .sim import model_capacity_bits

    enc = encode_sources(inst, X)
    sp = SPInstance(inst.graph, enc.sources, (inst.v,))
    cfg = SimConfig(gamma=model_capacity_bits(gamma, inst.n), seed=seed)
    res = solve_k_ell_sp(sp, gamma, cfg, mode=EXACT)
    dec = decode_from_distances(res.labels[inst.v], inst)
    return Trial(tuple(X), dec, res.trace, res.rounds_phaseB)


# ---------------------------------------------------------------------------
# bound evaluation and audit


@dataclass(frozen=True)
class LowerBound:
    value: Fraction
    raw: Fraction
    first: Fraction
    second: Fraction
    chain: Fraction
    v: int
    d_v: int
    k_prime: int
    trivial: bool

    def to_dict(self) -> dict:
        return {
            "lb_num": self.value.numerator, "lb_den": self.value.denominator,
            "first_num": self.first.numerator, "first_den": self.first.denominator,
            "second_num": self.second.numerator, "second_den": self.second.denominator,
            "chain_num": self.chain.numerator, "chain_den": self.chain.denominator,
            "v": self.v, "d_v": self.d_v, "k_prime": self.k_prime, "trivial": self.trivial,
        }


def lb_value(g: WeightedGraph, k: int, gamma: int) -> LowerBound:
    """min(k'/(N(v,d_v-1) gamma), (d_v-1)/2 - 1) at v = argmax NQ(v), floored at 0.

    ``chain`` is max(k/(N(v,d_v) gamma), d_v) - 1. A nonpositive raw value
    marks the trivial regime.
    """
    rep = nq_oracle(g, k, gamma)
    v = rep.argmax_node
    nq_v, d_v = rep.per_node[v]
    k_prime = math.ceil(k / 16)
    if d_v < 1:
        zero = Fraction(0)
        return LowerBound(zero, zero, zero, zero, nq_v - 1, v, d_v, k_prime, True)
    N = len(ball(g, v, d_v - 1))
    first = Fraction(k_prime, N * gamma)
    second = Fraction(d_v - 1, 2) - 1
    raw = min(first, second)
    return LowerBound(max(raw, Fraction(0)), raw, first, second, nq_v - 1, v, d_v, k_prime, raw <= 0)


@dataclass
class AuditReport:
    h: int
    ball: frozenset[int]
    runs: int
    mean_bits_into_ball: Fraction
    p_hat: Fraction
    entropy_bits: int
    gamma: int
    bits_bound: Fraction
    holds: bool
    round_bound: Fraction
    vacuous: bool

    def to_dict(self) -> dict:
        return {
            "h": self.h, "ball_size": len(self.ball), "runs": self.runs,
            "mean_bits_num": self.mean_bits_into_ball.numerator,
            "mean_bits_den": self.mean_bits_into_ball.denominator,
            "p_hat_num": self.p_hat.numerator, "p_hat_den": self.p_hat.denominator,
            "entropy_bits": self.entropy_bits,
            "bits_bound_num": self.bits_bound.numerator, "bits_bound_den": self.bits_bound.denominator,
            "holds": self.holds,
            "round_bound_num": self.round_bound.numerator, "round_bound_den": self.round_bound.denominator,
            "vacuous": self.vacuous,
        }


def audit_information_flow(traces: Iterable[ExecutionTrace], inst: HardInstance, successes: Iterable[bool],
                           gamma: int) -> AuditReport:
    """Global bits delivered into B(v, h-1), h = d_v - 1, against p_hat * k' - 1.

    ``gamma`` is the model parameter used for the round bound
    min((p H - 1)/(N gamma), h/2 - 1).
    """
    traces, successes = list(traces), list(successes)
    if not traces or len(traces) != len(successes):
        raise ValueError("need one success flag per trace")
    h = inst.d_v - 1
    A = frozenset(ball(inst.base, inst.v, max(h - 1, 0)))
    total = sum(t.bits_received_by(A) for t in traces)
    runs = len(traces)
    mean = Fraction(total, runs)
    p_hat = Fraction(sum(successes), runs)
    H = inst.k_prime
    bits_bound = p_hat * H - 1
    round_bound = min((p_hat * H - 1) / (len(A) * gamma), Fraction(h, 2) - 1)
    return AuditReport(h, A, runs, mean, p_hat, H, gamma, bits_bound, mean >= bits_bound,
                       round_bound, Fraction(h, 2) - 1 <= 0)
