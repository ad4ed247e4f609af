"""Neighborhood quality: exact oracles and the distributed LOCAL/global protocol."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .graph import WeightedGraph, all_profiles, min_neighborhood_profile
from .sim import Codec, ExecutionTrace, Network, SimConfig, _tree_aggregate, model_capacity_bits


@dataclass(frozen=True)
class NQReport:
    value: Fraction
    d_star: int
    per_node: Mapping[int, tuple[Fraction, int]]
    argmax_node: int
    k: int
    gamma: int
    rounds: int = 0
    local_rounds: int = 0
    diameter: int = 0
    N: tuple[int, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "nq_num": self.value.numerator,
            "nq_den": self.value.denominator,
            "d_star": self.d_star,
            "argmax_node": self.argmax_node,
            "rounds": self.rounds,
            "k": self.k,
            "gamma": self.gamma,
        }


def objective(k: int, size: int, gamma: int, d: int) -> Fraction:
    """max(k / (size * gamma), d) as an exact rational."""
    return max(Fraction(k, size * gamma), Fraction(d))


def _minimize(k: int, gamma: int, sizes_at, D: int) -> tuple[Fraction, int]:
    best, arg = None, 0
    for d in range(1, D + 1):
        if best is not None and d >= best:
            break  # every later value is at least d
        val = objective(k, sizes_at(d), gamma, d)
        if best is None or val < best:
            best, arg = val, d
    return best, arg


def _check(g: WeightedGraph, k: int, gamma: int) -> None:
    if not 1 <= k <= g.n:
        raise ValueError(f"k must lie in [1, n={g.n}]")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")


def nq_node_oracle(g: WeightedGraph, v: int, k: int, gamma: int, profiles=None, D: int | None = None
                   ) -> tuple[Fraction, int]:
    """(NQ(v), d_v); ties in d go to the smaller radius."""
    _check(g, k, gamma)
    g.check_node(v)
    if g.n == 1:
        return Fraction(k, gamma), 0
    profiles = profiles or all_profiles(g)
    D = D if D is not None else max(p.eccentricity for p in profiles.values())
    return _minimize(k, gamma, profiles[v].at, D)


def nq_oracle(g: WeightedGraph, k: int, gamma: int) -> NQReport:
    """Exhaustive min over d in [D_G] of max(k/(N(d) gamma), d)."""
    _check(g, k, gamma)
    N = min_neighborhood_profile(g)
    D = len(N)
    if D == 0:
        return NQReport(Fraction(k, gamma), 0, {1: (Fraction(k, gamma), 0)}, 1, k, gamma)
    value, d_star = _minimize(k, gamma, lambda d: N[d - 1], D)
    profiles = all_profiles(g)
    per_node = {v: nq_node_oracle(g, v, k, gamma, profiles, D) for v in g.nodes}
    argmax = min(per_node, key=lambda v: (-per_node[v][0], v))
    return NQReport(value, d_star, per_node, argmax, k, gamma, diameter=D, N=tuple(N))


def nq_distributed(g: WeightedGraph, k: int, gamma: int, config: SimConfig | None = None,
                   net: Network | None = None) -> tuple[NQReport, ExecutionTrace]:
    """Alternate one LOCAL ball expansion with a global max-aggregation.

    After expanding to radius ``d+1`` every node knows ``N(v, d+1)``; the
    network aggregates ``max_v max(k/(N(v,d+1) gamma), d+1)`` and stops at
    the first radius whose value does not improve on its predecessor, or
    once every ball covers the graph. Each node keeps its own ``(NQ(v), d_v)``.
    """
    _check(g, k, gamma)
    if net is None:
        config = config or SimConfig(gamma=model_capacity_bits(gamma, g.n))
        net = Network(g, config)
    start = net.round_no
    local_start = net.trace.local_round_count
    n = g.n
    num_bits = max(k.bit_length(), (n + 1).bit_length()) + 1
    den_bits = (n * gamma).bit_length() + 1

    codec = Codec(num_bits, den_bits, 1)

    def combine(a, b):
        return max(a[0], b[0]), min(a[1], b[1])

    balls = [0] + [1 << v for v in g.nodes]
    full = (1 << (n + 1)) - 2
    prev_val: Fraction | None = None
    d = 0
    while True:
        # one LOCAL round: every node ships its whole ball to its neighbors
        new = [0] * (n + 1)
        for v in g.nodes:
            acc = balls[v]
            for u in g.adj[v]:
                acc |= balls[u]
            new[v] = acc
        balls = new
        net.local_rounds(1)
        d += 1
        local = {v: (objective(k, balls[v].bit_count(), gamma, d), int(balls[v] == full)) for v in g.nodes}
        (value, complete), _ = _tree_aggregate(
            net, local, combine,
            lambda t: codec.pack(t[0].numerator, t[0].denominator, t[1]),
            lambda p: (lambda a, b, f: (Fraction(a, b), f))(*codec.unpack(p)))
        if prev_val is not None and prev_val <= value:
            d_star, nq_value = d - 1, prev_val
            break
        if complete:
            d_star, nq_value = d, value
            break
        prev_val = value

    # (NQ(v), d_v) stay local to each node and are not part of the protocol's
    # output; the report fills them from the centralized oracle.
    profiles = all_profiles(g)
    D = max(p.eccentricity for p in profiles.values())
    per_node = {v: _minimize(k, gamma, profiles[v].at, D) for v in g.nodes}
    argmax = min(per_node, key=lambda v: (-per_node[v][0], v))
    report = NQReport(nq_value, d_star, per_node, argmax, k, gamma,
                      rounds=net.round_no - start,
                      local_rounds=net.trace.local_round_count - local_start,
                      diameter=D)
    return report, net.trace
