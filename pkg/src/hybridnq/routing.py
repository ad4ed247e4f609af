"""Token routing through hashed intermediates and adaptive helper sets.

Every source holds one token per target. Tokens go to the intermediate
``h(pack(g(ID(s)), j))``; the helpers of target ``t_j`` then request the
tokens of their assigned tasks ``(i, j)`` from ``h(pack(i, j))`` and finally
hand them to ``t_j`` over the local network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .clustering import HelperFamily
from .graph import WeightedGraph, bfs_hops
from .kwise import HashFamilySpec, KWiseHash, HashSeed, pack_key, sample_seed
from .sim import (Codec, ExecutionTrace, GlobalMessage, Network, SimConfig, aggregate_on,
                  broadcast_set_on, log2ceil, model_capacity_bits, node_rng)

HASH_RANGE_BITS = 40


class MissingTokens(RuntimeError):
    def __init__(self, missing):
        self.missing = missing
        super().__init__(f"{len(missing)} tokens undelivered, e.g. {sorted(missing)[:5]}")


def batch_size(gamma_bits: int, n: int) -> int:
    """Requests or tokens a node may emit per round: max(1, floor(gamma / (8 ceil(log2 n)^2)))."""
    if gamma_bits < 1:
        raise ValueError("gamma must be >= 1")
    return max(1, gamma_bits // (8 * log2ceil(n) ** 2))


@dataclass
class RoutingPlan:
    targets: tuple[int, ...]
    k: int
    b: int
    h: KWiseHash
    g: KWiseHash
    independence: int
    tasks: dict[int, list[tuple[int, int]]]
    helpers_of: dict[int, tuple[int, ...]]
    collect_radius: int
    audit_exempt: bool = False

    @property
    def ell(self) -> int:
        return len(self.targets)

    def intermediate(self, i: int, j: int) -> int:
        return self.h(pack_key(i, j, self.ell)) + 1

    def index_of(self, node_id: int) -> int:
        return self.g(node_id)

    def loads(self) -> dict[int, int]:
        return {v: len(ts) for v, ts in self.tasks.items()}


def _hash_spec_bits(max_key: int) -> int:
    return max(1, max_key.bit_length())


def plan(g: WeightedGraph, sources: Sequence[int], targets: Sequence[int], k: int | None, gamma: int,
         helpers: HelperFamily, config: SimConfig | None = None, net: Network | None = None
         ) -> tuple[RoutingPlan, ExecutionTrace]:
    """Publish the target order, the source count and the hash seeds; split tasks.

    Seeds are drawn by node 1. ``gamma`` is the model parameter; the engine's
    bit budget lives in the network config.
    """
    if net is None:
        net = Network(g, config or SimConfig(gamma=model_capacity_bits(gamma, g.n)))
    cfg = net.config
    n = g.n
    T = tuple(sorted(set(targets)))
    ell = len(T)
    if set(T) != set(helpers.targets):
        raise ValueError("helper family was built for a different target set")

    id_bits = n.bit_length()
    known, _ = broadcast_set_on(net, {t: {t} for t in T}, ell, id_bits)
    assert all(known[v] == set(T) for v in g.nodes)
    k_agg, _ = aggregate_on(net, {v: int(v in set(sources)) for v in g.nodes}, "sum")
    if k is not None and k != k_agg:
        raise ValueError(f"k={k} but {k_agg} sources present")
    k = k_agg

    # batch from the model parameter, in the log n-bit-per-message accounting
    b = batch_size(gamma * 8 * log2ceil(n) ** 2, n)
    indep = max(b, math.ceil(ell * math.log(n)), 2)
    rng = node_rng(cfg.seed, 1, "hash-seeds")
    h_spec = HashFamilySpec.for_sizes(_hash_spec_bits(pack_key(k - 1, ell - 1, ell)), HASH_RANGE_BITS, indep)
    g_spec = HashFamilySpec.for_sizes(id_bits, HASH_RANGE_BITS, indep)
    h_seed, g_seed = sample_seed(h_spec, rng), sample_seed(g_spec, rng)

    # seeds travel as (slot, coefficient) items from node 1
    coef_bits = h_spec.element_bits
    slot_bits = (2 * indep).bit_length()
    items = {(slot << coef_bits) | c for slot, c in enumerate(h_seed.coefficients + g_seed.coefficients)}
    known, _ = broadcast_set_on(net, {1: items}, len(items), coef_bits + slot_bits)
    recovered = sorted(known[n])
    coeffs = [x & ((1 << coef_bits) - 1) for x in recovered]
    h_fn = KWiseHash(h_spec, HashSeed(tuple(coeffs[:indep])), n)
    g_fn = KWiseHash(g_spec, HashSeed(tuple(coeffs[indep:])), k)

    tasks: dict[int, list[tuple[int, int]]] = {}
    helpers_of: dict[int, tuple[int, ...]] = {}
    radius = 0
    for j, t in enumerate(T):
        hs = tuple(sorted(helpers.helpers[t])) or (t,)
        helpers_of[t] = hs
        for i in range(k):
            tasks.setdefault(hs[i % len(hs)], []).append((i, j))
        hops = bfs_hops(g, t)
        radius = max(radius, max(hops[v] for v in hs))
    net.local_rounds(radius)  # targets hand out tasks along their local trees
    exempt = cfg.gamma < model_capacity_bits(gamma, n)
    return RoutingPlan(T, k, b, h_fn, g_fn, indep, tasks, helpers_of, radius, exempt), net.trace


@dataclass
class DeliveryReport:
    delivered: dict[int, set[tuple[int, int]]]
    rounds_local: int
    rounds_global: int
    max_receive_bits_per_round: int
    X_u_max: int
    Y_i_max: int
    max_msgs_per_round: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    audit_exempt: bool = False

    @property
    def delivered_count(self) -> int:
        return sum(len(v) for v in self.delivered.values())

    def to_dict(self) -> dict:
        return {
            "delivered_count": self.delivered_count,
            "rounds_local": self.rounds_local,
            "rounds_global": self.rounds_global,
            "max_rx_bits": self.max_receive_bits_per_round,
            "xu_max": self.X_u_max,
            "yi_max": self.Y_i_max,
            "seed": self.seed,
        }


def route_tokens(g: WeightedGraph, rplan: RoutingPlan, tokens: Mapping[tuple[int, int], int],
                 config: SimConfig | None = None, net: Network | None = None
                 ) -> tuple[DeliveryReport, ExecutionTrace]:
    """Move token ``(s, t)`` -> payload from every source to every target.

    ``tokens`` is keyed by ``(source_id, target_id)``.
    """
    if net is None:
        net = Network(g, config or SimConfig())
    cfg = net.config
    n, T, k, b = g.n, rplan.targets, rplan.k, rplan.b
    ell = len(T)
    jidx = {t: j for j, t in enumerate(T)}
    sources = sorted({s for s, _ in tokens})
    if len(sources) != k:
        raise ValueError(f"plan expects {k} sources, tokens cover {len(sources)}")
    start, local0, global0 = net.round_no, net.trace.local_round_count, net.trace.global_round_count
    trace_from = len(net.trace.rounds)

    id_bits = n.bit_length()
    j_bits = max(1, (ell - 1).bit_length())
    i_bits = max(1, (k - 1).bit_length())
    # payload field sized for any path length, independent of the actual values
    pay_bits = max((n * g.W).bit_length(), max(tokens.values()).bit_length())
    tok_codec = Codec(id_bits, j_bits, pay_bits)
    req_codec = Codec(id_bits, i_bits, j_bits)
    resp_codec = Codec(1, i_bits, j_bits, id_bits, pay_bits)  # last flag, i, j, src (0 = none), payload

    g_of = {s: rplan.index_of(s) for s in sources}
    inter = {(i, j): rplan.intermediate(i, j) for i in range(k) for j in range(ell)}
    x_load: dict[int, int] = {}
    for u in inter.values():
        x_load[u] = x_load.get(u, 0) + 1
    y_load: dict[int, int] = {}
    for i in g_of.values():
        y_load[i] = y_load.get(i, 0) + 1
    max_msgs = {"tokens": 0, "requests": 0, "responses": 0}

    def note(kind: str, inbox):
        for ms in inbox.values():
            max_msgs[kind] = max(max_msgs[kind], len(ms))

    # phase 1: sources -> intermediates, b tokens per round
    net.label = "route:1"
    store: dict[int, dict[tuple[int, int], list[tuple[int, int]]]] = {}
    queues = {s: [(t, tokens[(s, t)]) for t in T] for s in sources}
    for r in range(-(-ell // b)):
        msgs = []
        for s in sources:
            for seq, (t, payload) in enumerate(queues[s][r * b:(r + 1) * b]):
                j = jidx[t]
                msgs.append(GlobalMessage(s, inter[(g_of[s], j)], tok_codec.pack(s, j, payload), seq))
        inbox = net.round(msgs)
        note("tokens", inbox)
        for u, ms in inbox.items():
            for m in ms:
                s, j, payload = tok_codec.unpack(m.payload)
                store.setdefault(u, {}).setdefault((g_of[s], j), []).append((s, payload))
    net.label = "route:barrier"
    aggregate_on(net, {v: 1 for v in g.nodes}, "sum")

    # phases 2+3: helpers request in batches of b, intermediates answer
    net.label = "route:2"
    pending_tasks = {v: list(ts) for v, ts in rplan.tasks.items()}
    outstanding: dict[int, set[tuple[int, int]]] = {v: set() for v in pending_tasks}
    got: dict[int, list[tuple[int, int, int]]] = {v: [] for v in pending_tasks}
    answer_q: dict[int, list[tuple[int, bytes]]] = {}
    resp_cap = max(1, cfg.gamma // resp_codec.bits)
    inbox: dict[int, list[GlobalMessage]] = {}
    while True:
        # process what arrived last round
        for dst, ms in inbox.items():
            for m in ms:
                if m.seq % 2 == 0:  # request
                    v, i, j = req_codec.unpack(m.payload)
                    held = store.get(dst, {}).get((i, j), [])
                    q = answer_q.setdefault(dst, [])
                    if not held:
                        q.append((v, resp_codec.pack(1, i, j, 0, 0)))
                    for idx, (s, payload) in enumerate(held):
                        q.append((v, resp_codec.pack(int(idx == len(held) - 1), i, j, s, payload)))
                else:
                    last, i, j, s, payload = resp_codec.unpack(m.payload)
                    if s:
                        got[dst].append((j, s, payload))
                    if last:
                        outstanding[dst].discard((i, j))
        if not any(pending_tasks.values()) and not any(outstanding.values()) and not any(answer_q.values()):
            break
        msgs = []
        for v in sorted(pending_tasks):
            if not outstanding[v] and pending_tasks[v]:
                batch, pending_tasks[v] = pending_tasks[v][:b], pending_tasks[v][b:]
                for seq, (i, j) in enumerate(batch):
                    outstanding[v].add((i, j))
                    msgs.append(GlobalMessage(v, inter[(i, j)], req_codec.pack(v, i, j), 2 * seq))
        for u in sorted(answer_q):
            q = answer_q[u]
            for seq, (v, payload) in enumerate(q[:resp_cap]):
                msgs.append(GlobalMessage(u, v, payload, 2 * seq + 1))
            answer_q[u] = q[resp_cap:]
        inbox = net.round(msgs)
        for dst, ms in inbox.items():
            reqs = sum(m.seq % 2 == 0 for m in ms)
            max_msgs["requests"] = max(max_msgs["requests"], reqs)
            max_msgs["responses"] = max(max_msgs["responses"], len(ms) - reqs)
    net.label = "route:barrier"
    aggregate_on(net, {v: 1 for v in g.nodes}, "sum")

    # phase 4: targets collect from their helpers over the local network
    net.label = "route:4"
    net.local_rounds(rplan.collect_radius)
    net.label = ""
    delivered: dict[int, set[tuple[int, int]]] = {t: set() for t in T}
    for v, items in got.items():
        for j, s, payload in items:
            if v in rplan.helpers_of[T[j]]:
                delivered[T[j]].add((s, payload))
    missing = [(s, t) for (s, t) in tokens if (s, tokens[(s, t)]) not in delivered[t]]
    if missing:
        raise MissingTokens(missing)
    max_rx = max((max(r.received.values(), default=0) for r in net.trace.rounds[trace_from:]), default=0)
    report = DeliveryReport(
        delivered,
        net.trace.local_round_count - local0,
        net.trace.global_round_count - global0,
        max_rx,
        max(x_load.values()),
        max(y_load.values()),
        max_msgs,
        cfg.seed,
        rplan.audit_exempt,
    )
    return report, net.trace
