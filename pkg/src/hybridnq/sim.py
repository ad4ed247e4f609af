"""Synchronous round engine for the HYBRID(lambda, gamma) model.

Messages sent in round ``r`` are received at the start of round ``r+1``.
Global traffic is capped at ``gamma`` bits sent and ``gamma`` bits received
per node per round; local traffic is capped at ``lambda`` bits per edge per
round (unbounded by default).

Two violation policies exist. ``audit_fail`` raises
:class:`CapacityViolation` on the first breach. ``adversarial_drop`` keeps,
per source and then per destination, the prefix of messages in ``(src,
seq)`` order that fits the budget and drops the rest.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

from .graph import WeightedGraph

AUDIT_FAIL = "audit_fail"
ADVERSARIAL_DROP = "adversarial_drop"


class CapacityViolation(RuntimeError):
    def __init__(self, node: int, round_no: int, direction: str, bits: int, gamma: int):
        self.node, self.round_no, self.direction = node, round_no, direction
        self.bits, self.gamma = bits, gamma
        super().__init__(
            f"node {node} {direction} {bits} global bits in round {round_no} (cap {gamma})"
        )


class RoundCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    gamma: int = 64
    lam: int | None = None  # None means unbounded local bandwidth
    seed: int = 0
    violation_policy: str = AUDIT_FAIL
    c: float = 2.0
    max_rounds: int = 1_000_000

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.violation_policy not in (AUDIT_FAIL, ADVERSARIAL_DROP):
            raise ValueError(f"unknown violation policy {self.violation_policy!r}")

    def replace(self, **kw) -> "SimConfig":
        return SimConfig(**{**self.__dict__, **kw})


def log2ceil(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


# a message of the model is one O(log n)-bit word; the engine charges real
# widths, up to 4 fields of ceil(log2 n^3) bits (weights go up to n^2 + n)
MSG_WORDS = 4 * 3


def model_capacity_bits(gamma: int, n: int) -> int:
    """Engine bit budget for model parameter ``gamma``.

    The batch formula charges each O(log n)-bit message log n bits, so a
    gamma unit is 8*ceil(log2 n)^2 of those; each word is widened to the
    engine's real message width of ``MSG_WORDS * ceil(log2 n)`` bits.
    """
    return gamma * 8 * log2ceil(n) ** 2 * MSG_WORDS


def derive_seed(*parts: Any) -> int:
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def node_rng(seed: int, node: int, purpose: str = "") -> random.Random:
    return random.Random(derive_seed(seed, node, purpose))


# ---------------------------------------------------------------------------
# payload codec


class Codec:
    """Fixed-width bit packing of integer fields into byte payloads."""

    def __init__(self, *widths: int):
        self.widths = widths
        self.nbytes = (sum(widths) + 7) // 8

    @property
    def bits(self) -> int:
        return 8 * self.nbytes

    def pack(self, *values: int) -> bytes:
        acc = 0
        for v, w in zip(values, self.widths, strict=True):
            if v < 0 or v.bit_length() > w:
                raise ValueError(f"value {v} does not fit in {w} bits")
            acc = (acc << w) | v
        return acc.to_bytes(self.nbytes, "big")

    def unpack(self, payload: bytes) -> tuple[int, ...]:
        acc = int.from_bytes(payload, "big")
        out = []
        for w in reversed(self.widths):
            out.append(acc & ((1 << w) - 1))
            acc >>= w
        return tuple(reversed(out))


class GlobalMessage(NamedTuple):
    src: int
    dst: int
    payload: bytes
    seq: int = 0

    @property
    def bit_size(self) -> int:
        return 8 * len(self.payload)


# ---------------------------------------------------------------------------
# trace


@dataclass
class RoundRecord:
    index: int
    kind: str  # local | global | both | idle
    sent: dict[int, int] = field(default_factory=dict)
    received: dict[int, int] = field(default_factory=dict)
    local_messages: int = 0
    dropped: list[tuple[int, int, int]] = field(default_factory=list)
    label: str = ""


@dataclass
class ExecutionTrace:
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def local_round_count(self) -> int:
        return sum(r.kind in ("local", "both") for r in self.rounds)

    @property
    def global_round_count(self) -> int:
        return sum(r.kind in ("global", "both") for r in self.rounds)

    @property
    def total_round_count(self) -> int:
        return len(self.rounds)

    def max_received_bits(self) -> int:
        return max((max(r.received.values(), default=0) for r in self.rounds), default=0)

    def max_sent_bits(self) -> int:
        return max((max(r.sent.values(), default=0) for r in self.rounds), default=0)

    def bits_received_by(self, nodes: Iterable[int]) -> int:
        ns = set(nodes)
        return sum(b for r in self.rounds for v, b in r.received.items() if v in ns)

    def dropped(self) -> list[tuple[int, int, int, int]]:
        return [(r.index, *d) for r in self.rounds for d in r.dropped]

    def extend(self, other: "ExecutionTrace") -> None:
        base = len(self.rounds)
        for i, r in enumerate(other.rounds, 1):
            r.index = base + i
            self.rounds.append(r)

    def rounds_with_label(self, prefix: str) -> int:
        return sum(r.label.startswith(prefix) for r in self.rounds)

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {"index": r.index, "kind": r.kind, "label": r.label, "local_messages": r.local_messages}
                for r in self.rounds
            ],
            "per_node_bits": [
                [[v, r.sent.get(v, 0), r.received.get(v, 0)] for v in sorted(set(r.sent) | set(r.received))]
                for r in self.rounds
            ],
            "dropped": [list(d) for d in self.dropped()],
            "totals": {
                "local": self.local_round_count,
                "global": self.global_round_count,
                "combined": self.total_round_count,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# delivery


def _budget_prefix(msgs: list[GlobalMessage], gamma: int) -> tuple[list, list]:
    kept, dropped, used = [], [], 0
    for m in msgs:
        if not dropped and used + m.bit_size <= gamma:
            kept.append(m)
            used += m.bit_size
        else:
            dropped.append(m)
    return kept, dropped


def deliver_global(pending: Iterable[GlobalMessage], config: SimConfig, round_no: int = 0
                   ) -> tuple[list[GlobalMessage], list[GlobalMessage]]:
    """Apply the send and receive caps to one round of global messages."""
    gamma = config.gamma
    pending = list(pending)
    if not pending:
        return [], []
    sent: dict[int, int] = {}
    recv: dict[int, int] = {}
    for m in pending:
        size = 8 * len(m.payload)
        sent[m.src] = sent.get(m.src, 0) + size
        recv[m.dst] = recv.get(m.dst, 0) + size
    if max(sent.values()) <= gamma and max(recv.values()) <= gamma:
        return sorted(pending, key=lambda m: (m.dst, m.src, m.seq)), []
    by_src: dict[int, list[GlobalMessage]] = {}
    for m in pending:
        by_src.setdefault(m.src, []).append(m)
    dropped: list[GlobalMessage] = []
    survivors: list[GlobalMessage] = []
    for src in sorted(by_src):
        msgs = by_src[src]
        total = sum(m.bit_size for m in msgs)
        if total > gamma:
            if config.violation_policy == AUDIT_FAIL:
                raise CapacityViolation(src, round_no, "sent", total, gamma)
            kept, lost = _budget_prefix(sorted(msgs, key=lambda m: (m.dst, m.seq)), gamma)
            survivors += kept
            dropped += lost
        else:
            survivors += msgs
    by_dst: dict[int, list[GlobalMessage]] = {}
    for m in survivors:
        by_dst.setdefault(m.dst, []).append(m)
    delivered: list[GlobalMessage] = []
    for dst in sorted(by_dst):
        msgs = sorted(by_dst[dst], key=lambda m: (m.src, m.seq))
        total = sum(m.bit_size for m in msgs)
        if total > gamma:
            if config.violation_policy == AUDIT_FAIL:
                raise CapacityViolation(dst, round_no, "received", total, gamma)
            kept, lost = _budget_prefix(msgs, gamma)
            delivered += kept
            dropped += lost
        else:
            delivered += msgs
    return delivered, dropped


class Network:
    """Round-by-round driver that records an :class:`ExecutionTrace`.

    Protocols call :meth:`round` once per synchronous round; the engine
    enforces the global caps and tallies bits.
    """

    def __init__(self, g: WeightedGraph, config: SimConfig, trace: ExecutionTrace | None = None):
        self.g = g
        self.config = config
        self.trace = trace if trace is not None else ExecutionTrace()
        self.label = ""

    @property
    def round_no(self) -> int:
        return len(self.trace.rounds)

    def round(self, global_msgs: Sequence[GlobalMessage] = (), local_messages: int = 0,
              local_used: bool | None = None) -> dict[int, list[GlobalMessage]]:
        """Run one round; returns delivered global messages grouped by destination."""
        idx = self.round_no + 1
        if idx > self.config.max_rounds:
            raise RoundCapExceeded(f"round cap {self.config.max_rounds} exceeded")
        delivered, dropped = deliver_global(global_msgs, self.config, idx)
        uses_local = local_messages > 0 if local_used is None else local_used
        if delivered or dropped:
            kind = "both" if uses_local else "global"
        else:
            kind = "local" if uses_local else "idle"
        rec = RoundRecord(idx, kind, local_messages=local_messages, label=self.label)
        for m in global_msgs:
            rec.sent[m.src] = rec.sent.get(m.src, 0) + m.bit_size
        inbox: dict[int, list[GlobalMessage]] = {}
        for m in delivered:
            rec.received[m.dst] = rec.received.get(m.dst, 0) + m.bit_size
            inbox.setdefault(m.dst, []).append(m)
        rec.dropped = [(m.src, m.dst, m.bit_size) for m in dropped]
        self.trace.rounds.append(rec)
        return inbox

    def local_rounds(self, count: int, messages_per_round: int = 0) -> None:
        """Advance ``count`` rounds that use only the (unbounded) local network."""
        msgs = messages_per_round or 2 * self.g.m
        for _ in range(count):
            self.round((), local_messages=msgs, local_used=True)


# ---------------------------------------------------------------------------
# generic node programs

StepFn = Callable[[Any, list, list, int, random.Random], tuple[Any, Any, Any, bool]]


@dataclass
class NodeProgram:
    """A node's state machine.

    ``step(state, inbox_local, inbox_global, round_no, rng)`` returns
    ``(state, outbox_local, outbox_global, halt)``. ``outbox_local`` maps a
    neighbor to a payload; ``outbox_global`` is a list of ``(dst, bytes)``.
    Inbox entries are ``(sender, payload)`` pairs sorted by sender.
    """
    step: StepFn
    state: Any = None


def _payload_bits(payload: Any) -> int:
    if isinstance(payload, (bytes, bytearray)):
        return 8 * len(payload)
    return 0


def run(g: WeightedGraph, programs: Mapping[int, NodeProgram], config: SimConfig,
        max_rounds: int | None = None) -> tuple[ExecutionTrace, dict[int, Any]]:
    """Execute node programs until all halt; returns the trace and final states."""
    if set(programs) != set(g.nodes):
        raise ValueError("need exactly one program per node")
    cap = config.max_rounds if max_rounds is None else max_rounds
    net = Network(g, config.replace(max_rounds=cap))
    states = {v: programs[v].state for v in g.nodes}
    rngs = {v: node_rng(config.seed, v, "program") for v in g.nodes}
    halted: set[int] = set()
    inbox_local: dict[int, list] = {v: [] for v in g.nodes}
    inbox_global: dict[int, list] = {v: [] for v in g.nodes}
    neighbor_sets = {v: set(g.adj[v]) for v in g.nodes}
    while len(halted) < g.n:
        rnd = net.round_no + 1
        out_global: list[GlobalMessage] = []
        next_local: dict[int, list] = {v: [] for v in g.nodes}
        local_count = 0
        seq = 0
        for v in g.nodes:
            if v in halted:
                continue
            state, o_local, o_global, halt = programs[v].step(
                states[v], sorted(inbox_local[v], key=lambda t: t[0]),
                sorted(inbox_global[v], key=lambda t: t[0]), rnd, rngs[v])
            states[v] = state
            for nbr, payload in sorted((o_local or {}).items()):
                if nbr not in neighbor_sets[v]:
                    raise ValueError(f"node {v} sent a local message to non-neighbor {nbr}")
                if config.lam is not None and _payload_bits(payload) > config.lam:
                    if config.violation_policy == AUDIT_FAIL:
                        raise CapacityViolation(v, rnd, "local-sent", _payload_bits(payload), config.lam)
                    continue
                next_local[nbr].append((v, payload))
                local_count += 1
            for dst, payload in o_global or ():
                out_global.append(GlobalMessage(v, dst, bytes(payload), seq))
                seq += 1
            if halt:
                halted.add(v)
        delivered = net.round(out_global, local_messages=local_count)
        inbox_local = next_local
        inbox_global = {v: [(m.src, m.payload) for m in delivered.get(v, [])] for v in g.nodes}
    return net.trace, states


# ---------------------------------------------------------------------------
# aggregation and broadcast substitutes


def _tree_aggregate(net: Network, values: Mapping[int, Any], combine: Callable[[Any, Any], Any],
                    encode: Callable[[Any], bytes], decode: Callable[[bytes], Any]) -> tuple[Any, int]:
    """Binomial-tree reduce to node 1 followed by a broadcast back.

    Node ``i`` (0-based ``i = id-1``) sends in reduce step ``r`` iff its
    lowest set bit is ``r``; every node sends and receives at most one message
    per round. Uses exactly ``2*ceil(log2 n)`` rounds (0 when n = 1).
    """
    n = net.g.n
    if n == 1:
        return values[1], 0
    L = log2ceil(n)
    partial = {v: values[v] for v in net.g.nodes}
    start = net.round_no
    for r in range(L):
        step = 1 << r
        msgs = [GlobalMessage(i + 1, i - step + 1, encode(partial[i + 1]))
                for i in range(n) if i % (step << 1) == step]
        inbox = net.round(msgs)
        for dst, ms in inbox.items():
            for m in ms:
                partial[dst] = combine(partial[dst], decode(m.payload))
    result = partial[1]
    for r in reversed(range(L)):
        step = 1 << r
        msgs = [GlobalMessage(i + 1, i + step + 1, encode(result))
                for i in range(0, n, step << 1) if i + step < n]
        inbox = net.round(msgs)
        for ms in inbox.values():
            for m in ms:
                assert decode(m.payload) == result
    return result, net.round_no - start


def int_codec(n: int, width: int | None = None) -> Codec:
    return Codec(width if width is not None else max(8, 2 * log2ceil(n) + 2))


def aggregate_on(net: Network, values: Mapping[int, int], op: str, width: int | None = None) -> tuple[int, int]:
    if op not in ("max", "sum"):
        raise ValueError(f"unsupported aggregate op {op!r}")
    n = net.g.n
    codec = int_codec(n, width)
    worst = sum(values.values()) if op == "sum" else max(values.values())
    if min(values.values()) < 0 or worst.bit_length() > codec.widths[0]:
        raise ValueError(f"aggregate value too wide for a {codec.widths[0]}-bit message field")
    if codec.bits > net.config.gamma and n > 1:
        raise ValueError(f"a {codec.bits}-bit aggregate message exceeds gamma={net.config.gamma}")
    combine = max if op == "max" else (lambda a, b: a + b)
    return _tree_aggregate(net, values, combine, codec.pack, lambda p: codec.unpack(p)[0])


def aggregate(g: WeightedGraph, values: Mapping[int, int], op: str, config: SimConfig,
              width: int | None = None) -> tuple[int, int, ExecutionTrace]:
    """All nodes learn ``max`` or ``sum`` of one small integer per node."""
    net = Network(g, config)
    result, rounds = aggregate_on(net, values, op, width)
    return result, rounds, net.trace


def fraction_codec(num_bits: int, den_bits: int) -> Codec:
    return Codec(num_bits, den_bits)


def aggregate_max_fraction(net: Network, values: Mapping[int, Fraction], num_bits: int, den_bits: int
                           ) -> tuple[Fraction, int]:
    codec = fraction_codec(num_bits, den_bits)
    return _tree_aggregate(
        net, values, max,
        lambda f: codec.pack(f.numerator, f.denominator),
        lambda p: Fraction(*codec.unpack(p)),
    )


def broadcast_per_round(gamma: int, n: int, item_bits: int) -> int:
    """Messages a node may push per round: floor(gamma / (2*ceil(log2 n))), within the send cap."""
    msg_bits = 8 * ((item_bits + 7) // 8)
    if msg_bits > gamma:
        raise ValueError(f"a {msg_bits}-bit item message exceeds gamma={gamma}")
    return max(1, min(gamma // (2 * log2ceil(n)), gamma // msg_bits))


def broadcast_set_on(net: Network, holders: Mapping[int, Iterable[int]], ell: int,
                     item_bits: int) -> tuple[dict[int, set[int]], int]:
    """Make the union of all held items known everywhere.

    A sum-aggregate first checks whether every node already knows ``ell``
    items. Otherwise items travel up a binomial tree to node 1 and back down,
    ``m`` items per message slot per round, with fixed-length phases of
    ``ceil(ell/m)`` rounds so the schedule needs no extra coordination.
    """
    n = net.g.n
    known = {v: set(holders.get(v, ())) for v in net.g.nodes}
    if ell == 0:
        return known, 0
    start = net.round_no
    done = {v: int(len(known[v]) >= ell) for v in net.g.nodes}
    total, _ = aggregate_on(net, done, "sum")
    if total == n or n == 1:
        return known, net.round_no - start
    m = broadcast_per_round(net.config.gamma, n, item_bits)
    codec = Codec(8 * ((item_bits + 7) // 8))
    phase_len = -(-ell // m)
    L = log2ceil(n)

    def run_phase(pairs: list[tuple[int, int]], payloads: dict[int, list[int]]) -> None:
        for t in range(phase_len):
            msgs = []
            for src, dst in pairs:
                chunk = payloads[src][t * m:(t + 1) * m]
                msgs += [GlobalMessage(src, dst, codec.pack(x), s) for s, x in enumerate(chunk)]
            inbox = net.round(msgs)
            for dst, ms in inbox.items():
                known[dst].update(codec.unpack(mm.payload)[0] for mm in ms)

    for r in range(L):
        step = 1 << r
        pairs = [(i + 1, i - step + 1) for i in range(n) if i % (step << 1) == step]
        run_phase(pairs, {src: sorted(known[src]) for src, _ in pairs})
    for r in reversed(range(L)):
        step = 1 << r
        pairs = [(i + 1, i + step + 1) for i in range(0, n, step << 1) if i + step < n]
        run_phase(pairs, {src: sorted(known[src]) for src, _ in pairs})
    return known, net.round_no - start


def broadcast_set(g: WeightedGraph, holders: Mapping[int, Iterable[int]], ell: int, config: SimConfig,
                  item_bits: int | None = None) -> tuple[dict[int, set[int]], int, ExecutionTrace]:
    net = Network(g, config)
    bits = item_bits if item_bits is not None else max(8, 2 * log2ceil(g.n))
    known, rounds = broadcast_set_on(net, holders, ell, bits)
    return known, rounds, net.trace
