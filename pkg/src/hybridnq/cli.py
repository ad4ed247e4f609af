"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 capacity or audit failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import __version__
from .clustering import build_helper_sets, iid_targets, verify_helpers
from .graph import GENERATOR_KINDS, GraphError, WeightedGraph, build_from_edge_list, generate, to_edge_list
from .lower_bound import (HardInstanceError, audit_information_flow, build_hard_instance, lb_value, run_trial,
                          verify_hard_instance)
from .nq import nq_distributed, nq_oracle
from .pipeline import EXACT, SKELETON, InstanceError, SPInstance, solve_k_ell_sp
from .routing import MissingTokens, plan, route_tokens
from .sim import ADVERSARIAL_DROP, AUDIT_FAIL, CapacityViolation, Network, SimConfig, model_capacity_bits

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class AuditFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def node_list(text: str) -> list[int]:
    """'3', '1,4,9' or '2-6' (mixable)."""
    out: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty node list")
    return sorted(out)


def load_graph(path: str) -> WeightedGraph:
    return build_from_edge_list(Path(path).read_text())


def sim_config(args, gamma: int, n: int) -> SimConfig:
    return SimConfig(gamma=model_capacity_bits(gamma, n), seed=args.seed, c=args.c, violation_policy=args.policy)


def frac(x: Fraction) -> list[int]:
    return [x.numerator, x.denominator]


def emit(args, result: dict) -> None:
    echo = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "output")}
    report = {"tool": "hybridnq", "version": __version__, "command": args.command,
              "spec": echo, "seed": args.seed, "result": result}
    text = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if getattr(args, "out", None):
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(text)
    elif getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def pick_sources(args, g: WeightedGraph) -> list[int]:
    if args.sources:
        return args.sources
    k = args.k if args.k else g.n
    return sorted(random.Random(args.seed).sample(list(g.nodes), k))


def pick_targets(args, g: WeightedGraph) -> tuple[list[int], str]:
    if args.iid_targets:
        return list(iid_targets(g.n, args.iid_targets, random.Random(args.seed))), "iid_uniform"
    return (args.targets or [1]), "fixed"


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    params = {k: getattr(args, k) for k in ("n", "rows", "cols", "p", "clique") if getattr(args, k) is not None}
    wr = (args.wmin, args.wmax) if args.wmax else None
    g = generate(args.kind, seed=args.seed, weight_range=wr, **params)
    text = to_edge_list(g)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_nq(args) -> int:
    g = load_graph(args.graph)
    rep, trace = nq_distributed(g, args.k, args.gamma, sim_config(args, args.gamma, g.n))
    result = rep.to_dict()
    result["local_rounds"] = rep.local_rounds
    if args.check:
        result["oracle_match"] = nq_oracle(g, args.k, args.gamma).value == rep.value
    emit(args, result)
    return EXIT_OK


def cmd_helpers(args) -> int:
    g = load_graph(args.graph)
    targets, _ = pick_targets(args, g)
    fam, trace = build_helper_sets(g, targets, args.k, args.gamma, config=sim_config(args, args.gamma, g.n))
    chk = verify_helpers(g, fam, args.k, args.gamma, args.c)
    emit(args, {"helpers": fam.to_dict(), "nq": frac(fam.nq_used), "alpha": fam.alpha,
                "rounds": trace.total_round_count,
                "check": {"size": chk.size_ok, "distance": chk.distance_ok, "load": chk.load_ok, **chk.details}})
    return EXIT_OK if chk.ok else EXIT_FAILED


def cmd_route(args) -> int:
    g = load_graph(args.graph)
    S = pick_sources(args, g)
    T, _ = pick_targets(args, g)
    net = Network(g, sim_config(args, args.gamma, g.n))
    nq, _ = nq_distributed(g, len(S), args.gamma, net=net)
    fam, _ = build_helper_sets(g, T, len(S), args.gamma, nq=nq, net=net)
    rplan, _ = plan(g, S, T, len(S), args.gamma, fam, net=net)
    tokens = {(s, t): s for s in S for t in rplan.targets}
    report, trace = route_tokens(g, rplan, tokens, net=net)
    emit(args, {"delivery": report.to_dict(), "nq": frac(nq.value), "rounds_total": trace.total_round_count,
                "gamma_bits": net.config.gamma})
    return EXIT_OK


def cmd_ksp(args) -> int:
    g = load_graph(args.graph)
    S = pick_sources(args, g)
    T, mode = pick_targets(args, g)
    inst = SPInstance(g, tuple(S), tuple(sorted(set(T))), Fraction(args.eps), mode,
                      args.seed if mode == "iid_uniform" else None)
    res = solve_k_ell_sp(inst, args.gamma, sim_config(args, args.gamma, g.n),
                         mode=SKELETON if args.mode == "skeleton" else EXACT, skeleton_x=args.x)
    emit(args, res.to_dict(inst))
    return EXIT_OK


def cmd_hard(args) -> int:
    g = load_graph(args.graph)
    inst = build_hard_instance(g, args.k, args.gamma, args.p_exp)
    chk = verify_hard_instance(inst)
    if args.prefix:
        Path(args.prefix + ".el").write_text(to_edge_list(inst.graph))
        Path(args.prefix + ".json").write_text(inst.sidecar_json() + "\n")
    emit(args, {"instance": inst.sidecar(), "case": inst.case, "n_prime": inst.n_prime,
                "check": {"sizes": chk.sizes_ok, "separation": chk.separation_ok, "crossing": chk.crossing_ok,
                          "weights": chk.weights_ok},
                "lb": lb_value(g, args.k, args.gamma).to_dict()})
    return EXIT_OK if chk.ok else EXIT_FAILED


def cmd_audit(args) -> int:
    g = load_graph(args.graph)
    inst = build_hard_instance(g, args.k, args.gamma, args.p_exp)
    rng = random.Random(args.seed)
    trials = []
    for r in range(args.runs):
        X = [rng.randint(0, 1) for _ in range(inst.k_prime)]
        trials.append(run_trial(inst, X, args.gamma, seed=args.seed * 100003 + r))
    rep = audit_information_flow([t.trace for t in trials], inst, [t.success for t in trials], args.gamma)
    emit(args, {"audit": rep.to_dict(), "decoded_all": all(t.success for t in trials),
                "k_prime": inst.k_prime, "v": inst.v, "d_v": inst.d_v})
    if not rep.holds:
        raise AuditFailure("mean bits into the ball fall below the bound")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def parse_graph_spec(text: str) -> tuple[str, dict]:
    """'kind:key=val,key=val' e.g. 'grid:rows=8,cols=8' or 'path:n=64'."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        params[key] = float(val) if key == "p" else int(val)
    return kind, params


def resolve_k(token: str, n: int) -> int:
    if token == "n":
        return n
    if token == "half":
        return max(1, n // 2)
    if token == "sqrt":
        return max(1, math.isqrt(n))
    return int(token)


SWEEP_COLUMNS = ["graph", "n", "k", "gamma", "nq_num", "nq_den", "nq", "sqrt_bound", "rounds_nq",
                 "rounds_phaseA", "rounds_phaseB", "max_rx_bits", "gamma_bits", "stretch_num", "stretch_den",
                 "status"]


def sweep_cell(cell: tuple) -> dict:
    graph_spec, k_token, gamma, seed, c, route = cell
    row = {col: "" for col in SWEEP_COLUMNS}
    row.update(graph=graph_spec, gamma=gamma)
    try:
        kind, params = parse_graph_spec(graph_spec)
        g = generate(kind, seed=seed, **params)
        k = resolve_k(k_token, g.n)
        row.update(n=g.n, k=k, sqrt_bound=f"{math.sqrt(k / gamma) + 1:.6f}")
        cfg = SimConfig(gamma=model_capacity_bits(gamma, g.n), seed=seed, c=c)
        rep, _ = nq_distributed(g, k, gamma, cfg)
        row.update(nq_num=rep.value.numerator, nq_den=rep.value.denominator, nq=f"{float(rep.value):.6f}",
                   rounds_nq=rep.rounds, gamma_bits=cfg.gamma)
        if route:
            S = tuple(sorted(random.Random(seed).sample(list(g.nodes), k)))
            inst = SPInstance(g, S, (1,))
            res = solve_k_ell_sp(inst, gamma, cfg)
            d = res.to_dict(inst)
            row.update(rounds_phaseA=d["rounds_phaseA"], rounds_phaseB=d["rounds_phaseB"],
                       max_rx_bits=res.trace.max_received_bits(),
                       stretch_num=d["stretch_num"], stretch_den=d["stretch_den"])
        row["status"] = "ok"
    except Exception as exc:  # recorded per cell, the sweep goes on
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    return row


def sweep(cells: list[tuple], jobs: int = 1) -> list[dict]:
    if not cells:
        raise ValueError("empty sweep grid")
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(sweep_cell, cells))
    return [sweep_cell(c) for c in cells]


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_bench(args) -> int:
    cells = [(gs, kt, gm, args.seed, args.c, not args.no_route)
             for gs in args.graphs for kt in args.ks for gm in args.gammas]
    rows = sweep(cells, args.jobs)
    text = rows_to_csv(rows)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "sweep.csv").write_text(text)
    else:
        sys.stdout.write(text)
    if args.out:
        emit(args, {"rows": rows})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridnq", description="Neighborhood-quality experiments on simulated networks")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph=True):
        if graph:
            sp.add_argument("-g", "--graph", required=True, help="edge-list file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--c", type=float, default=2.0, help="w.h.p. constant")
        sp.add_argument("--policy", choices=[AUDIT_FAIL, ADVERSARIAL_DROP], default=AUDIT_FAIL)
        sp.add_argument("-o", "--output", help="write the JSON report here")
        sp.add_argument("--out", help="directory for report.json (and sweep.csv)")

    def st(sp):
        sp.add_argument("--sources", type=node_list, help="e.g. 1,5,9 or 1-64")
        sp.add_argument("--targets", type=node_list)
        sp.add_argument("--iid-targets", type=int, metavar="ELL", help="draw ELL i.i.d. uniform targets")

    sp = sub.add_parser("gen", help="generate a graph")
    sp.add_argument("--kind", choices=GENERATOR_KINDS, required=True)
    for name in ("n", "rows", "cols", "clique"):
        sp.add_argument(f"--{name}", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--wmin", type=int, default=1)
    sp.add_argument("--wmax", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("nq", help="compute NQ(G, k, gamma)")
    common(sp)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--gamma", type=int, required=True)
    sp.add_argument("--check", action="store_true", help="compare with the centralized oracle")
    sp.set_defaults(func=cmd_nq)

    sp = sub.add_parser("helpers", help="build and verify helper sets")
    common(sp)
    st(sp)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--gamma", type=int, required=True)
    sp.set_defaults(func=cmd_helpers)

    sp = sub.add_parser("route", help="route one token per (source, target)")
    common(sp)
    st(sp)
    sp.add_argument("-k", type=int)
    sp.add_argument("--gamma", type=int, required=True)
    sp.set_defaults(func=cmd_route)

    sp = sub.add_parser("ksp", help="solve (k, l)-shortest paths")
    common(sp)
    st(sp)
    sp.add_argument("-k", type=int)
    sp.add_argument("--gamma", type=int, required=True)
    sp.add_argument("--eps", default="1/10")
    sp.add_argument("--mode", choices=["exact", "skeleton"], default="exact")
    sp.add_argument("--x", type=float, default=4.0, help="skeleton sampling parameter")
    sp.set_defaults(func=cmd_ksp)

    for name, fn, helptext in (("hard", cmd_hard, "build a hard weighting"),
                               ("audit", cmd_audit, "decode trials plus information-flow audit")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("-k", type=int, required=True)
        sp.add_argument("--gamma", type=int, required=True)
        sp.add_argument("--p-exp", type=int, default=1, help="p(n) = n^P")
        if name == "hard":
            sp.add_argument("--prefix", help="write PREFIX.el and PREFIX.json")
        else:
            sp.add_argument("--runs", type=int, default=100)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("bench", aliases=["sweep"], help="grid sweep to CSV")
    common(sp, graph=False)
    sp.add_argument("--graphs", nargs="*", default=[], help="kind:key=val,... e.g. path:n=64")
    sp.add_argument("--ks", nargs="*", default=["n"], help="integers or n / half / sqrt")
    sp.add_argument("--gammas", nargs="*", type=int, default=[1])
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--no-route", action="store_true", help="only compute NQ per cell")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CapacityViolation, MissingTokens, AuditFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (GraphError, InstanceError, HardInstanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
