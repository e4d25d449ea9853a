"""Command-line front end.

Every subcommand prints a JSON document to stdout (the bench table can also
be requested as CSV). Failures print one JSON object of the form
``{"error": {"code": ..., "message": ...}}`` to stderr and exit with status
2 for usage or validation problems, or 3 when a size or iteration limit
trips. Subcommands that verify something exit 1 when the check fails, so a
zero status always means "ran and passed".

Identical command lines with identical seeds produce identical output,
except for the wall-clock column of the bench table.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
import time
from pathlib import Path
from typing import Sequence

from .errors import (
    FILE_NOT_FOUND,
    INVALID_SCHEMA,
    CodedError,
    LimitError,
    ValidationError,
)
from .graphs import (
    BUILTIN_PAIR_NAMES,
    Graph,
    apply_permutation,
    builtin_pair,
    graph_to_dict,
    load_graph,
)
from .refine import DEFAULT_MAX_ITERATIONS, distinguish, refine_to_stable, run_to_dict
from .simulate import DEFAULT_TEMPERATURE, simulate_and_compare
from .spectral import (
    EncoderParams,
    arithmetic_epsilon,
    check_identifying,
    eigh,
    identifying_targets,
    laplacian,
    lpe,
    spe,
)
from .tokens import TokenizerConfig, node_tokens, tuple_tokens

# Flag spellings accepted on the command line, mapped to the names the
# refinement engine uses internally.
VARIANT_NAMES = {
    "kwl": "kwl",
    "delta": "delta_kwl",
    "delta-local": "delta_klwl",
    "ks-local": "ks_lwl",
}

DEFAULT_BENCH_VARIANTS = "1wl,kwl:2,delta:2,ks-local:2:1"

BENCH_COLUMNS = ("pair", "variant", "k", "s", "distinguished", "at_iteration", "wall_time_ms")


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as machine-readable JSON."""

    def error(self, message: str) -> None:  # type: ignore[override]
        _print_error(INVALID_SCHEMA, message)
        raise SystemExit(2)


def _print_error(code: str, message: str) -> None:
    doc = {"error": {"code": code, "message": message}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def _emit(doc: dict, out: str | None = None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_graph(path: str) -> Graph:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ValidationError(FILE_NOT_FOUND, f"no such graph file: {path}") from None
    except IsADirectoryError:
        raise ValidationError(FILE_NOT_FOUND, f"not a readable file: {path}") from None
    return load_graph(text)


def _engine_variant(name: str) -> str:
    if name not in VARIANT_NAMES:
        raise ValidationError(
            INVALID_SCHEMA,
            f"unknown variant {name!r}, expected one of {', '.join(sorted(VARIANT_NAMES))}",
        )
    return VARIANT_NAMES[name]


def _resolve_s(k: int, s: int | None) -> int:
    return k if s is None else s


def _parse_bench_spec(spec: str) -> tuple[str, int, int]:
    """Turn a panel entry like ``delta:2`` into (cli_variant, k, s).

    ``1wl`` is shorthand for classic color refinement, i.e. ``kwl:1:1``.
    Omitted orders default to k = 1 and s = k.
    """
    parts = spec.split(":")
    if parts[0] == "1wl":
        if len(parts) != 1:
            raise ValidationError(INVALID_SCHEMA, f"'1wl' takes no order arguments, got {spec!r}")
        return "kwl", 1, 1
    if parts[0] not in VARIANT_NAMES:
        raise ValidationError(INVALID_SCHEMA, f"unknown bench variant spec {spec!r}")
    if len(parts) > 3:
        raise ValidationError(INVALID_SCHEMA, f"expected variant[:k[:s]], got {spec!r}")
    try:
        k = int(parts[1]) if len(parts) > 1 else 1
        s = int(parts[2]) if len(parts) > 2 else k
    except ValueError:
        raise ValidationError(INVALID_SCHEMA, f"non-integer order in bench spec {spec!r}") from None
    return parts[0], k, s


def cmd_refine(args: argparse.Namespace) -> int:
    graph = _read_graph(args.graph)
    variant = _engine_variant(args.variant)
    s = _resolve_s(args.k, args.s)
    run = refine_to_stable(graph, args.k, s, variant, max_iterations=args.max_iter)
    _emit(run_to_dict(run, variant), args.out)
    return 0


def _distinguish_inputs(args: argparse.Namespace) -> tuple[Graph, Graph]:
    if args.pair is not None:
        if args.g1 is not None or args.g2 is not None:
            raise ValidationError(INVALID_SCHEMA, "--pair excludes --g1 and --g2")
        return builtin_pair(args.pair)
    if args.g1 is None or args.g2 is None:
        raise ValidationError(INVALID_SCHEMA, "need either --pair or both --g1 and --g2")
    return _read_graph(args.g1), _read_graph(args.g2)


def cmd_distinguish(args: argparse.Namespace) -> int:
    g1, g2 = _distinguish_inputs(args)
    variant = _engine_variant(args.variant)
    s = _resolve_s(args.k, args.s)
    res = distinguish(g1, g2, variant, args.k, s, max_iterations=args.max_iter)
    _emit({"distinguished": res.distinguished, "at_iteration": res.at_iteration})
    return 0


def _bench_rows(args: argparse.Namespace) -> tuple[list[dict], list[str]]:
    specs = [s.strip() for s in args.variants.split(",") if s.strip()]
    if not specs:
        raise ValidationError(INVALID_SCHEMA, "empty --variants list")
    panel = [(spec, *_parse_bench_spec(spec)) for spec in specs]

    rng = random.Random(args.seed)
    cases: list[tuple[str, Graph, Graph, bool]] = []
    for name in BUILTIN_PAIR_NAMES:
        g1, g2 = builtin_pair(name)
        cases.append((name, g1, g2, False))
        perm = list(range(g1.num_nodes))
        rng.shuffle(perm)
        cases.append((name + "_iso_control", g1, apply_permutation(g1, perm), True))

    rows = []
    for pair_name, ga, gb, is_control in cases:
        for spec, cli_name, k, s in panel:
            t0 = time.perf_counter()
            res = distinguish(ga, gb, VARIANT_NAMES[cli_name], k, s, max_iterations=args.max_iter)
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            rows.append(
                {
                    "pair": pair_name,
                    "variant": cli_name,
                    "k": k,
                    "s": s,
                    "distinguished": res.distinguished,
                    "at_iteration": res.at_iteration,
                    "wall_time_ms": round(elapsed_ms, 3),
                    "control": is_control,
                    "spec": spec,
                }
            )
    return rows, specs


def cmd_bench(args: argparse.Namespace) -> int:
    rows, specs = _bench_rows(args)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for row in rows:
            at_it = "" if row["at_iteration"] is None else str(row["at_iteration"])
            writer.writerow(
                [
                    row["pair"],
                    row["variant"],
                    row["k"],
                    row["s"],
                    "true" if row["distinguished"] else "false",
                    at_it,
                    row["wall_time_ms"],
                ]
            )
        sys.stdout.write(buf.getvalue())
        return 0
    totals = {}
    for spec in specs:
        mine = [r for r in rows if r["spec"] == spec]
        totals[spec] = {
            "pairs_distinguished": sum(
                1 for r in mine if not r["control"] and r["distinguished"]
            ),
            "controls_distinguished": sum(
                1 for r in mine if r["control"] and r["distinguished"]
            ),
        }
    _emit({"suite": args.suite, "seed": args.seed, "rows": rows, "totals": totals})
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    graph = _read_graph(args.graph)
    variant = _engine_variant(args.variant)
    s = _resolve_s(args.k, args.s)
    report = simulate_and_compare(
        graph, args.k, s, variant, t_layers=args.layers, b=args.b
    )
    doc = report.to_dict()
    doc["pass"] = bool(report.all_equal and report.max_attention_error <= args.tol)
    _emit(doc)
    return 0 if doc["pass"] else 1


def cmd_pe(args: argparse.Namespace) -> int:
    graph = _read_graph(args.graph)
    source = "normalized_laplacian" if args.normalized else "laplacian"
    dec = eigh(laplacian(graph, normalized=args.normalized), source=source)
    count = args.eig_count if args.eig_count is not None else graph.num_nodes
    eps = None if args.epsilon is None else arithmetic_epsilon(count, args.epsilon)
    params = EncoderParams.seeded(args.seed, count, args.dim, epsilon=eps)
    if args.kind == "lpe":
        rows = lpe(dec, params)
    else:
        rank = args.rank_m if args.rank_m is not None else graph.num_nodes
        rows = spe(dec, params, rank)
    _emit(
        {
            "kind": args.kind,
            "seed": args.seed,
            "eig_count": count,
            "out_dim": args.dim,
            "rows": [[float(x) for x in row] for row in rows],
        }
    )
    return 0


def cmd_verify_identifying(args: argparse.Namespace) -> int:
    graph = _read_graph(args.graph)
    targets = identifying_targets(graph, normalized=args.normalized)
    node = check_identifying(targets.p_node, targets.w_q_node, targets.w_k_node, graph, "node")
    adj = check_identifying(targets.p_adj, targets.w_q_adj, targets.w_k_adj, graph, "adjacency")
    doc = {
        "node": {
            "passed": node.passed,
            "margin": node.margin,
            "rows_failed": list(node.rows_failed),
        },
        "adjacency": {
            "passed": adj.passed,
            "margin": adj.margin,
            "rows_failed": list(adj.rows_failed),
        },
        "pass": node.passed and adj.passed,
    }
    _emit(doc)
    return 0 if doc["pass"] else 1


def cmd_tokens(args: argparse.Namespace) -> int:
    graph = _read_graph(args.graph)
    s = _resolve_s(args.k, args.s)
    cfg = TokenizerConfig(
        k=args.k,
        s=s,
        dim=args.dim,
        pe_kind=args.pe,
        seed=args.seed,
        eig_count=args.eig_count,
        rank_m=args.rank_m,
        normalized=args.normalized,
        atp_from_edges=args.edges_atp,
    )
    tm = node_tokens(graph, cfg) if args.k == 1 else tuple_tokens(graph, cfg)
    doc = tm.to_dict()
    doc["token_count"] = tm.num_rows
    _emit(doc)
    return 0


def cmd_pair(args: argparse.Namespace) -> int:
    g1, g2 = builtin_pair(args.name)
    _emit({"name": args.name, "first": graph_to_dict(g1), "second": graph_to_dict(g2)})
    return 0


def _build_parser() -> _Parser:
    shared = _Parser(add_help=False)
    shared.add_argument("--seed", type=int, default=0, help="seed for every derived randomness")
    shared.add_argument(
        "--b", type=float, default=DEFAULT_TEMPERATURE, help="attention inverse temperature"
    )
    shared.add_argument("--tol", type=float, default=1e-6, help="verification tolerance")

    parser = _Parser(prog="wlsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    variant_choices = tuple(sorted(VARIANT_NAMES))

    p = sub.add_parser("refine", parents=[shared], help="run refinement to its stable partition")
    p.add_argument("--graph", required=True, help="path to a graph JSON file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=int, default=None, help="distinct-node bound, defaults to k")
    p.add_argument("--variant", required=True, choices=variant_choices)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITERATIONS)
    p.add_argument("--out", default=None, help="write the run to this file instead of stdout")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("distinguish", parents=[shared], help="compare two graphs by refinement")
    p.add_argument("--g1", default=None, help="path to the first graph")
    p.add_argument("--g2", default=None, help="path to the second graph")
    p.add_argument("--pair", default=None, choices=BUILTIN_PAIR_NAMES, help="use a builtin pair")
    p.add_argument("--variant", required=True, choices=variant_choices)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITERATIONS)
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("bench", parents=[shared], help="verdict table over the builtin pairs")
    p.add_argument("--suite", default="builtin", choices=("builtin",))
    p.add_argument(
        "--variants",
        default=DEFAULT_BENCH_VARIANTS,
        help="comma list of variant[:k[:s]] entries; '1wl' means kwl:1:1",
    )
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITERATIONS)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser(
        "simulate", parents=[shared], help="replay refinement with attention layers and compare"
    )
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--variant", default="kwl", choices=variant_choices)
    p.add_argument(
        "--layers", type=int, default=None, help="rounds to replay, defaults to the stable count"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pe", parents=[shared], help="positional encodings for a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", default="lpe", choices=("lpe", "spe"))
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--eig-count", type=int, default=None)
    p.add_argument("--rank-m", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None, help="eigenvalue separation step")
    p.add_argument("--normalized", action="store_true")
    p.set_defaults(func=cmd_pe)

    p = sub.add_parser(
        "verify-identifying",
        parents=[shared],
        help="check that spectral scores point at nodes and neighborhoods",
    )
    p.add_argument("--graph", required=True)
    p.add_argument("--normalized", action="store_true")
    p.set_defaults(func=cmd_verify_identifying)

    p = sub.add_parser("tokens", parents=[shared], help="tokenize a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--pe", default="lpe", choices=("lpe", "spe", "raw_targets"))
    p.add_argument("--eig-count", type=int, default=None)
    p.add_argument("--rank-m", type=int, default=None)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--edges-atp", action="store_true", help="build atomic types from edge vectors")
    p.set_defaults(func=cmd_tokens)

    p = sub.add_parser("pair", parents=[shared], help="print a builtin graph pair")
    p.add_argument("--name", required=True)
    p.set_defaults(func=cmd_pair)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _print_error(exc.code, exc.message)
        return 2
    except LimitError as exc:
        _print_error(exc.code, exc.message)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
