"""Command-line front end for reproducible experiments.

Subcommands: ``gen`` (decay matrices, cluster Hamiltonians with point
clouds), ``multiply`` (occluded product with stats JSON), ``sp2``
(spectral projection solve with report JSON), ``sweep`` (tau / size / PE
sweeps to CSV), and ``rerun`` (replay a recorded manifest).  Every command
writes a ``<output>.manifest.json`` capturing arguments and seeds;
replaying a manifest reproduces bitwise-identical numerical outputs (wall
times excluded).

Exit codes: 0 on success (including flagged non-convergence, which is
reported data), 2 on argument or input validation errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .chare_sim import (CostModel, amdahl_fit, assign_static, build_chare_graph,
                        greedy_comm_balance, parallel_efficiency,
                        simulate_iteration)
from .kernel import WORKERS_ENV_VAR, convolution_census, multiply
from .matgen import DecaySpec, gen_cluster_hamiltonian, gen_decay_matrix
from .ordering import (apply_row_permutation, expand_row_permutation,
                       reorder_permutation)
from .quadtree import build_from_dense, to_dense
from .sp2 import energy_error, idempotency_error, sp2_solve

__all__ = ["main"]


def _add_tree_args(p, block_default=16):
    p.add_argument("--block-size", type=int, default=block_default,
                   help="dense leaf block edge (power of two)")
    p.add_argument("--chunk-size", type=int, default=None,
                   help="distribution chunk edge (power of two, default n_padded/8)")


def _add_exec_args(p):
    p.add_argument("--mode", choices=["serial", "tasked"], default="serial")
    p.add_argument("--workers", type=int, default=None,
                   help=f"tasked-mode worker count (default ${WORKERS_ENV_VAR} "
                        "or cpu count)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="fix the accumulation order for bit-reproducible output")


def _parse_float_list(text: str) -> list:
    return [float(x) for x in text.split(",") if x]


def _parse_int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x]


def _load_tree(path, block_size, chunk_size):
    return build_from_dense(io.read_matrix_market(path), block_size, chunk_size)


def _write_manifest_for(out_path, args, command: str, seeds: dict,
                        inputs: list, outputs: list) -> None:
    params = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = io.build_manifest(command, params, seeds, inputs, outputs,
                                 argv=list(args._argv))
    io.write_manifest(str(out_path) + ".manifest.json", manifest)


# -- gen ----------------------------------------------------------------------

def _cmd_gen_decay(args) -> int:
    spec = DecaySpec(kind=args.kind, c=args.c, lam=args.lam, seed=args.seed)
    matrix = gen_decay_matrix(args.n, spec)
    io.write_matrix_market(args.out, matrix, fmt=args.format)
    _write_manifest_for(args.out, args, "gen decay", {"seed": args.seed},
                        [], [args.out])
    print(f"wrote {args.out}: {args.n}x{args.n} {args.kind} decay matrix")
    return 0


def _cmd_gen_cluster(args) -> int:
    f, cloud, n_occ = gen_cluster_hamiltonian(
        args.molecules, rows_per_molecule=args.rows_per_molecule,
        box_density=args.density, seed=args.seed)
    outputs = [args.out]
    if args.order != "none":
        if args.order == "hilbert":
            perm = reorder_permutation(cloud, order=args.hilbert_order)
        else:
            perm = np.random.default_rng(args.seed + 1).permutation(cloud.n_points)
        row_perm = expand_row_permutation(perm, cloud.multiplicity)
        f = apply_row_permutation(f, row_perm)
        cloud.points = cloud.points[perm]
    io.write_matrix_market(args.out, f, fmt=args.format)
    if args.cloud_out:
        io.write_xyz(args.cloud_out, cloud, comment=f"molecule centers seed={args.seed}")
        outputs.append(args.cloud_out)
    _write_manifest_for(args.out, args, "gen cluster", {"seed": args.seed},
                        [], outputs)
    n = args.molecules * args.rows_per_molecule
    print(f"wrote {args.out}: {n}x{n} cluster Hamiltonian, n_occ={n_occ}, "
          f"order={args.order}")
    return 0


# -- multiply -----------------------------------------------------------------

def _cmd_multiply(args) -> int:
    a = _load_tree(args.a, args.block_size, args.chunk_size)
    b = _load_tree(args.b, args.block_size, args.chunk_size)
    c, stats = multiply(a, b, args.tau, mode=args.mode,
                        deterministic=args.deterministic, workers=args.workers)
    io.write_matrix_market(args.out, to_dense(c), fmt=args.format)
    outputs = [args.out]
    if args.stats:
        io.write_json(args.stats, stats.to_json_dict())
        outputs.append(args.stats)
    _write_manifest_for(args.out, args, "multiply", {}, [args.a, args.b], outputs)
    print(f"wrote {args.out}: leaf_products={stats.leaf_products} "
          f"flops~{stats.flop_estimate}")
    return 0


# -- sp2 ----------------------------------------------------------------------

def _cmd_sp2(args) -> int:
    f = _load_tree(args.f, args.block_size, args.chunk_size)
    p, state = sp2_solve(f, args.n_occ, args.tau, max_iter=args.max_iter,
                         idem_tol=args.idem_tol, mode=args.mode,
                         workers=args.workers)
    io.write_matrix_market(args.out, to_dense(p), fmt=args.format)
    outputs = [args.out]
    if args.report:
        idem = idempotency_error(p, mode=args.mode, workers=args.workers)
        io.write_json(args.report, state.to_report_dict(idem_error=idem))
        outputs.append(args.report)
    _write_manifest_for(args.out, args, "sp2", {}, [args.f], outputs)
    flag = "converged" if state.converged else "NOT CONVERGED"
    print(f"wrote {args.out}: {flag} after {state.iteration} iterations, "
          f"trace={state.trace_history[-1]:.6f}")
    return 0


# -- sweeps -------------------------------------------------------------------

def _cmd_sweep_tau(args) -> int:
    f = _load_tree(args.f, args.block_size, args.chunk_size)
    p_ref, ref_state = sp2_solve(f, args.n_occ, 0.0, max_iter=args.max_iter,
                                 mode=args.mode, workers=args.workers)
    rows = []
    for tau in args.taus:
        p_tau, state = sp2_solve(f, args.n_occ, tau, max_iter=args.max_iter,
                                 mode=args.mode, workers=args.workers)
        err = energy_error(f, p_ref, p_tau, mode=args.mode, workers=args.workers)
        census = convolution_census(p_tau, p_tau, tau)
        rows.append({
            "tau": tau,
            "energy_error": err,
            "abs_energy_error": abs(err),
            "idempotency_error": idempotency_error(p_tau, mode=args.mode,
                                                   workers=args.workers),
            "iterations": state.iteration,
            "converged": state.converged,
            "leaf_products": census.leaf_products,
        })
    _write_csv(args.out, rows)
    _write_manifest_for(args.out, args, "sweep tau", {}, [args.f], [args.out])
    print(f"wrote {args.out}: {len(rows)} tolerance points "
          f"(reference solve: {ref_state.iteration} iterations)")
    return 0


def _cmd_sweep_size(args) -> int:
    rows = []
    prev = None
    for n in args.sizes:
        spec = DecaySpec(kind=args.kind, c=args.c, lam=args.lam, seed=args.seed)
        tree = build_from_dense(gen_decay_matrix(n, spec), args.block_size,
                                args.chunk_size)
        census = convolution_census(tree, tree, args.tau)
        ratio = census.leaf_products / prev if prev else float("nan")
        rows.append({"n": n, "leaf_products": census.leaf_products,
                     "flop_estimate": census.flop_estimate,
                     "ratio_vs_prev": ratio})
        prev = census.leaf_products
    _write_csv(args.out, rows)
    _write_manifest_for(args.out, args, "sweep size", {"seed": args.seed},
                        [], [args.out])
    print(f"wrote {args.out}: {len(rows)} sizes at tau={args.tau}")
    return 0


def _cmd_sweep_pe(args) -> int:
    if args.inject_ts is not None:
        if args.inject_tp is None:
            raise ValueError("--inject-ts requires --inject-tp")
        times = {p: args.inject_ts + args.inject_tp / p for p in args.pes}
        t1 = args.inject_ts + args.inject_tp
        messages = {p: 0 for p in args.pes}
    else:
        if not args.f:
            raise ValueError("sweep pe needs either --inject-ts/--inject-tp or --f")
        f = _load_tree(args.f, args.block_size, args.chunk_size)
        graph = build_chare_graph(f, f, args.tau)
        cm = CostModel()
        base = simulate_iteration(graph, assign_static(graph, 1), cm)
        t1 = base.makespan
        times, messages = {}, {}
        for p in args.pes:
            static = simulate_iteration(graph, assign_static(graph, p), cm)
            if args.balance == "greedy":
                balanced = greedy_comm_balance(graph, static, p)
                report = simulate_iteration(graph, balanced, cm)
            else:
                report = static
            times[p] = report.makespan
            messages[p] = report.cross_pe_messages
    rows = [{"P": p, "T": times[p],
             "E": parallel_efficiency(t1, times[p], p),
             "messages": messages[p]} for p in args.pes]
    _write_csv(args.out, rows)
    outputs = [args.out]
    if args.fit_out:
        fit = amdahl_fit([(r["P"], r["T"]) for r in rows])
        io.write_json(args.fit_out, fit.to_json_dict())
        outputs.append(args.fit_out)
    _write_manifest_for(args.out, args, "sweep pe", {},
                        [args.f] if args.f else [], outputs)
    print(f"wrote {args.out}: {len(rows)} core counts")
    return 0


def _write_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# -- rerun --------------------------------------------------------------------

def _cmd_rerun(args) -> int:
    manifest = io.read_manifest(args.manifest)
    argv = manifest["argv"]
    print(f"replaying: spamm {' '.join(argv)}")
    return main(argv)


# -- parser -------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spamm",
        description="Occluded quadtree multiply, SP2 projection, and "
                    "decomposition-simulator experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic inputs")
    gen_sub = gen.add_subparsers(dest="generator", required=True)

    g_decay = gen_sub.add_parser("decay", help="index-separation decay matrix")
    g_decay.add_argument("--n", type=int, required=True)
    g_decay.add_argument("--kind", choices=["exponential", "algebraic"],
                         default="exponential")
    g_decay.add_argument("--c", type=float, default=1.0)
    g_decay.add_argument("--lam", type=float, default=0.7)
    g_decay.add_argument("--seed", type=int, default=0)
    g_decay.add_argument("--format", choices=["auto", "array", "coordinate"],
                         default="auto")
    g_decay.add_argument("--out", required=True)
    g_decay.set_defaults(func=_cmd_gen_decay)

    g_cluster = gen_sub.add_parser("cluster", help="molecule-cluster Hamiltonian")
    g_cluster.add_argument("--molecules", type=int, required=True)
    g_cluster.add_argument("--rows-per-molecule", type=int, default=25)
    g_cluster.add_argument("--density", type=float, default=1.0)
    g_cluster.add_argument("--seed", type=int, default=0)
    g_cluster.add_argument("--order", choices=["hilbert", "random", "none"],
                           default="hilbert",
                           help="row ordering applied to the output matrix")
    g_cluster.add_argument("--hilbert-order", type=int, default=10,
                           help="curve resolution in bits per axis")
    g_cluster.add_argument("--format", choices=["auto", "array", "coordinate"],
                           default="auto")
    g_cluster.add_argument("--out", required=True)
    g_cluster.add_argument("--cloud-out", default=None,
                           help="also write molecule centers as XYZ")
    g_cluster.set_defaults(func=_cmd_gen_cluster)

    mul = sub.add_parser("multiply", help="occluded product of two matrices")
    mul.add_argument("a")
    mul.add_argument("b")
    mul.add_argument("--tau", type=float, default=0.0)
    _add_tree_args(mul)
    _add_exec_args(mul)
    mul.add_argument("--format", choices=["auto", "array", "coordinate"],
                     default="auto")
    mul.add_argument("--out", required=True)
    mul.add_argument("--stats", default=None, help="write occlusion stats JSON")
    mul.set_defaults(func=_cmd_multiply)

    sp2 = sub.add_parser("sp2", help="spectral projection solve")
    sp2.add_argument("f")
    sp2.add_argument("--n-occ", type=int, required=True)
    sp2.add_argument("--tau", type=float, default=0.0)
    sp2.add_argument("--max-iter", type=int, default=100)
    sp2.add_argument("--idem-tol", type=float, default=1e-9)
    _add_tree_args(sp2)
    _add_exec_args(sp2)
    sp2.add_argument("--format", choices=["auto", "array", "coordinate"],
                     default="auto")
    sp2.add_argument("--out", required=True)
    sp2.add_argument("--report", default=None, help="write solve report JSON")
    sp2.set_defaults(func=_cmd_sp2)

    sweep = sub.add_parser("sweep", help="experiment sweeps to CSV")
    sweep_sub = sweep.add_subparsers(dest="sweep_kind", required=True)

    s_tau = sweep_sub.add_parser("tau", help="energy error vs tolerance")
    s_tau.add_argument("--f", required=True)
    s_tau.add_argument("--n-occ", type=int, required=True)
    s_tau.add_argument("--taus", type=_parse_float_list,
                       default=[1e-6, 1e-8, 1e-10])
    s_tau.add_argument("--max-iter", type=int, default=100)
    _add_tree_args(s_tau)
    _add_exec_args(s_tau)
    s_tau.add_argument("--out", required=True)
    s_tau.set_defaults(func=_cmd_sweep_tau)

    s_size = sweep_sub.add_parser("size", help="retained products vs size")
    s_size.add_argument("--sizes", type=_parse_int_list,
                        default=[512, 1024, 2048, 4096])
    s_size.add_argument("--tau", type=float, default=1e-8)
    s_size.add_argument("--kind", choices=["exponential", "algebraic"],
                        default="exponential")
    s_size.add_argument("--c", type=float, default=1.0)
    s_size.add_argument("--lam", type=float, default=0.7)
    s_size.add_argument("--seed", type=int, default=0)
    _add_tree_args(s_size)
    s_size.add_argument("--out", required=True)
    s_size.set_defaults(func=_cmd_sweep_size)

    s_pe = sweep_sub.add_parser("pe", help="simulated scaling over core counts")
    s_pe.add_argument("--pes", type=_parse_int_list,
                      default=[24 * 2 ** m for m in range(11)])
    s_pe.add_argument("--inject-ts", type=float, default=None,
                      help="generate exact T = ts + tp/P points instead of simulating")
    s_pe.add_argument("--inject-tp", type=float, default=None)
    s_pe.add_argument("--f", default=None, help="workload matrix to simulate")
    s_pe.add_argument("--tau", type=float, default=1e-8)
    s_pe.add_argument("--balance", choices=["static", "greedy"], default="greedy")
    _add_tree_args(s_pe)
    s_pe.add_argument("--out", required=True)
    s_pe.add_argument("--fit-out", default=None, help="write Amdahl fit JSON")
    s_pe.set_defaults(func=_cmd_sweep_pe)

    rerun = sub.add_parser("rerun", help="replay a recorded manifest")
    rerun.add_argument("manifest")
    rerun.set_defaults(func=_cmd_rerun)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
